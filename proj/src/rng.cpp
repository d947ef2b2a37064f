// SPDX-License-Identifier: Apache-2.0

#include "datprl/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace datprl {

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string &state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng.engine_;
  if (is.fail()) throw std::invalid_argument("malformed RNG state");
  return rng;
}

} // namespace datprl
