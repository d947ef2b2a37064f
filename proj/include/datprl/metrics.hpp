// SPDX-License-Identifier: Apache-2.0

#ifndef DATPRL_METRICS_HPP
#define DATPRL_METRICS_HPP

#include "datprl/tensor.hpp"

namespace datprl {

inline constexpr double kPsnrCapDb = 100.0;

/// 10 log10(peak^2 / MSE); capped at 100 dB once MSE < 1e-10.
double psnr(const Tensor &a, const Tensor &b, double peak = 1.0);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), per channel then
/// averaged. C1 = (0.01 peak)^2, C2 = (0.03 peak)^2. Images smaller than the
/// window use a window clipped to the image.
double ssim(const Tensor &a, const Tensor &b, double peak = 1.0);

} // namespace datprl

#endif // DATPRL_METRICS_HPP
