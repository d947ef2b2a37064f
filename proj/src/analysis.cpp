// SPDX-License-Identifier: Apache-2.0

#include "datprl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "datprl/ops.hpp"

namespace datprl {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

Matrix cosine_matrix(const std::vector<std::vector<double>> &rows) {
  Matrix m(rows.size(), std::vector<double>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) m[i][j] = cosine(rows[i], rows[j]);
  return m;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_file(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string histogram_csv(const std::vector<SelectionHistogram> &h) {
  std::string out = "domain,task,samples";
  for (std::size_t i = 0; i < h.front().counts.size(); ++i) out += ",prompt_" + std::to_string(i);
  out += "\n";
  for (const auto &row : h) {
    out += std::string(to_string(row.domain)) + "," + std::string(to_string(row.task)) + "," +
           std::to_string(row.samples);
    for (auto c : row.counts) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::string matrix_csv(const Matrix &m) {
  std::string out = "prompt";
  for (std::size_t j = 0; j < m.size(); ++j) out += ",prompt_" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += "prompt_" + std::to_string(i);
    for (double v : m[i]) out += "," + num(v);
    out += "\n";
  }
  return out;
}

} // namespace

Matrix value_similarity(const Tensor &values) {
  const std::size_t n = values.dim(0), stride = values.numel() / n;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i)
    rows.emplace_back(values.data().begin() + i * stride, values.data().begin() + (i + 1) * stride);
  return cosine_matrix(rows);
}

double total_variation(const std::vector<std::size_t> &a, const std::vector<std::size_t> &b) {
  if (a.size() != b.size()) throw std::invalid_argument("total_variation: histogram sizes differ");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (sa == 0.0 || sb == 0.0) throw std::invalid_argument("total_variation: empty histogram");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] / sa - b[i] / sb);
  return 0.5 * tv;
}

std::vector<std::size_t> domain_histogram(const Analytics &a, DomainId domain) {
  std::vector<std::size_t> out;
  for (const auto &h : a.domain_selection) {
    if (h.domain != domain) continue;
    if (out.empty()) out.assign(h.counts.size(), 0);
    for (std::size_t i = 0; i < h.counts.size(); ++i) out[i] += h.counts[i];
  }
  return out;
}

double max_domain_tv(const Analytics &a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.domains.size(); ++i)
    for (std::size_t j = i + 1; j < a.domains.size(); ++j)
      best = std::max(best, total_variation(domain_histogram(a, a.domains[i]), domain_histogram(a, a.domains[j])));
  return best;
}

bool anchors_separated(const Analytics &a) {
  if (a.anchor_cosine.empty()) return false;
  for (std::size_t i = 0; i < a.anchor_cosine.size(); ++i)
    for (std::size_t j = 0; j < a.anchor_cosine[i].size(); ++j)
      if (j != i && a.anchor_cosine[i][j] >= a.anchor_cosine[i][i]) return false;
  return true;
}

Analytics analyze(const RestorationModel &model, const SynthConfig &synth, const TextOracle &oracle,
                  const EvalConfig &eval, AlignPooling pooling) {
  NoGradGuard guard;
  Analytics a;
  a.domains = synth.domains;
  a.gates = model.gates().alphas();
  if (model.task_pool()) a.task_value_similarity = value_similarity(model.task_pool()->values);
  if (model.domain_pool()) a.domain_value_similarity = value_similarity(model.domain_pool()->values);

  for (auto d : synth.domains)
    for (auto t : synth.tasks) {
      if (model.task_pool())
        a.task_selection.push_back({d, t, 0, std::vector<std::size_t>(model.task_pool()->keys.dim(0), 0)});
      if (model.domain_pool())
        a.domain_selection.push_back({d, t, 0, std::vector<std::size_t>(model.domain_pool()->keys.dim(0), 0)});
    }
  std::map<TaskId, std::pair<std::vector<DomainId>, std::vector<std::vector<double>>>> pr_by_task;
  std::vector<std::vector<double>> anchor_sum(synth.domains.size(), std::vector<double>(synth.domains.size(), 0.0));
  std::vector<std::size_t> anchor_n(synth.domains.size(), 0);

  const auto set = evaluation_set(synth, oracle, eval.samples_per_cell, eval.image_size, eval.seed);
  for (const auto &s : set) {
    const auto r = model.forward(s.lq);
    const auto cell = [&](std::vector<SelectionHistogram> &hs) -> SelectionHistogram & {
      for (auto &h : hs)
        if (h.domain == s.domain && h.task == s.task) return h;
      throw std::logic_error("analyze: missing cell");
    };
    if (r.diag.task_selection) {
      auto &h = cell(a.task_selection);
      ++h.samples;
      for (auto i : r.diag.task_selection->indices) ++h.counts[i];
    }
    if (r.diag.domain_selection) {
      auto &h = cell(a.domain_selection);
      ++h.samples;
      for (auto i : r.diag.domain_selection->indices) ++h.counts[i];
    }
    if (r.pr_dt) {
      auto &entry = pr_by_task[s.task];
      entry.first.push_back(s.domain);
      entry.second.emplace_back(r.pr_dt->data().begin(), r.pr_dt->data().end());
    }
    if (r.pr_domain) {
      const auto pooled = pool_tokens(*r.pr_domain, pooling);
      const auto di = static_cast<std::size_t>(std::find(synth.domains.begin(), synth.domains.end(), s.domain) -
                                                synth.domains.begin());
      for (std::size_t j = 0; j < synth.domains.size(); ++j)
        anchor_sum[di][j] += cosine(pooled.data(), oracle.anchor(synth.domains[j]).data());
      ++anchor_n[di];
    }
  }
  for (auto t : synth.tasks) {
    auto it = pr_by_task.find(t);
    if (it == pr_by_task.end()) continue;
    a.pr_similarity.push_back({t, it->second.first, cosine_matrix(it->second.second)});
  }
  if (model.domain_pool()) {
    a.anchor_cosine = anchor_sum;
    for (std::size_t i = 0; i < anchor_sum.size(); ++i)
      for (auto &v : a.anchor_cosine[i]) v /= static_cast<double>(anchor_n[i]);
  }
  return a;
}

void write_analytics(const Analytics &a, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  if (!a.task_selection.empty()) write_file(dir / "task_selection.csv", histogram_csv(a.task_selection));
  if (!a.domain_selection.empty()) write_file(dir / "domain_selection.csv", histogram_csv(a.domain_selection));
  if (!a.task_value_similarity.empty())
    write_file(dir / "task_value_similarity.csv", matrix_csv(a.task_value_similarity));
  if (!a.domain_value_similarity.empty())
    write_file(dir / "domain_value_similarity.csv", matrix_csv(a.domain_value_similarity));

  std::string gates = "layer,alpha\n";
  for (std::size_t l = 0; l < a.gates.size(); ++l) gates += std::to_string(l) + "," + num(a.gates[l]) + "\n";
  write_file(dir / "gates.csv", gates);

  if (!a.pr_similarity.empty()) {
    std::string pr = "task,sample_i,domain_i,sample_j,domain_j,cosine\n";
    for (const auto &t : a.pr_similarity)
      for (std::size_t i = 0; i < t.cosine.size(); ++i)
        for (std::size_t j = 0; j < t.cosine.size(); ++j)
          pr += std::string(to_string(t.task)) + "," + std::to_string(i) + "," +
                std::string(to_string(t.sample_domains[i])) + "," + std::to_string(j) + "," +
                std::string(to_string(t.sample_domains[j])) + "," + num(t.cosine[i][j]) + "\n";
    write_file(dir / "pr_similarity.csv", pr);
  }
  if (!a.anchor_cosine.empty()) {
    std::string ac = "domain";
    for (auto d : a.domains) ac += "," + std::string(to_string(d));
    ac += "\n";
    for (std::size_t i = 0; i < a.anchor_cosine.size(); ++i) {
      ac += std::string(to_string(a.domains[i]));
      for (double v : a.anchor_cosine[i]) ac += "," + num(v);
      ac += "\n";
    }
    write_file(dir / "anchor_cosine.csv", ac);
  }
}

} // namespace datprl
