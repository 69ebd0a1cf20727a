#pragma once

// Wall-clock comparison of inference, fine-tuning and per-query optimization.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/pipeline.hpp"

namespace fcs {

struct BenchOptions {
  int trials = 20;
  int warmup = 1;  // untimed runs before each row
  StageConfig stage1 = stage1_defaults();
  StageConfig finetune = stage4_defaults();
};

struct BenchRow {
  std::string name;
  int steps = 0;
  int trials = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

inline BenchRow time_trials(const std::string& name, int steps, int trials, int warmup, const std::function<void()>& fn) {
  if (trials < 1) fail(Errc::invalid_config, "bench needs at least one trial");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  for (int i = 0; i < trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return {name, steps, trials, median, ms.front(), ms.back()};
}

/// Rows: stylize (single pass), finetune (stage 4), stage1 (per-query
/// optimization from a fresh network).
template <typename Scalar>
std::vector<BenchRow> run_bench(const TextStyleNet<Scalar>& net, const std::string& prompt, const std::vector<Image<Scalar>>& pool,
                                const Backends<Scalar>& backends, std::shared_ptr<const StyleDistribution> dist,
                                const BenchOptions& opts) {
  if (pool.empty()) fail(Errc::invalid_input, "bench needs at least one content image");
  std::vector<BenchRow> rows;
  rows.push_back(time_trials("stylize", 0, opts.trials, opts.warmup, [&] {
    const auto out = stylize(net, prompt, pool[0], backends);
    if (out.values.size() == 0) fail(Errc::numeric_error, "empty stylize output");
  }));
  rows.push_back(time_trials("finetune", opts.finetune.steps, opts.trials, opts.warmup,
                             [&] { (void)stage4_finetune(net, prompt, pool[0], backends, dist, opts.finetune); }));
  rows.push_back(time_trials("stage1", opts.stage1.steps, opts.trials, opts.warmup,
                             [&] { (void)stage1_generate_pair(prompt, pool, backends, dist, opts.stage1); }));
  return rows;
}

inline std::string serialize_bench(const std::vector<BenchRow>& rows) {
  std::string out = "name,steps,trials,median_ms,min_ms,max_ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.4f,%.4f,%.4f\n", r.name.c_str(), r.steps, r.trials, r.median_ms, r.min_ms, r.max_ms);
    out += buf;
  }
  return out;
}

}  // namespace fcs
