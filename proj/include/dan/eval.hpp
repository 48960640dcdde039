#ifndef DAN_EVAL_HPP
#define DAN_EVAL_HPP

#include <string>
#include <vector>

#include "dan/metrics.hpp"
#include "dan/network.hpp"

namespace dan {

struct EvalOptions {
  int iterations = 4;
  int shave = -1;  // -1: shave = scale
  bool collect_kernel_errors = true;
};

struct EvalResult {
  MetricReport metrics;
  std::vector<KernelErrorReport> kernel_errors;
  double mean_l1_complete = 0.0;
  double mean_l1_reduced = 0.0;
};

/// Blind evaluation of a manifest directory produced by build_eval_set.
EvalResult evaluate_set(Dan<float>& model, const std::string& set_dir,
                        const EvalOptions& opts);

/// Single Restorer pass with the ground-truth kernels, no iteration.
EvalResult non_blind_eval(Dan<float>& model, const std::string& set_dir,
                          const EvalOptions& opts);

struct SweepRow {
  int iterations = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

std::vector<SweepRow> iteration_sweep(Dan<float>& model, const std::string& set_dir,
                                      int t_min, int t_max, int shave = -1);

struct BenchmarkReport {
  std::size_t param_count = 0;
  std::uint64_t macs = 0;  // analytic multiply-accumulate count for the probe size
  double sec_per_image = 0.0;
  int probe_h = 0, probe_w = 0, iterations = 0;
};

/// Exact parameter count, analytic MAC count for a declared LR input size,
/// and mean wall-clock over n_timing_runs forward passes.
BenchmarkReport benchmark(Dan<float>& model, int lr_h, int lr_w, int iterations,
                          int n_timing_runs = 3);

void write_metric_csv(const std::string& path, const EvalResult& result);
void write_metric_json(const std::string& path, const EvalResult& result,
                       const EvalOptions& opts);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace dan

#endif
