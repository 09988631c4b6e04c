#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "antigan/config.hpp"
#include "antigan/data.hpp"

namespace antigan::harness {

// (a_x - a_xhat) / a_x. Negative when training on the defended data helps.
// Throws InvalidArgumentError when a_x is zero or either accuracy is outside
// [0, 1].
double compute_adr(double a_x, double a_xhat);

struct MetricsRecord {
  Branch branch = Branch::kFull;
  std::string dataset;
  double expected_variance = 0.0;
  double mu = 0.0;
  double lambda = 0.0;
  double a_x = 0.0;     // baseline accuracy, trained on X
  double a_xhat = 0.0;  // accuracy of the branch's federated model
  double adr = 0.0;
  // Mean 5x5 window variance of the real set and of the defender's X'.
  // NaN when the branch has no generator.
  double real_window_variance = 0.0;
  double generated_window_variance = 0.0;
  std::map<int64_t, double> attack_similarity;
  std::map<int64_t, double> attack_window_variance;
  std::string status = "ok";
  std::string error;

  double mean_attack_similarity() const;
  double mean_attack_window_variance() const;
};

std::string metrics_csv(std::span<const MetricsRecord> records);
void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsRecord> records);

// Runs branches and keeps the expensive intermediate products (datasets,
// baseline accuracy, defender generators) so branches sharing a
// configuration reuse them. Cached products are pure functions of the
// config fields they are keyed on, so reuse does not change any metric.
class ExperimentRunner {
 public:
  ExperimentRunner();
  ~ExperimentRunner();
  ExperimentRunner(const ExperimentRunner&) = delete;
  ExperimentRunner& operator=(const ExperimentRunner&) = delete;

  // Executes one branch end to end. Always evaluates on the real test split.
  // On failure writes a failure record to the run directory and rethrows.
  MetricsRecord run_branch(const ExperimentConfig& config);

  // Diagnostics for tests: how many defender GANs / baselines were trained.
  int gans_trained() const;
  int baselines_trained() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

MetricsRecord run_branch(const ExperimentConfig& config);

// All five branches on shared seeds, in the order full, no_obf, no_extractor,
// no_mixup, no_defense; writes `<run_dir>/ablation.csv` when run_dir is set.
std::vector<MetricsRecord> run_ablation(const ExperimentConfig& base,
                                        ExperimentRunner& runner);

enum class SweepParameter { kExpectedVariance, kMu };
SweepParameter parse_sweep_parameter(const std::string& name);
std::string to_string(SweepParameter p);

// One full-branch run per value. The v_e sweep pins mu at 0.6 and the mu
// sweep pins v_e at 0.7. A failing point yields a record with status
// "failed" and the sweep moves on. Writes `<run_dir>/sweep_<param>.csv`.
std::vector<MetricsRecord> run_sweep(const ExperimentConfig& base, SweepParameter parameter,
                                     std::span<const double> values,
                                     ExperimentRunner& runner);

}  // namespace antigan::harness
