#include <cstdlib>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/config.hpp"
#include "antigan/data.hpp"
#include "antigan/errors.hpp"
#include "antigan/harness.hpp"
#include "antigan/image_io.hpp"
#include "antigan/obfuscation.hpp"

namespace {

using antigan::harness::ExperimentConfig;

// Command-line overrides; anything left unset keeps the config file value.
struct Overrides {
  std::string config_file;
  std::optional<std::string> dataset;
  std::optional<std::string> data_dir;
  std::optional<int64_t> train_limit;
  std::optional<int64_t> test_limit;
  std::optional<bool> cifar100_coarse;
  std::optional<std::uint64_t> data_seed;
  std::optional<double> expected_variance;
  std::optional<int> window_size;
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<std::uint64_t> mixup_seed;
  std::optional<int> gan_epochs;
  std::optional<int> gan_batch;
  std::optional<double> gan_lr;
  std::optional<std::uint64_t> gan_seed;
  std::optional<std::string> extractor_weights;
  std::optional<std::string> extractor_sha256;
  std::optional<int> clients;
  std::optional<int> rounds;
  std::optional<int> local_epochs;
  std::optional<double> client_fraction;
  std::optional<double> upload_fraction;
  std::optional<double> fed_lr;
  std::optional<int> fed_batch;
  std::optional<std::uint64_t> fed_seed;
  std::optional<int> attack_epochs;
  std::optional<int> reconstructions;
  std::optional<bool> conditional;
  std::optional<int> snapshot_every;
  std::optional<std::uint64_t> attack_seed;
  std::optional<std::vector<int64_t>> attack_classes;
  std::optional<std::string> run_dir;
};

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--dataset", o.dataset, "mnist, cifar10 or cifar100");
  app->add_option("--data-dir", o.data_dir, "dataset root (default $ANTIGAN_DATA_DIR, ./data)");
  app->add_option("--train-limit", o.train_limit);
  app->add_option("--test-limit", o.test_limit);
  app->add_flag("--cifar100-coarse", o.cifar100_coarse, "use the 20 CIFAR-100 superclasses");
  app->add_option("--data-seed", o.data_seed);
  app->add_option("--v-e", o.expected_variance, "expected window variance");
  app->add_option("--window-size", o.window_size);
  app->add_option("--lambda", o.lambda);
  app->add_option("--mu", o.mu);
  app->add_option("--mixup-seed", o.mixup_seed);
  app->add_option("--gan-epochs", o.gan_epochs);
  app->add_option("--gan-batch", o.gan_batch);
  app->add_option("--gan-lr", o.gan_lr);
  app->add_option("--gan-seed", o.gan_seed);
  app->add_option("--extractor-weights", o.extractor_weights,
                  "raw float32 64x3x7x7 stem weights");
  app->add_option("--extractor-sha256", o.extractor_sha256);
  app->add_option("--clients", o.clients);
  app->add_option("--rounds", o.rounds);
  app->add_option("--local-epochs", o.local_epochs);
  app->add_option("--client-fraction", o.client_fraction);
  app->add_option("--upload-fraction", o.upload_fraction);
  app->add_option("--fed-lr", o.fed_lr);
  app->add_option("--fed-batch", o.fed_batch);
  app->add_option("--fed-seed", o.fed_seed);
  app->add_option("--attack-epochs", o.attack_epochs);
  app->add_option("--reconstructions", o.reconstructions);
  app->add_flag("--conditional", o.conditional, "one label-conditioned attacker GAN");
  app->add_option("--snapshot-every", o.snapshot_every);
  app->add_option("--attack-seed", o.attack_seed);
  app->add_option("--attack-classes", o.attack_classes)->delimiter(',');
  app->add_option("--run-dir", o.run_dir, "artifact directory");
}

template <class T, class U>
void set(const std::optional<T>& v, U& out) {
  if (v) out = *v;
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config_file.empty()
                           ? antigan::harness::default_config(o.dataset.value_or("mnist"))
                           : antigan::harness::load_config(o.config_file);
  set(o.dataset, c.dataset);
  set(o.data_dir, c.data_dir);
  set(o.train_limit, c.train_limit);
  set(o.test_limit, c.test_limit);
  set(o.cifar100_coarse, c.cifar100_coarse);
  set(o.data_seed, c.data_seed);
  set(o.expected_variance, c.expected_variance);
  set(o.window_size, c.window_size);
  set(o.lambda, c.lambda);
  set(o.mu, c.mu);
  set(o.mixup_seed, c.mixup_seed);
  set(o.gan_epochs, c.gan.epochs);
  set(o.gan_batch, c.gan.batch_size);
  set(o.gan_lr, c.gan.learning_rate);
  set(o.gan_seed, c.gan.seed);
  if (o.extractor_weights) {
    c.gan.extractor.source = antigan::gan::FeatureExtractorSpec::Source::kWeightFile;
    c.gan.extractor.weight_file = *o.extractor_weights;
  }
  set(o.extractor_sha256, c.gan.extractor.weight_sha256);
  set(o.clients, c.federated.num_clients);
  set(o.rounds, c.federated.rounds);
  set(o.local_epochs, c.federated.local_epochs);
  set(o.client_fraction, c.federated.client_fraction);
  set(o.upload_fraction, c.federated.upload_fraction);
  set(o.fed_lr, c.federated.learning_rate);
  set(o.fed_batch, c.federated.batch_size);
  set(o.fed_seed, c.federated.seed);
  set(o.attack_epochs, c.attack.epochs);
  set(o.reconstructions, c.attack.reconstructions);
  set(o.conditional, c.attack.conditional);
  set(o.snapshot_every, c.attack.snapshot_every);
  set(o.attack_seed, c.attack.seed);
  set(o.attack_classes, c.attack_classes);
  set(o.run_dir, c.run_dir);
  c.validate();
  return c;
}

void print_records(const std::vector<antigan::harness::MetricsRecord>& records) {
  fmt::print("{:<13} {:>6} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "branch", "v_e", "mu", "a_X",
             "a_Xhat", "ADR", "sim", "att_var");
  for (const auto& r : records) {
    if (r.status != "ok") {
      fmt::print("{:<13} {:>6.2f} {:>5.2f} failed: {}\n", to_string(r.branch),
                 r.expected_variance, r.mu, r.error);
      continue;
    }
    fmt::print("{:<13} {:>6.2f} {:>5.2f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n",
               to_string(r.branch), r.expected_variance, r.mu, r.a_x, r.a_xhat, r.adr,
               r.mean_attack_similarity(), r.mean_attack_window_variance());
  }
}

struct DemoOptions {
  std::string data_dir;
  int index = 0;
  std::vector<double> values{0.5, 0.8};
  int window_size = 5;
  int max_steps = 5000;
  double jitter = 1e-3;
  std::uint64_t seed = 5;
  std::string out = "obfuscate_demo.png";
};

int obfuscate_demo(const DemoOptions& d) {
  antigan::LoadOptions lo;
  lo.root = antigan::resolve_data_root(d.data_dir);
  lo.limit = d.index + 1;
  const auto ds = antigan::load_dataset("mnist", antigan::Split::kTest, lo);
  const auto img = ds.images().pixels()[d.index].to(torch::kFloat64).contiguous();
  const std::vector<double> pixels(img.data_ptr<double>(), img.data_ptr<double>() + img.numel());
  const int c = static_cast<int>(img.size(0));
  const int h = static_cast<int>(img.size(1));
  const int w = static_cast<int>(img.size(2));
  const antigan::obf::ImageView<double> view{pixels, c, h, w};
  const auto grid = antigan::obf::make_grid(h, w, d.window_size);

  std::vector<torch::Tensor> tiles{img.to(torch::kFloat32)};
  fmt::print("original: mean window variance {:.4f}\n",
             antigan::obf::mean_window_variance(view, grid));
  for (double v : d.values) {
    antigan::obf::PixelOptimizerOptions opts;
    opts.max_steps = d.max_steps;
    opts.seed = d.seed;
    opts.initial_jitter = d.jitter;
    const auto r = antigan::obf::obfuscate_pixels(view, {v, d.window_size}, opts);
    const antigan::obf::ImageView<double> out_view{r.image, c, h, w};
    const double mwv = antigan::obf::mean_window_variance(out_view, grid);
    double dev = 0.0;
    for (const auto& win : grid.windows()) {
      dev += std::abs(antigan::obf::window_variance(out_view, win) - v);
    }
    dev /= static_cast<double>(grid.size());
    fmt::print("v_e={:.2f}: mean window variance {:.4f}, mean |var - v_e| {:.4f}, {} steps{}\n",
               v, mwv, dev, r.steps, r.converged ? "" : " (not converged)");
    tiles.push_back(torch::tensor(r.image, torch::kFloat64).view({c, h, w}).to(torch::kFloat32));
  }
  antigan::io::write_png_grid(d.out, antigan::ImageBatch(torch::stack(tiles)),
                              static_cast<int>(tiles.size()));
  fmt::print("wrote {}\n", d.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"GAN-obfuscation defense experiments for federated training"};
  app.require_subcommand(1);

  Overrides ablation_o;
  auto* ablation = app.add_subcommand("ablation", "run all five ablation branches");
  add_config_flags(ablation, ablation_o);

  Overrides sweep_o;
  std::string sweep_param = "mu";
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "sweep v_e or mu on the full branch");
  add_config_flags(sweep, sweep_o);
  sweep->add_option("--param", sweep_param, "v_e or mu")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->delimiter(',')
      ->required();

  Overrides attack_o;
  std::string branch = "full";
  auto* attack = app.add_subcommand("attack", "run one branch and report the attack on it");
  add_config_flags(attack, attack_o);
  attack->add_option("--branch", branch, "full, no_obf, no_extractor, no_mixup, no_defense");

  DemoOptions demo;
  auto* obf_demo = app.add_subcommand("obfuscate-demo", "pixel-space obfuscation of one digit");
  obf_demo->add_option("--data-dir", demo.data_dir);
  obf_demo->add_option("--index", demo.index, "MNIST test image index");
  obf_demo->add_option("--values", demo.values, "expected variances")->delimiter(',');
  obf_demo->add_option("--window-size", demo.window_size);
  obf_demo->add_option("--max-steps", demo.max_steps);
  obf_demo->add_option("--jitter", demo.jitter, "initial uniform noise amplitude");
  obf_demo->add_option("--seed", demo.seed);
  obf_demo->add_option("--out", demo.out, "output PNG");

  CLI11_PARSE(app, argc, argv);

  try {
    antigan::harness::ExperimentRunner runner;
    if (ablation->parsed()) {
      print_records(antigan::harness::run_ablation(resolve(ablation_o), runner));
    } else if (sweep->parsed()) {
      const auto p = antigan::harness::parse_sweep_parameter(sweep_param);
      print_records(antigan::harness::run_sweep(resolve(sweep_o), p, sweep_values, runner));
    } else if (attack->parsed()) {
      auto c = resolve(attack_o);
      c.branch = antigan::harness::parse_branch(branch);
      const auto r = runner.run_branch(c);
      print_records({r});
      for (const auto& [label, sim] : r.attack_similarity) {
        fmt::print("class {}: similarity {:.4f}, window variance {:.4f}\n", label, sim,
                   r.attack_window_variance.at(label));
      }
    } else if (obf_demo->parsed()) {
      return obfuscate_demo(demo);
    }
  } catch (const antigan::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
