#include "antigan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "antigan/errors.hpp"

namespace antigan::harness {

using nlohmann::json;

std::string to_string(Branch b) {
  switch (b) {
    case Branch::kFull:
      return "full";
    case Branch::kNoObf:
      return "no_obf";
    case Branch::kNoExtractor:
      return "no_extractor";
    case Branch::kNoMixup:
      return "no_mixup";
    case Branch::kNoDefense:
      return "no_defense";
  }
  return "unknown";
}

Branch parse_branch(const std::string& name) {
  for (Branch b : all_branches()) {
    if (to_string(b) == name) return b;
  }
  throw InvalidArgumentError(fmt::format(
      "unknown branch '{}' (expected full, no_obf, no_extractor, no_mixup, no_defense)", name));
}

const std::vector<Branch>& all_branches() {
  static const std::vector<Branch> branches{Branch::kFull, Branch::kNoObf, Branch::kNoExtractor,
                                            Branch::kNoMixup, Branch::kNoDefense};
  return branches;
}

void ExperimentConfig::validate() const {
  if (dataset != "mnist" && dataset != "cifar10" && dataset != "cifar100") {
    throw UnknownDatasetError(fmt::format("unknown dataset '{}'", dataset));
  }
  if (train_limit < 1 || test_limit < 1) {
    throw InvalidArgumentError("train_limit and test_limit must be positive");
  }
  obf::ObfuscationParams{expected_variance, window_size}.validate();
  if (!(lambda >= 0.0)) throw InvalidArgumentError("lambda must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) throw InvalidArgumentError("mu must lie in [0, 1]");
  if (gan.epochs < 0 || gan.batch_size < 1 || !(gan.learning_rate > 0.0)) {
    throw InvalidArgumentError("invalid defender GAN schedule");
  }
  if (attack.epochs < 0 || attack.batch_size < 1 || attack.reconstructions < 1) {
    throw InvalidArgumentError("invalid attacker schedule");
  }
  federated.validate();
}

ExperimentConfig default_config(const std::string& dataset) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.lambda = dataset == "mnist" ? 1000.0 : 100.0;
  c.window_size = 5;
  c.gan.learning_rate = 1e-4;
  c.gan.epochs = 30;
  c.gan.seed = 17;
  c.attack.learning_rate = 1e-4;
  c.federated.num_clients = 4;
  c.federated.rounds = 20;
  c.federated.seed = 19;
  c.attack.seed = 23;
  return c;
}

namespace {

std::string source_name(gan::FeatureExtractorSpec::Source s) {
  return s == gan::FeatureExtractorSpec::Source::kWeightFile ? "weight_file" : "seeded_random";
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["data_dir"] = c.data_dir.string();
  j["train_limit"] = c.train_limit;
  j["test_limit"] = c.test_limit;
  j["cifar100_coarse"] = c.cifar100_coarse;
  j["data_seed"] = c.data_seed;
  j["expected_variance"] = c.expected_variance;
  j["window_size"] = c.window_size;
  j["lambda"] = c.lambda;
  j["mu"] = c.mu;
  j["mixup_seed"] = c.mixup_seed;
  j["branch"] = to_string(c.branch);
  j["run_dir"] = c.run_dir.string();
  j["gan"] = {
      {"epochs", c.gan.epochs},
      {"batch_size", c.gan.batch_size},
      {"learning_rate", c.gan.learning_rate},
      {"beta1", c.gan.beta1},
      {"beta2", c.gan.beta2},
      {"noise_dim", c.gan.noise_dim},
      {"generator_width", c.gan.generator_width},
      {"discriminator_width", c.gan.discriminator_width},
      {"holdout", c.gan.holdout},
      {"seed", c.gan.seed},
      {"extractor",
       {{"source", source_name(c.gan.extractor.source)},
        {"seed", c.gan.extractor.seed},
        {"weight_file", c.gan.extractor.weight_file.string()},
        {"weight_sha256", c.gan.extractor.weight_sha256}}},
  };
  j["federated"] = {
      {"num_clients", c.federated.num_clients},
      {"rounds", c.federated.rounds},
      {"local_epochs", c.federated.local_epochs},
      {"client_fraction", c.federated.client_fraction},
      {"upload_fraction", c.federated.upload_fraction},
      {"classifier", c.federated.classifier},
      {"learning_rate", c.federated.learning_rate},
      {"batch_size", c.federated.batch_size},
      {"seed", c.federated.seed},
  };
  j["attack"] = {
      {"epochs", c.attack.epochs},
      {"batch_size", c.attack.batch_size},
      {"learning_rate", c.attack.learning_rate},
      {"beta1", c.attack.beta1},
      {"beta2", c.attack.beta2},
      {"noise_dim", c.attack.noise_dim},
      {"generator_width", c.attack.generator_width},
      {"discriminator_width", c.attack.discriminator_width},
      {"reconstructions", c.attack.reconstructions},
      {"conditional", c.attack.conditional},
      {"seed", c.attack.seed},
      {"snapshot_every", c.attack.snapshot_every},
      {"classes", c.attack_classes},
  };
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) {
    throw InvalidArgumentError(fmt::format("config section '{}' must be an object", where));
  }
  for (const auto& item : j.items()) {
    if (!allowed.contains(item.key())) {
      throw InvalidArgumentError(fmt::format("unknown config key '{}{}'", where, item.key()));
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, std::filesystem::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

}  // namespace

std::string to_json_string(const ExperimentConfig& config) {
  return to_json(config).dump(2) + "\n";
}

ExperimentConfig config_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgumentError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  try {
    check_keys(j,
               {"dataset", "data_dir", "train_limit", "test_limit", "cifar100_coarse",
                "data_seed", "expected_variance", "window_size", "lambda", "mu",
                "mixup_seed", "branch", "run_dir", "gan", "federated", "attack"},
               "");
    ExperimentConfig c = default_config(j.value("dataset", std::string("mnist")));
    read_path(j, "data_dir", c.data_dir);
    read(j, "train_limit", c.train_limit);
    read(j, "test_limit", c.test_limit);
    read(j, "cifar100_coarse", c.cifar100_coarse);
    read(j, "data_seed", c.data_seed);
    read(j, "expected_variance", c.expected_variance);
    read(j, "window_size", c.window_size);
    read(j, "lambda", c.lambda);
    read(j, "mu", c.mu);
    read(j, "mixup_seed", c.mixup_seed);
    if (j.contains("branch")) c.branch = parse_branch(j.at("branch").get<std::string>());
    read_path(j, "run_dir", c.run_dir);

    if (j.contains("gan")) {
      const auto& g = j.at("gan");
      check_keys(g,
                 {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "noise_dim",
                  "generator_width", "discriminator_width", "holdout", "seed", "extractor"},
                 "gan.");
      read(g, "epochs", c.gan.epochs);
      read(g, "batch_size", c.gan.batch_size);
      read(g, "learning_rate", c.gan.learning_rate);
      read(g, "beta1", c.gan.beta1);
      read(g, "beta2", c.gan.beta2);
      read(g, "noise_dim", c.gan.noise_dim);
      read(g, "generator_width", c.gan.generator_width);
      read(g, "discriminator_width", c.gan.discriminator_width);
      read(g, "holdout", c.gan.holdout);
      read(g, "seed", c.gan.seed);
      if (g.contains("extractor")) {
        const auto& e = g.at("extractor");
        check_keys(e, {"source", "seed", "weight_file", "weight_sha256"}, "gan.extractor.");
        if (e.contains("source")) {
          const auto s = e.at("source").get<std::string>();
          if (s == "weight_file") {
            c.gan.extractor.source = gan::FeatureExtractorSpec::Source::kWeightFile;
          } else if (s == "seeded_random") {
            c.gan.extractor.source = gan::FeatureExtractorSpec::Source::kSeededRandom;
          } else {
            throw InvalidArgumentError(fmt::format("unknown extractor source '{}'", s));
          }
        }
        read(e, "seed", c.gan.extractor.seed);
        read_path(e, "weight_file", c.gan.extractor.weight_file);
        read(e, "weight_sha256", c.gan.extractor.weight_sha256);
      }
    }
    if (j.contains("federated")) {
      const auto& f = j.at("federated");
      check_keys(f,
                 {"num_clients", "rounds", "local_epochs", "client_fraction",
                  "upload_fraction", "classifier", "learning_rate", "batch_size", "seed"},
                 "federated.");
      read(f, "num_clients", c.federated.num_clients);
      read(f, "rounds", c.federated.rounds);
      read(f, "local_epochs", c.federated.local_epochs);
      read(f, "client_fraction", c.federated.client_fraction);
      read(f, "upload_fraction", c.federated.upload_fraction);
      read(f, "classifier", c.federated.classifier);
      read(f, "learning_rate", c.federated.learning_rate);
      read(f, "batch_size", c.federated.batch_size);
      read(f, "seed", c.federated.seed);
    }
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      check_keys(a,
                 {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "noise_dim",
                  "generator_width", "discriminator_width", "reconstructions", "conditional",
                  "seed", "snapshot_every", "classes"},
                 "attack.");
      read(a, "epochs", c.attack.epochs);
      read(a, "batch_size", c.attack.batch_size);
      read(a, "learning_rate", c.attack.learning_rate);
      read(a, "beta1", c.attack.beta1);
      read(a, "beta2", c.attack.beta2);
      read(a, "noise_dim", c.attack.noise_dim);
      read(a, "generator_width", c.attack.generator_width);
      read(a, "discriminator_width", c.attack.discriminator_width);
      read(a, "reconstructions", c.attack.reconstructions);
      read(a, "conditional", c.attack.conditional);
      read(a, "seed", c.attack.seed);
      read(a, "snapshot_every", c.attack.snapshot_every);
      read(a, "classes", c.attack_classes);
    }
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgumentError(fmt::format("bad config value: {}", e.what()));
  }
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingSourceError(fmt::format("config file not found: {}", file.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_string(ss.str());
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& file) {
  if (!file.parent_path().empty()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error(fmt::format("cannot write {}", file.string()));
  out << to_json_string(config);
}

}  // namespace antigan::harness
