#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "antigan/data.hpp"
#include "antigan/networks.hpp"

namespace antigan::fed {

struct FederatedConfig {
  int num_clients = 4;
  int rounds = 20;
  int local_epochs = 1;
  double client_fraction = 1.0;
  // Share of each update's entries uploaded to the server ([grad f]).
  double upload_fraction = 1.0;
  std::string classifier = "cnn4";
  double learning_rate = 0.05;
  int batch_size = 64;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GradientUpdate {
  std::vector<float> values;
  std::vector<std::uint8_t> mask;  // 1 = uploaded
  int client_id = 0;
  int round = 0;

  int64_t uploaded() const;
};

// A classifier plus the geometry it was built for.
struct Classifier {
  nets::ClassifierNet net{nullptr};
  int channels = 1;
  int num_classes = 10;
};

// Parameters are drawn from torch's default initialisers under `seed`.
Classifier make_classifier(const std::string& architecture, int channels,
                           int num_classes, std::uint64_t seed);

struct LocalTrainResult {
  GradientUpdate update;  // cumulative parameter delta, full mask
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

// SGD on cross-entropy for `epochs` passes; batches follow a permutation
// drawn from `seed` once per epoch. Mutates `model` in place.
LocalTrainResult local_train(Classifier& model, const LabeledDataset& data, int epochs,
                             double learning_rate, int batch_size, std::uint64_t seed);

// Per-epoch batch order used by local_train; exposed so an independent
// replica can follow the same schedule.
std::vector<int64_t> epoch_order(int64_t size, std::uint64_t seed, int epoch);

// Keeps the ceil(fraction * d) largest-magnitude entries (ties broken by
// index) and zeroes the rest.
void apply_upload_mask(GradientUpdate& update, double fraction);

// Per coordinate: sum_k w_k m_k u_k / sum_k w_k m_k over the updates whose
// mask covers it; coordinates nobody uploaded aggregate to zero. Weights are
// the client sizes n_k. Throws ShapeMismatchError on mixed dimensions.
std::vector<float> aggregate(std::span<const GradientUpdate> updates,
                             std::span<const double> weights);

double evaluate_accuracy(Classifier& model, const LabeledDataset& data,
                         double* mean_loss = nullptr);

struct RoundRecord {
  int round = 0;
  int client = -1;  // -1 = global model on the test split
  double loss = 0.0;
  double accuracy = 0.0;
};

using UpdateObserver = std::function<void(const GradientUpdate&)>;

struct RunOptions {
  const LabeledDataset* test = nullptr;  // evaluated after every round
  UpdateObserver observer;
  // Defended runs refuse any client shard tagged Provenance::kReal.
  bool forbid_real = false;
};

struct FederatedResult {
  Classifier global;
  std::vector<RoundRecord> log;
};

FederatedResult run_federated(const FederatedConfig& config,
                              std::span<const LabeledDataset> clients,
                              const RunOptions& options = {});

// Seed used for client `client` in round `round` (1-based rounds).
std::uint64_t local_seed(std::uint64_t base, int round, int client);

void write_round_log_csv(const std::filesystem::path& path,
                         std::span<const RoundRecord> log);

}  // namespace antigan::fed
