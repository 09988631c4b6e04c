#include "antigan/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"

namespace antigan::fed {

void FederatedConfig::validate() const {
  auto in_unit = [](double f) { return f > 0.0 && f <= 1.0; };
  if (num_clients < 1) throw InvalidArgumentError("num_clients must be >= 1");
  if (rounds < 0 || local_epochs < 0) {
    throw InvalidArgumentError("rounds and local_epochs must be >= 0");
  }
  if (!in_unit(client_fraction) || !in_unit(upload_fraction)) {
    throw InvalidArgumentError(fmt::format(
        "client_fraction ({}) and upload_fraction ({}) must lie in (0, 1]",
        client_fraction, upload_fraction));
  }
  if (!(learning_rate >= 0.0)) throw InvalidArgumentError("learning rate must be >= 0");
  if (batch_size < 1) throw InvalidArgumentError("batch size must be >= 1");
  if (classifier != "cnn4") {
    throw InvalidArgumentError(fmt::format("unknown classifier '{}'", classifier));
  }
}

int64_t GradientUpdate::uploaded() const {
  return std::count(mask.begin(), mask.end(), std::uint8_t{1});
}

Classifier make_classifier(const std::string& architecture, int channels,
                           int num_classes, std::uint64_t seed) {
  if (architecture != "cnn4") {
    throw InvalidArgumentError(fmt::format("unknown classifier '{}'", architecture));
  }
  torch::manual_seed(seed);
  return {nets::ClassifierNet(channels, num_classes), channels, num_classes};
}

std::vector<int64_t> epoch_order(int64_t size, std::uint64_t seed, int epoch) {
  std::vector<int64_t> order(static_cast<size_t>(size));
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::uint64_t local_seed(std::uint64_t base, int round, int client) {
  // splitmix64 over (base, round, client)
  std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(round) * 1000003ULL +
                                                   static_cast<std::uint64_t>(client) + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

LocalTrainResult local_train(Classifier& model, const LabeledDataset& data, int epochs,
                             double learning_rate, int batch_size, std::uint64_t seed) {
  if (data.empty()) throw InvalidArgumentError("local_train needs a non-empty dataset");
  if (epochs < 0 || batch_size < 1) {
    throw InvalidArgumentError("epochs must be >= 0 and batch size >= 1");
  }
  auto& net = model.net;
  const auto before = nets::flatten_parameters(*net);
  torch::optim::SGD opt(net->parameters(), torch::optim::SGDOptions(learning_rate));
  net->train();

  const auto& x_all = data.images().pixels();
  const auto& y_all = data.labels();
  double loss_sum = 0.0;
  int64_t correct = 0;
  int64_t seen = 0;
  for (int e = 0; e < epochs; ++e) {
    const auto order = epoch_order(data.size(), seed, e);
    for (size_t start = 0; start < order.size(); start += batch_size) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
      const auto idx = torch::tensor(
          std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kInt64);
      const auto x = x_all.index_select(0, idx);
      const auto y = y_all.index_select(0, idx);
      opt.zero_grad();
      const auto logits = net->forward(x);
      const auto loss = torch::cross_entropy_loss(logits, y);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw DivergenceError(fmt::format("local training loss non-finite in epoch {}", e));
      }
      loss.backward();
      opt.step();
      loss_sum += value * static_cast<double>(end - start);
      correct += (logits.argmax(1) == y).sum().item<int64_t>();
      seen += static_cast<int64_t>(end - start);
    }
  }

  const auto after = nets::flatten_parameters(*net);
  LocalTrainResult out;
  out.update.values.resize(after.size());
  for (size_t i = 0; i < after.size(); ++i) out.update.values[i] = after[i] - before[i];
  out.update.mask.assign(after.size(), 1);
  out.mean_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
  out.train_accuracy = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
  return out;
}

void apply_upload_mask(GradientUpdate& update, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgumentError(fmt::format("upload fraction {} outside (0, 1]", fraction));
  }
  const size_t d = update.values.size();
  update.mask.assign(d, 0);
  const auto keep = static_cast<size_t>(std::ceil(fraction * static_cast<double>(d)));
  if (keep >= d) {
    std::fill(update.mask.begin(), update.mask.end(), std::uint8_t{1});
    return;
  }
  std::vector<size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                   [&](size_t a, size_t b) {
                     const float ma = std::fabs(update.values[a]);
                     const float mb = std::fabs(update.values[b]);
                     return ma != mb ? ma > mb : a < b;
                   });
  for (size_t i = 0; i < keep; ++i) update.mask[order[i]] = 1;
  for (size_t i = 0; i < d; ++i) {
    if (!update.mask[i]) update.values[i] = 0.0F;
  }
}

std::vector<float> aggregate(std::span<const GradientUpdate> updates,
                             std::span<const double> weights) {
  if (updates.empty()) return {};
  if (weights.size() != updates.size()) {
    throw ShapeMismatchError("one weight per update is required");
  }
  const size_t d = updates.front().values.size();
  for (const auto& u : updates) {
    if (u.values.size() != d || u.mask.size() != d) {
      throw ShapeMismatchError(fmt::format(
          "update from client {} has dimension {}, expected {}", u.client_id, u.values.size(), d));
    }
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw InvalidArgumentError("aggregation weights must sum to > 0");

  std::vector<double> num(d, 0.0);
  std::vector<double> den(d, 0.0);
  for (size_t k = 0; k < updates.size(); ++k) {
    const double w = weights[k] / total;
    const auto& u = updates[k];
    for (size_t i = 0; i < d; ++i) {
      if (u.mask[i]) {
        num[i] += w * u.values[i];
        den[i] += w;
      }
    }
  }
  std::vector<float> out(d, 0.0F);
  for (size_t i = 0; i < d; ++i) {
    if (den[i] > 0.0) out[i] = static_cast<float>(num[i] / den[i]);
  }
  return out;
}

double evaluate_accuracy(Classifier& model, const LabeledDataset& data, double* mean_loss) {
  if (data.empty()) return 0.0;
  torch::NoGradGuard no_grad;
  const bool was_training = model.net->is_training();
  model.net->eval();
  int64_t correct = 0;
  double loss_sum = 0.0;
  const auto& x = data.images().pixels();
  const auto& y = data.labels();
  constexpr int64_t kChunk = 512;
  for (int64_t start = 0; start < data.size(); start += kChunk) {
    const int64_t len = std::min(kChunk, data.size() - start);
    const auto logits = model.net->forward(x.narrow(0, start, len));
    const auto target = y.narrow(0, start, len);
    correct += (logits.argmax(1) == target).sum().item<int64_t>();
    loss_sum += torch::cross_entropy_loss(logits, target, {}, at::Reduction::Sum).item<double>();
  }
  model.net->train(was_training);
  if (mean_loss) *mean_loss = loss_sum / static_cast<double>(data.size());
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

FederatedResult run_federated(const FederatedConfig& config,
                              std::span<const LabeledDataset> clients,
                              const RunOptions& options) {
  config.validate();
  if (clients.empty()) throw InvalidArgumentError("run_federated needs at least one client");
  const auto& first = clients.front();
  const int channels = static_cast<int>(first.images().channels());
  const int classes = static_cast<int>(first.num_classes());
  for (const auto& c : clients) {
    if (options.forbid_real && c.provenance() == Provenance::kReal) {
      throw ProvenanceError("real private records reached the federated trainer");
    }
  }

  FederatedResult result{make_classifier(config.classifier, channels, classes, config.seed), {}};
  const int n = static_cast<int>(clients.size());
  const int per_round = std::clamp(
      static_cast<int>(std::lround(config.client_fraction * n)), 1, n);
  std::mt19937_64 select_rng(config.seed ^ 0xC2B2AE3D27D4EB4FULL);
  Classifier local = make_classifier(config.classifier, channels, classes, config.seed);

  for (int round = 1; round <= config.rounds; ++round) {
    std::vector<int> chosen(static_cast<size_t>(n));
    std::iota(chosen.begin(), chosen.end(), 0);
    if (per_round < n) {
      std::shuffle(chosen.begin(), chosen.end(), select_rng);
      chosen.resize(static_cast<size_t>(per_round));
      std::sort(chosen.begin(), chosen.end());
    }

    const auto global_params = nets::flatten_parameters(*result.global.net);
    std::vector<GradientUpdate> updates;
    std::vector<double> weights;
    for (int k : chosen) {
      const auto& shard = clients[static_cast<size_t>(k)];
      if (options.forbid_real && shard.provenance() == Provenance::kReal) {
        throw ProvenanceError("real private records reached the federated trainer");
      }
      nets::load_flat_parameters(*local.net, global_params);
      auto res = local_train(local, shard, config.local_epochs, config.learning_rate,
                             config.batch_size, local_seed(config.seed, round, k));
      res.update.client_id = k;
      res.update.round = round;
      apply_upload_mask(res.update, config.upload_fraction);
      if (options.observer) options.observer(res.update);
      result.log.push_back({round, k, res.mean_loss, res.train_accuracy});
      weights.push_back(static_cast<double>(shard.size()));
      updates.push_back(std::move(res.update));
    }

    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double normalized = 0.0;
    for (double w : weights) normalized += w / total;
    if (std::fabs(normalized - 1.0) > 1e-9) {
      throw Error(fmt::format("aggregation weights sum to {}", normalized));
    }

    const auto delta = aggregate(updates, weights);
    auto next = global_params;
    for (size_t i = 0; i < next.size(); ++i) next[i] += delta[i];
    nets::load_flat_parameters(*result.global.net, next);

    if (options.test) {
      double loss = 0.0;
      const double acc = evaluate_accuracy(result.global, *options.test, &loss);
      result.log.push_back({round, -1, loss, acc});
    }
  }
  return result;
}

void write_round_log_csv(const std::filesystem::path& path,
                         std::span<const RoundRecord> log) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << "round,client,loss,accuracy\n";
  for (const auto& r : log) {
    out << fmt::format("{},{},{:.9g},{:.9g}\n", r.round,
                       r.client < 0 ? std::string("global") : std::to_string(r.client),
                       r.loss, r.accuracy);
  }
}

}  // namespace antigan::fed
