#include "antigan/mixup.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <random>
#include <unordered_set>

#include <fmt/format.h>
#include <torch/torch.h>

#include "antigan/errors.hpp"

namespace antigan::mixup {

namespace {

std::atomic<int64_t> g_builds{0};

struct Shadow {
  torch::Tensor images;            // aligned with the real rows
  std::vector<int64_t> generation_position;
};

Shadow generate_aligned(const LabeledDataset& real, gan::Generator& generator,
                        std::uint64_t seed, int64_t chunk) {
  const int64_t n = real.size();
  if (real.num_classes() > generator.spec().num_classes) {
    throw EmptyClassError(fmt::format(
        "generator knows {} classes but the dataset has {}",
        generator.spec().num_classes, real.num_classes()));
  }
  if (real.images().channels() != generator.spec().channels) {
    throw ShapeMismatchError("generator and dataset channel counts differ");
  }
  std::vector<int64_t> visit(static_cast<size_t>(n));
  std::iota(visit.begin(), visit.end(), 0);
  std::mt19937_64 order_rng(seed);
  std::shuffle(visit.begin(), visit.end(), order_rng);
  // One noise draw for the whole set so the chunk size only affects batching.
  auto noise_rng = gan::make_rng(seed + 1);
  const auto z = torch::randn({n, generator.spec().noise_dim}, noise_rng);

  Shadow out{torch::empty_like(real.images().pixels()),
             std::vector<int64_t>(static_cast<size_t>(n))};
  chunk = std::max<int64_t>(1, chunk);
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t end = std::min(n, start + chunk);
    const auto rows = torch::tensor(
        std::vector<int64_t>(visit.begin() + start, visit.begin() + end), torch::kInt64);
    const auto labels = real.labels().index_select(0, rows);
    const auto fake = generator.generate_from(z.slice(0, start, end), labels);
    out.images.index_copy_(0, rows, fake.pixels());
    for (int64_t k = start; k < end; ++k) out.generation_position[visit[k]] = k;
  }
  return out;
}

}  // namespace

int64_t mixup_builds() { return g_builds.load(); }

MixedDataset build_mixed_dataset(const LabeledDataset& real, gan::Generator& generator,
                                 double mu, std::uint64_t seed, int64_t chunk) {
  if (!(mu >= 0.0 && mu <= 1.0)) {
    throw InvalidArgumentError(fmt::format("mu must lie in [0, 1], got {}", mu));
  }
  ++g_builds;
  auto shadow = generate_aligned(real, generator, seed, chunk);
  const auto& x = real.images().pixels();
  const auto mixed =
      (x * static_cast<float>(mu) + shadow.images * static_cast<float>(1.0 - mu))
          .clamp(-1.0, 1.0);

  MixedDataset out;
  out.plan.mu = mu;
  out.plan.pairs.reserve(static_cast<size_t>(real.size()));
  for (int64_t i = 0; i < real.size(); ++i) {
    out.plan.pairs.push_back({i, shadow.generation_position[i], real.label_at(i)});
  }
  out.mixed = LabeledDataset(ImageBatch(mixed), real.labels().clone(), real.num_classes(),
                             Provenance::kMixed);
  out.generated = LabeledDataset(ImageBatch(shadow.images), real.labels().clone(),
                                 real.num_classes(), Provenance::kGenerated);
  return out;
}

LabeledDataset generate_shadow_dataset(const LabeledDataset& real,
                                       gan::Generator& generator, std::uint64_t seed,
                                       int64_t chunk) {
  auto shadow = generate_aligned(real, generator, seed, chunk);
  return {ImageBatch(shadow.images), real.labels().clone(), real.num_classes(),
          Provenance::kGenerated};
}

bool verify_mix_once(const MixupPlan& plan) {
  std::unordered_set<int64_t> seen;
  seen.reserve(plan.pairs.size());
  for (const auto& p : plan.pairs) {
    if (!seen.insert(p.real_index).second) return false;
  }
  return true;
}

}  // namespace antigan::mixup
