#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "antigan/data.hpp"
#include "antigan/gan.hpp"

namespace antigan::mixup {

struct MixPair {
  int64_t real_index = 0;
  int64_t generated_index = 0;  // position in the generation sequence
  int64_t label = 0;            // class the generator was conditioned on
};

struct MixupPlan {
  double mu = 1.0;
  std::vector<MixPair> pairs;
};

struct MixedDataset {
  LabeledDataset mixed;      // provenance kMixed, row i built from real row i
  LabeledDataset generated;  // the x' used, row i paired with real row i
  MixupPlan plan;
};

// x_hat = mu * x + (1 - mu) * x' for every real x, each with a freshly drawn
// same-class x'. Labels are copied unchanged from the real set. Generation
// visits the real images in a seeded random order in chunks of `chunk`.
MixedDataset build_mixed_dataset(const LabeledDataset& real, gan::Generator& generator,
                                 double mu, std::uint64_t seed, int64_t chunk = 256);

// One generated image per real label (the shadow set X' on its own).
LabeledDataset generate_shadow_dataset(const LabeledDataset& real,
                                       gan::Generator& generator, std::uint64_t seed,
                                       int64_t chunk = 256);

// True iff no real index appears twice.
bool verify_mix_once(const MixupPlan& plan);

int64_t mixup_builds();

}  // namespace antigan::mixup
