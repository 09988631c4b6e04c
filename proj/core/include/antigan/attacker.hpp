#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "antigan/data.hpp"
#include "antigan/similarity.hpp"

namespace antigan::attack {

// What the adversary is allowed to see. In a defended scenario the target
// must not carry Provenance::kReal.
enum class Exposure { kUndefended, kDefended };

struct AttackConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int noise_dim = 64;
  int generator_width = 64;
  int discriminator_width = 64;
  int reconstructions = 16;  // per class, from fixed evaluation noise
  // false: one unconditional DCGAN per class; true: one label-conditioned GAN.
  bool conditional = false;
  std::uint64_t seed = 99;
  // Every this many epochs the snapshot callback receives reconstructions
  // from the evaluation noise; 0 disables.
  int snapshot_every = 10;
};

using SnapshotCallback =
    std::function<void(int64_t label, int epoch, const ImageBatch& reconstructions)>;

struct AttackEpochRecord {
  int epoch = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
};

struct ClassAttack {
  int64_t label = 0;
  ImageBatch reconstructions;
  std::vector<AttackEpochRecord> history;
  double similarity = 0.0;  // filled by score_attack
  double mean_window_variance = 0.0;  // filled by score_attack
};

struct AttackResult {
  std::vector<ClassAttack> classes;
};

// Trains DCGAN-class generators on the target images of each requested class
// and returns reconstructions drawn from fixed evaluation noise. Throws
// ProvenanceError when a defended scenario exposes real records,
// EmptyClassError when a class has no target images, DivergenceError on
// non-finite losses.
AttackResult run_blackbox_attack(const LabeledDataset& target,
                                 std::span<const int64_t> classes,
                                 const AttackConfig& config,
                                 Exposure exposure = Exposure::kDefended,
                                 const SnapshotCallback& on_snapshot = {});

// Evaluator side: fills similarity against the private set (which the
// attacker never sees) and the reconstructions' mean 5x5 window variance.
void score_attack(AttackResult& result, const LabeledDataset& privates,
                  int window_size = 5);

}  // namespace antigan::attack
