#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mambahash/dataset.hpp"
#include "mambahash/network.hpp"
#include "mambahash/objective.hpp"
#include "mambahash/params.hpp"
#include "mambahash/retrieval.hpp"

namespace mambahash {

struct TrainConfig {
  double learning_rate = 1.5e-5;
  double weight_decay = 1e-7;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-8;
  bool augment = true;
  // Crop side after padding; 0 keeps the source side.
  std::size_t crop_side = 0;
  // Zero border added on every side before cropping.
  std::size_t crop_pad = 2;

  void validate() const;
  std::string to_text() const;
  bool set(const std::string& key, const std::string& value);
  bool operator==(const TrainConfig&) const = default;
};

// Per-parameter running mean of squared gradients.
struct RmspropState {
  std::vector<std::vector<double>> mean_square;
};

// v <- alpha v + (1 - alpha) g^2; p <- p - lr g / (sqrt(v) + eps) - lr wd p.
void rmsprop_update(std::span<double> param, std::span<const double> grad,
                    std::span<double> mean_square, const TrainConfig& cfg);

// Applies one update to every parameter from its accumulated gradient.
// Checks every gradient first; a non-finite value aborts the whole step
// with a NumericError naming the parameter.
void rmsprop_step(NamedParams& params, RmspropState& state, const TrainConfig& cfg);

struct AugmentOptions {
  std::size_t crop_side = 0;  // 0 = source side
  std::size_t pad = 0;
  // Overrides for deterministic tests.
  std::optional<bool> force_flip;
  std::optional<std::pair<std::size_t, std::size_t>> force_offset;  // (row, col)
};

// Horizontal flip with probability 0.5, then a uniform random crop from the
// zero-padded image.
Image augment(const Image& image, Rng& rng, const AugmentOptions& opt);

struct TrainingItem {
  const Image* image;
  LabelSet labels;
};

struct BatchRecord {
  std::size_t epoch;
  std::size_t batch;
  LossBreakdown loss;
};

class Trainer {
 public:
  Trainer(MambaHashNet& net, TrainConfig cfg);

  // One pass over shuffled mini-batches: forward, total loss, backward,
  // RMSProp. A trailing batch of a single item is skipped.
  std::vector<LossBreakdown> train_epoch(const std::vector<TrainingItem>& data);

  const std::vector<BatchRecord>& history() const { return history_; }
  std::size_t epochs_done() const { return epoch_; }

 private:
  MambaHashNet& net_;
  TrainConfig cfg_;
  Rng rng_;
  RmspropState state_;
  std::vector<BatchRecord> history_;
  std::size_t epoch_ = 0;
};

// Continuous codes (N, K) for a list of images, computed in batches with
// the tape disabled.
Tensor encode_images(const MambaHashNet& net, const std::vector<const Image*>& images,
                     std::size_t batch_size = 32);

// Binarized codes with labels for the given records of a dataset.
PackedCodes encode_records(const MambaHashNet& net, const Dataset& data,
                           const std::vector<std::size_t>& indices, std::size_t batch_size = 32);

struct TrainOutcome {
  MambaHashNet net;
  std::vector<BatchRecord> history;
};

// Builds a network seeded from `train.seed` and trains it for
// `train.epochs` epochs on the train split. `on_epoch` sees each epoch's
// batch losses as they complete.
TrainOutcome train_model(
    const ModelConfig& model, const TrainConfig& train, const Dataset& data,
    const std::function<void(std::size_t, const std::vector<LossBreakdown>&)>& on_epoch = {});

}  // namespace mambahash
