#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"

#include "faceparse/netkit/network.hpp"

namespace faceparse::netkit {

struct TrainConfig {
  std::size_t epochs = 1;
  double learning_rate = 0.01;
  double momentum = 0.0;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Full-size schedule: 50 epochs, learning rate 1e-5, momentum 0.8, batch 250.
TrainConfig paper_train_config();

/// Heavy-ball momentum: v <- mu*v - eta*g; w <- w + v, with v starting at 0.
class MomentumSgd {
 public:
  MomentumSgd(double learning_rate, double momentum);

  void step(ParamSet& params, const ParamSet& grads);
  const ParamSet& velocity() const { return velocity_; }

 private:
  double learning_rate_;
  double momentum_;
  ParamSet velocity_;
};

struct Sample {
  Tensor input;
  std::size_t label = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t steps = 0;
  bool stopped_early = false;
};

void to_json(nlohmann::json& j, const TrainHistory& h);

struct TrainCallbacks {
  /// Called after every optimizer step with the batch's mean loss (measured
  /// before the step). Returning false ends training.
  std::function<bool(std::size_t step, double batch_loss)> on_step;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  ParamSet params;
  TrainHistory history;
};

/// Mini-batch momentum SGD on softmax cross-entropy. Each epoch visits the
/// dataset in an order shuffled by Rng(derive_seed(config.seed, epoch)); the
/// last short batch is kept and batch_size is clamped to the dataset size.
/// Batch gradients are the mean of per-sample gradients summed in batch order.
TrainResult train(const Network& net, ParamSet params, std::span<const Sample> data,
                  const TrainConfig& config, const TrainCallbacks& callbacks = {});

}  // namespace faceparse::netkit
