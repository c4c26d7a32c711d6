#include "faceparse/netkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "faceparse/error.hpp"
#include "faceparse/tensor/layers.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::netkit {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train config: learning_rate must be a finite value >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"learning_rate", c.learning_rate},
           {"momentum", c.momentum},
           {"batch_size", c.batch_size},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
}

TrainConfig paper_train_config() { return TrainConfig{50, 1e-5, 0.8, 250, 0}; }

void to_json(json& j, const TrainHistory& h) {
  j = json{{"steps", h.steps}, {"stopped_early", h.stopped_early}, {"epochs", json::array()}};
  for (const auto& e : h.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"accuracy", e.accuracy}});
  }
}

MomentumSgd::MomentumSgd(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {}

void MomentumSgd::step(ParamSet& params, const ParamSet& grads) {
  if (grads.blocks.size() != params.blocks.size()) {
    throw ShapeError("optimizer: gradient block count does not match parameters");
  }
  if (velocity_.blocks.empty()) {
    for (const auto& b : params.blocks) velocity_.blocks.push_back({b.name, Tensor(b.value.shape(), 0.0)});
  }
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    auto& w = params.blocks[b].value;
    auto& v = velocity_.blocks[b].value;
    const auto& g = grads.blocks[b].value;
    require_same_shape(w, g, "optimizer");
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] - learning_rate_ * g[i];
      w[i] += v[i];
    }
  }
}

namespace {

std::size_t argmax_of(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

}  // namespace

TrainResult train(const Network& net, ParamSet params, std::span<const Sample> data,
                  const TrainConfig& config, const TrainCallbacks& callbacks) {
  config.validate();
  if (data.empty()) throw DataError("train: the dataset is empty");
  net.check_parameters(params);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label >= net.class_count()) {
      throw DataError("train: sample " + std::to_string(i) + " has label " + std::to_string(data[i].label) +
                      " outside [0, " + std::to_string(net.class_count()) + ")");
    }
    if (data[i].input.shape() != net.input_shape()) {
      throw ShapeError("train: sample " + std::to_string(i) + " has shape " + to_string(data[i].input.shape()) +
                       ", network expects " + to_string(net.input_shape()));
    }
  }

  const std::size_t batch = std::min(config.batch_size, data.size());
  MomentumSgd opt(config.learning_rate, config.momentum);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  ForwardTrace trace;

  for (std::size_t epoch = 0; epoch < config.epochs && !result.history.stopped_early; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, epoch));
    rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(start + batch, order.size());
      const double scale = 1.0 / static_cast<double>(end - start);
      ParamSet grads;
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = data[order[k]];
        const Tensor logits = net.forward(params, s.input, &trace);
        const auto sl = softmax_cross_entropy(logits, s.label);
        batch_loss += sl.loss;
        correct += argmax_of(logits) == s.label;
        ParamSet g = net.backward(params, trace, sl.grad_logits);
        if (grads.blocks.empty()) {
          grads = std::move(g);
        } else {
          for (std::size_t b = 0; b < g.blocks.size(); ++b) {
            auto& acc = grads.blocks[b].value;
            const auto& add = g.blocks[b].value;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
          }
        }
      }
      for (auto& b : grads.blocks) {
        for (auto& v : b.value.data()) v *= scale;
      }
      const std::size_t step = result.history.steps;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      loss_sum += batch_loss;
      seen += end - start;
      opt.step(params, grads);
      ++result.history.steps;
      if (callbacks.on_step && !callbacks.on_step(step, batch_loss * scale)) {
        result.history.stopped_early = true;
        break;
      }
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(seen),
                     static_cast<double>(correct) / static_cast<double>(seen)};
    result.history.epochs.push_back(stats);
    if (callbacks.on_epoch) callbacks.on_epoch(stats);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace faceparse::netkit
