#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xpass/compute/adam.hpp"
#include "xpass/data/dataset.hpp"
#include "xpass/model/checkpoint.hpp"
#include "xpass/model/network.hpp"
#include "xpass/random.hpp"

namespace xpass::harness {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

template <typename T>
struct TrainResult {
  model::Model<T> best;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> history;
  bool stopped_early = false;

  nlohmann::json summary() const {
    auto hist = nlohmann::json::array();
    for (const auto& e : history) hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    return {{"best_epoch", best_epoch}, {"best_val_loss", best_val_loss}, {"stopped_early", stopped_early},
            {"history", hist}};
  }
};

// Mean per-sample loss with frozen weights.
template <typename T>
double mean_loss(const model::Model<T>& m, std::span<const data::SequenceSample> samples) {
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : samples) total += static_cast<double>(model::loss(m.forward(s), s.label).item());
  return total / static_cast<double>(samples.size());
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam over seeded mini-batch shuffles; keeps the weights with the lowest
// validation loss and stops after `patience` epochs without improvement.
template <typename T>
TrainResult<T> train(std::span<const data::SequenceSample> train_set, std::span<const data::SequenceSample> val_set,
                     const model::ModelConfig& model_config, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  model_config.validate();
  if (train_set.empty() || val_set.empty()) throw UsageError("train: training and validation splits must be non-empty");

  auto current = model::Model<T>::create(model_config);
  auto params = current.weights.parameters();
  AdamState<T> adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.init(params);

  TrainResult<T> result;
  result.best = {model_config, model::clone_weights(current.weights)};
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffler(mix_seed(cfg.seed, epoch));
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const T inv_batch = T{1} / static_cast<T>(end - start);
      current.weights.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& sample = train_set[order[i]];
        model::ForwardOptions opt;
        opt.seed = mix_seed(cfg.seed, 0x5eed0000ULL + step * cfg.batch_size + (i - start));
        opt.training = true;
        const auto logits = model::forward(sample, current.weights, current.config, opt);
        const auto l = model::loss(logits, sample.label);
        const double value = static_cast<double>(l.item());
        if (!std::isfinite(value)) {
          std::ostringstream msg;
          msg << "non-finite loss in epoch " << epoch << ", batch ids:";
          for (std::size_t j = start; j < end; ++j) msg << ' ' << train_set[order[j]].event_id;
          double max_logit = 0.0;
          for (auto v : logits.x.data()) max_logit = std::max(max_logit, std::abs(static_cast<double>(v)));
          for (auto v : logits.y.data()) max_logit = std::max(max_logit, std::abs(static_cast<double>(v)));
          msg << "; max |logit| " << max_logit;
          throw NumericError(msg.str());
        }
        epoch_loss += value;
        backward(scale(l, inv_batch));
      }
      adam_step<T>(params, adam);
      ++step;
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), mean_loss(current, val_set)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      model::copy_values(result.best.weights, current.weights);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return result;
}

}  // namespace xpass::harness
