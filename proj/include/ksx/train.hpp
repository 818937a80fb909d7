#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/graph.hpp"
#include "ksx/model.hpp"

namespace ksx {

// Adam with bias-corrected moments over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 200;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double init_gain = 0.2;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::Config,
            "learning rate must be positive");
    require(epochs > 0, ErrorKind::Config, "epochs must be positive");
    require(weight_decay >= 0.0, ErrorKind::Config, "weight decay must be non-negative");
    require(init_gain > 0.0 && std::isfinite(init_gain), ErrorKind::Config, "init gain must be positive");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  GnnModel model;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
};

inline double accuracy(const GnnModel& model, const Dataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i : idx) hit += predict(model, ds.graphs[i]).label == ds.graphs[i].label();
  return static_cast<double>(hit) / static_cast<double>(idx.size());
}

// Full-batch Adam on mean cross-entropy over the training split. Returns the
// parameters of the epoch with the best validation accuracy; equal accuracies
// prefer the lower validation loss. The template supplies the architecture; its weights are ignored and
// re-initialised from the config seed.
inline TrainResult train(const Architecture& arch, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const auto train_idx = ds.indices(Split::Train);
  const auto val_idx = ds.indices(Split::Val);
  require(!train_idx.empty(), ErrorKind::InvalidArgument, "empty train split");
  require(!val_idx.empty(), ErrorKind::InvalidArgument, "empty val split");
  for (const auto& g : ds.graphs)
    require(g.label() < arch.num_classes, ErrorKind::InvalidArgument, "label exceeds class count");

  GnnModel model = GnnModel::initialized(arch, cfg.seed, cfg.init_gain);
  Adam opt(model.num_params(), cfg.learning_rate);
  TrainResult res{model, {}, -1};
  double best_val = -1.0;
  double best_val_loss = 0.0;
  std::vector<double> d_logits;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> grad(model.num_params(), 0.0);
    double loss = 0.0;
    std::size_t hit = 0;
    for (std::size_t i : train_idx) {
      const CellGraph& g = ds.graphs[i];
      ForwardTrace t = forward(model, g);
      loss += cross_entropy(t, g.label(), &d_logits);
      hit += argmax(t.logits) == g.label();
      Gradients gr = backward(model, g, t, d_logits);
      axpy(1.0, gr.params, grad);
    }
    const double inv = 1.0 / static_cast<double>(train_idx.size());
    for (std::size_t p = 0; p < grad.size(); ++p)
      grad[p] = grad[p] * inv + cfg.weight_decay * model.params()[p];
    opt.step(model.params(), grad);

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss * inv;
    m.train_accuracy = static_cast<double>(hit) * inv;
    std::size_t vhit = 0;
    for (std::size_t i : val_idx) {
      ForwardTrace t = forward(model, ds.graphs[i]);
      m.val_loss += cross_entropy(t, ds.graphs[i].label(), nullptr);
      vhit += argmax(t.logits) == ds.graphs[i].label();
    }
    m.val_loss /= static_cast<double>(val_idx.size());
    m.val_accuracy = static_cast<double>(vhit) / static_cast<double>(val_idx.size());
    res.history.push_back(m);
    if (m.val_accuracy > best_val ||
        (m.val_accuracy == best_val && m.val_loss < best_val_loss)) {
      best_val = m.val_accuracy;
      best_val_loss = m.val_loss;
      res.model = model;
      res.best_epoch = epoch;
    }
  }
  return res;
}

}  // namespace ksx
