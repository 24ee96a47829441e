#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "robarch/adversarial.hpp"
#include "robarch/csv.hpp"
#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

const char* to_string(TrainMethod m) noexcept {
  switch (m) {
    case TrainMethod::Standard:
      return "standard";
    case TrainMethod::FastAT:
      return "fast-at";
    case TrainMethod::SAT:
      return "sat";
    case TrainMethod::TRADES:
      return "trades";
  }
  return "?";
}

TrainMethod parse_train_method(const std::string& text) {
  for (auto m : {TrainMethod::Standard, TrainMethod::FastAT, TrainMethod::SAT, TrainMethod::TRADES})
    if (text == to_string(m)) return m;
  throw ParamError("unknown training method '" + text + "' (standard, fast-at, sat, trades)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ParamError("epochs must be >= 0");
  if (cfg.batch_size == 0) throw ParamError("batch size must be positive");
  if (!(cfg.lr_max > 0.0) || !std::isfinite(cfg.lr_max)) throw ParamError("lr_max must be positive");
  if (!(cfg.weight_decay >= 0.0)) throw ParamError("weight decay must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ParamError("momentum must be in [0, 1)");
  if (!(cfg.trades_beta >= 0.0)) throw ParamError("trades beta must be >= 0");
  validate(cfg.attack);
  validate(cfg.eval_attack);
}

Sgd::Sgd(std::vector<Parameter> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0);
}

void Sgd::zero_grad() {
  for (auto& p : params_)
    if (p.tensor.requires_grad()) p.tensor.zero_grad();
}

void Sgd::step(double lr) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k].tensor;
    const double wd = params_[k].group == ParamGroup::Decay ? weight_decay_ : 0.0;
    const bool has_grad = t.requires_grad();
    auto w = t.mutable_values();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = (has_grad ? t.grad()[i] : 0.0) + wd * w[i];
      v[i] = momentum_ * v[i] + g;
      w[i] -= lr * v[i];
    }
  }
}

TrainReport train(Model& model, const Dataset& data, const TrainConfig& cfg) {
  validate(cfg);
  validate_dataset(data);
  if (data.size() == 0) throw DegenerateInput("training set is empty");
  if (static_cast<std::size_t>(data.class_count) > model.num_classes())
    throw ShapeError("dataset has " + std::to_string(data.class_count) + " classes, model only " +
                     std::to_string(model.num_classes()));

  TrainReport report;
  if (cfg.epochs == 0) return report;

  const std::size_t n = data.size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t per_epoch = (n + bs - 1) / bs;
  const double total = static_cast<double>(per_epoch) * cfg.epochs;
  const Dataset monitor = data.head(cfg.monitor_samples);

  Rng rng(cfg.seed);
  Sgd opt(model.parameters(), cfg.momentum, cfg.weight_decay);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t t = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    double lr = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * bs, std::min(bs, n - b * bs));
      const Tensor x = data.images(idx);
      const std::vector<int> y = data.labels_at(idx);

      Tensor input = x;
      if (cfg.method == TrainMethod::FastAT)
        input = fgsm(model, x, y, cfg.attack.eps, cfg.attack.alpha, cfg.attack.random_start, rng);
      else if (cfg.method == TrainMethod::SAT)
        input = pgd(model, x, y, cfg.attack, rng);

      opt.zero_grad();
      const Tensor loss = cfg.method == TrainMethod::TRADES
                              ? trades_loss(model, x, y, cfg.trades_beta, cfg.attack, rng, Mode::Train)
                              : cross_entropy(model.logits(input, Mode::Train), y, Reduction::Mean);
      if (!std::isfinite(loss.item())) throw DivergenceError("training loss is not finite", epoch);
      backward(loss);
      lr = cyclic_lr(static_cast<double>(t) + 0.5, total, cfg.lr_max);
      opt.step(lr);
      ++t;
    }
    const CleanMetrics clean = evaluate_clean(model, monitor);
    const double robust =
        evaluate_robust(model, monitor, cfg.eval_attack, cfg.seed ^ (0x5eedULL + static_cast<std::uint64_t>(epoch)));
    report.epochs.push_back({epoch, lr, clean.loss, clean.accuracy, robust});
  }
  return report;
}

void write_train_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,lr,clean_loss,clean_acc,robust_acc\n";
  for (const auto& e : report.epochs)
    out << e.epoch << ',' << csv::number(e.lr) << ',' << csv::number(e.clean_loss) << ',' << csv::number(e.clean_acc)
        << ',' << csv::number(e.robust_acc) << '\n';
}

}  // namespace robarch
