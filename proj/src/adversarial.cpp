#include "robarch/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <thread>

#include "robarch/errors.hpp"
#include "robarch/ops.hpp"

namespace robarch {

namespace {

using PerSampleLoss = std::function<Tensor(const Tensor& logits)>;

struct Scored {
  std::vector<double> loss;
  std::vector<double> grad;
};

Scored score(Model& model, const Shape& shape, const std::vector<double>& xa, const PerSampleLoss& loss_fn,
             bool with_grad) {
  Scored s;
  if (!with_grad) {
    NoGradGuard no_grad;
    const Tensor per = loss_fn(model.logits(Tensor::from(shape, xa), Mode::Eval));
    s.loss.assign(per.values().begin(), per.values().end());
    return s;
  }
  EnableGradGuard recording;
  Tensor input = Tensor::from(shape, xa, true);
  const Tensor per = loss_fn(model.logits(input, Mode::Eval));
  s.loss.assign(per.values().begin(), per.values().end());
  backward(sum(per));
  s.grad.assign(input.grad().begin(), input.grad().end());
  return s;
}

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// One signed step followed by projection onto the eps ball around x and [0, 1].
void ascend(std::vector<double>& xa, std::span<const double> x, const std::vector<double>& grad, double alpha,
            double eps) {
  for (std::size_t i = 0; i < xa.size(); ++i) {
    const double moved = std::clamp(xa[i] + alpha * sign(grad[i]), x[i] - eps, x[i] + eps);
    xa[i] = std::clamp(moved, 0.0, 1.0);
  }
}

std::vector<double> start_point(std::span<const double> x, double eps, bool random_start, Rng& rng) {
  std::vector<double> xa(x.begin(), x.end());
  if (random_start)
    for (std::size_t i = 0; i < xa.size(); ++i) xa[i] = std::clamp(x[i] + eps * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
  return xa;
}

void check_batch(const Tensor& x, std::size_t labels) {
  if (x.rank() < 2 || x.dim(0) == 0) throw ShapeError("attack expects a non-empty batch, got " + shape_string(x.shape()));
  if (labels != x.dim(0))
    throw ShapeError("batch of " + std::to_string(x.dim(0)) + " samples with " + std::to_string(labels) + " labels");
}

Tensor run_pgd(Model& model, const Tensor& x, const PerSampleLoss& loss_fn, const AttackConfig& cfg, Rng& rng,
               AttackTrace* trace) {
  validate(cfg);
  FrozenParameters frozen(model);
  const Shape& shape = x.shape();
  const std::span<const double> xv = x.values();
  const std::size_t n = shape[0], m = x.numel() / n;

  std::vector<double> xa = start_point(xv, cfg.eps, cfg.random_start, rng);
  std::vector<double> best;
  std::vector<double> best_loss;
  if (cfg.best_iterate) {
    best = xa;
    best_loss.assign(n, -std::numeric_limits<double>::infinity());
  }
  for (int k = 0; k <= cfg.steps; ++k) {
    const bool stepping = k < cfg.steps;
    if (!stepping && !cfg.best_iterate) break;
    const Scored s = score(model, shape, xa, loss_fn, stepping);
    if (cfg.best_iterate) {
      for (std::size_t i = 0; i < n; ++i)
        if (s.loss[i] > best_loss[i]) {
          best_loss[i] = s.loss[i];
          std::copy_n(xa.begin() + static_cast<std::ptrdiff_t>(i * m), m, best.begin() + static_cast<std::ptrdiff_t>(i * m));
        }
      if (trace) trace->best_loss.push_back(best_loss);
    }
    if (stepping) ascend(xa, xv, s.grad, cfg.alpha, cfg.eps);
  }
  return Tensor::from(shape, cfg.best_iterate ? std::move(best) : std::move(xa));
}

PerSampleLoss ce_loss(std::span<const int> labels) {
  return [labels](const Tensor& logits) { return cross_entropy(logits, labels, Reduction::None); };
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

AttackConfig AttackConfig::pgd(double eps, int steps, bool random_start, bool best_iterate) {
  AttackConfig c;
  c.eps = eps;
  c.steps = steps;
  c.alpha = steps > 0 ? kPgdStepFactor * eps / steps : 0.0;
  c.random_start = random_start;
  c.best_iterate = best_iterate;
  return c;
}

AttackConfig AttackConfig::fast_at(double eps) {
  AttackConfig c;
  c.eps = eps;
  c.steps = 1;
  c.alpha = kFastAtStepFactor * eps;
  c.random_start = true;
  return c;
}

void validate(const AttackConfig& cfg) {
  if (!(cfg.eps >= 0.0) || !std::isfinite(cfg.eps)) throw ParamError("attack eps must be finite and >= 0");
  if (cfg.steps < 0) throw ParamError("attack steps must be >= 0");
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) throw ParamError("attack alpha must be finite and >= 0");
  if (cfg.steps >= 1 && cfg.eps > 0.0 && cfg.alpha == 0.0) throw ParamError("attack alpha must be > 0 when steps >= 1");
}

Tensor fgsm(Model& model, const Tensor& x, std::span<const int> labels, double eps, double alpha, bool random_start,
            Rng& rng) {
  check_batch(x, labels.size());
  AttackConfig cfg;
  cfg.eps = eps;
  cfg.alpha = alpha;
  cfg.steps = 1;
  validate(cfg);
  FrozenParameters frozen(model);
  std::vector<double> xa = start_point(x.values(), eps, random_start, rng);
  const Scored s = score(model, x.shape(), xa, ce_loss(labels), true);
  ascend(xa, x.values(), s.grad, alpha, eps);
  return Tensor::from(x.shape(), std::move(xa));
}

Tensor pgd(Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, Rng& rng) {
  check_batch(x, labels.size());
  return run_pgd(model, x, ce_loss(labels), cfg, rng, nullptr);
}

Tensor pgd_traced(Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, Rng& rng,
                  AttackTrace& trace) {
  check_batch(x, labels.size());
  trace.best_loss.clear();
  return run_pgd(model, x, ce_loss(labels), cfg, rng, &trace);
}

Tensor pgd_kl(Model& model, const Tensor& x, const AttackConfig& cfg, Rng& rng) {
  check_batch(x, x.rank() ? x.dim(0) : 0);
  Tensor target;
  {
    NoGradGuard no_grad;
    target = model.logits(x, Mode::Eval);
  }
  return run_pgd(
      model, x, [target](const Tensor& logits) { return kl_divergence(logits, target, Reduction::None); }, cfg, rng,
      nullptr);
}

double cyclic_lr(double t, double total, double lr_max) {
  if (!(total > 0.0)) throw RangeError("cyclic schedule length must be positive");
  if (!(t >= 0.0 && t <= total)) throw RangeError("cyclic schedule time outside [0, total]");
  return t <= total / 2.0 ? lr_max * (2.0 * t / total) : lr_max * 2.0 * (1.0 - t / total);
}

Tensor trades_loss(Model& model, const Tensor& x, std::span<const int> labels, double beta, const AttackConfig& attack,
                   Rng& rng, Mode mode) {
  if (!(beta >= 0.0)) throw ParamError("trades beta must be >= 0");
  check_batch(x, labels.size());
  Tensor x_adv;
  if (beta > 0.0) x_adv = pgd_kl(model, x, attack, rng);
  const Tensor clean = model.logits(x, mode);
  Tensor loss = cross_entropy(clean, labels, Reduction::Mean);
  if (beta > 0.0) loss = add(loss, scale(kl_divergence(model.logits(x_adv, mode), clean, Reduction::Mean), beta));
  return loss;
}

double evaluate_robust(const Model& model, const Dataset& data, const AttackConfig& attack, std::uint64_t seed,
                       std::size_t batch_size, unsigned workers) {
  validate(attack);
  if (data.size() == 0) throw DegenerateInput("robust accuracy of an empty dataset");
  if (batch_size == 0) throw ParamError("batch size must be positive");
  workers = std::max(1u, workers);
  const std::size_t n = data.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<std::size_t> correct(batches, 0);

  auto shard = [&](unsigned w) {
    auto local = model.clone_model();
    for (std::size_t b = w; b < batches; b += workers) {
      const std::size_t begin = b * batch_size, count = std::min(batch_size, n - begin);
      const Tensor x = data.images(begin, count);
      const std::span<const int> y(data.labels.data() + begin, count);
      Rng rng(splitmix64(seed ^ splitmix64(b)));
      const Tensor x_adv = pgd(*local, x, y, attack, rng);
      NoGradGuard no_grad;
      const auto pred = argmax_rows(local->logits(x_adv, Mode::Eval));
      for (std::size_t i = 0; i < count; ++i) correct[b] += pred[i] == y[i] ? 1 : 0;
    }
  };

  if (workers == 1) {
    shard(0);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          shard(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::size_t total = 0;
  for (std::size_t c : correct) total += c;
  return static_cast<double>(total) / static_cast<double>(n);
}

CleanMetrics evaluate_clean(Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw DegenerateInput("clean metrics of an empty dataset");
  if (batch_size == 0) throw ParamError("batch size must be positive");
  NoGradGuard no_grad;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - begin);
    const std::span<const int> y(data.labels.data() + begin, count);
    const Tensor logits = model.logits(data.images(begin, count), Mode::Eval);
    loss += cross_entropy(logits, y, Reduction::Sum).item();
    const auto pred = argmax_rows(logits);
    for (std::size_t i = 0; i < count; ++i) correct += pred[i] == y[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace robarch
