#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "robarch/dataset.hpp"
#include "robarch/model.hpp"
#include "robarch/random.hpp"

namespace robarch {

/// l-infinity attack budget and schedule. Pixels live in [0, 1].
struct AttackConfig {
  double eps = 0.0;
  double alpha = 0.0;
  int steps = 0;
  bool random_start = false;
  /// Return the highest-loss iterate seen per sample instead of the last one.
  bool best_iterate = false;

  /// Multi-step attack with alpha = 2.5 * eps / steps.
  static AttackConfig pgd(double eps, int steps, bool random_start = true, bool best_iterate = true);
  /// Single randomized signed step with alpha = 1.25 * eps.
  static AttackConfig fast_at(double eps);
};

inline constexpr double kPgdStepFactor = 2.5;
inline constexpr double kFastAtStepFactor = 1.25;

/// Throws ParamError unless eps >= 0, steps >= 0, alpha >= 0 and alpha > 0
/// whenever a step could move the input (steps >= 1 and eps > 0).
void validate(const AttackConfig& cfg);

/// Single signed-gradient step on the cross-entropy, from x or from a uniform
/// start in the eps ball, projected back onto the ball and [0, 1].
Tensor fgsm(Model& model, const Tensor& x, std::span<const int> labels, double eps, double alpha, bool random_start,
            Rng& rng);

/// Projected signed-gradient ascent on the cross-entropy of the true labels.
Tensor pgd(Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, Rng& rng);

/// Per-step trace of a best-iterate attack: entry k is the per-sample best loss
/// after iterate k has been scored (iterate 0 is the start point).
struct AttackTrace {
  std::vector<std::vector<double>> best_loss;
};
Tensor pgd_traced(Model& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, Rng& rng,
                  AttackTrace& trace);

/// Maximizes KL(softmax(f(x_adv)) || softmax(f(x))) with f(x) held fixed.
Tensor pgd_kl(Model& model, const Tensor& x, const AttackConfig& cfg, Rng& rng);

/// Triangular one-cycle schedule over [0, total]; RangeError outside it.
double cyclic_lr(double t, double total, double lr_max);

/// CE(f(x), y) + beta * KL(softmax(f(x_adv)) || softmax(f(x))), x_adv from pgd_kl.
/// The returned scalar carries a graph for training when recording is enabled.
Tensor trades_loss(Model& model, const Tensor& x, std::span<const int> labels, double beta, const AttackConfig& attack,
                   Rng& rng, Mode mode = Mode::Train);

/// Fraction of samples whose prediction on pgd(x) equals the label. Batches are
/// seeded from `seed` and their index, so the result does not depend on `workers`.
double evaluate_robust(const Model& model, const Dataset& data, const AttackConfig& attack, std::uint64_t seed,
                       std::size_t batch_size = 100, unsigned workers = 1);

struct CleanMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};
/// Eval-mode mean cross-entropy and accuracy.
CleanMetrics evaluate_clean(Model& model, const Dataset& data, std::size_t batch_size = 100);

enum class TrainMethod { Standard, FastAT, SAT, TRADES };

struct TrainConfig {
  TrainMethod method = TrainMethod::Standard;
  double trades_beta = 6.0;
  int epochs = 1;
  std::size_t batch_size = 64;
  double lr_max = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  /// Inner example generation for FastAT, SAT and TRADES.
  AttackConfig attack;
  /// Attack used for the per-epoch robust accuracy.
  AttackConfig eval_attack;
  /// Samples (from the front of the dataset) scored after each epoch; 0 means all.
  std::size_t monitor_samples = 0;
};

void validate(const TrainConfig& cfg);

struct EpochReport {
  int epoch = 0;
  double lr = 0.0;
  double clean_loss = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
};

/// SGD with momentum. Decay applies to ParamGroup::Decay tensors only.
class Sgd {
 public:
  Sgd(std::vector<Parameter> params, double momentum, double weight_decay);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<Parameter> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

/// Mini-batch training with a per-iteration cyclic learning rate. Throws
/// DivergenceError when a batch loss is not finite.
TrainReport train(Model& model, const Dataset& data, const TrainConfig& cfg);

void write_train_csv(std::ostream& out, const TrainReport& report);

const char* to_string(TrainMethod m) noexcept;
TrainMethod parse_train_method(const std::string& text);

}  // namespace robarch
