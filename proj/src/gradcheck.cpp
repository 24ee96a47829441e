#include "robarch/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "robarch/errors.hpp"

namespace robarch {

namespace {

double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  return grad_check_leaves([&] { return f(leaf); }, {leaf}, h).max_rel_error;
}

GradCheckReport grad_check_leaves(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h) {
  if (!(h > 0.0)) throw RangeError("grad_check step h must be positive");
  std::vector<bool> had_grad;
  for (auto& t : leaves) {
    had_grad.push_back(t.requires_grad());
    t.set_requires_grad(true);
  }
  {
    Tensor y = f();
    backward(y);
  }

  GradCheckReport report;
  {
    NoGradGuard no_grad;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      auto values = leaves[l].mutable_values();
      const std::vector<double> analytic(leaves[l].grad().begin(), leaves[l].grad().end());
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = f().item();
        values[i] = orig - h;
        const double down = f().item();
        values[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double err = rel_error(analytic[i], numeric);
        if (err > report.max_rel_error || (l == 0 && i == 0)) {
          report = {err, l, i, analytic[i], numeric};
        }
      }
    }
  }
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    leaves[l].zero_grad();
    if (!had_grad[l]) leaves[l].set_requires_grad(false);
  }
  return report;
}

}  // namespace robarch
