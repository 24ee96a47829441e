#include "robarch/designspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "robarch/csv.hpp"
#include "robarch/errors.hpp"
#include "robarch/random.hpp"

namespace robarch {

namespace {

void check_bounds(const SampleBounds& b) {
  if (b.n_choices.empty()) throw SpecError("n_choices must not be empty");
  if (*b.n_choices.begin() < 2) throw SpecError("n_choices entries must be >= 2 (WD ratio needs two stages)");
  if (b.max_depth < 1) throw SpecError("max_depth must be >= 1");
  if (b.max_width < 1) throw SpecError("max_width must be >= 1");
  if (b.param_budget && b.param_budget->first > b.param_budget->second)
    throw SpecError("param_budget must satisfy lo <= hi");
}

}  // namespace

double EdfCurve::at(double x) const {
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return 0.0;
  return ys[static_cast<std::size_t>(it - xs.begin()) - 1];
}

DesignSample sample_config(std::uint64_t seed, const SampleBounds& bounds, const ArchitectureSpec& templ) {
  check_bounds(bounds);
  const std::vector<int> choices(bounds.n_choices.begin(), bounds.n_choices.end());
  Rng rng(seed);

  for (int attempt = 0; attempt < kMaxConsecutiveRejections; ++attempt) {
    ArchitectureSpec spec = templ;
    spec.name = "sample-" + std::to_string(seed);
    const int n = choices[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(choices.size()) - 1))];
    spec.stages.assign(static_cast<std::size_t>(n), StageSpec{});
    for (auto& s : spec.stages) {
      s.depth = static_cast<int>(rng.uniform_int(1, bounds.max_depth));
      s.width = static_cast<int>(rng.uniform_int(1, bounds.max_width));
    }
    const std::int64_t params = count_params(spec, 3);
    if (bounds.param_budget && (params < bounds.param_budget->first || params > bounds.param_budget->second))
      continue;
    DesignSample out;
    out.wd = wd_ratio(spec);
    out.params = params;
    out.spec = std::move(spec);
    return out;
  }
  throw BudgetInfeasible("no configuration met the parameter budget after " +
                         std::to_string(kMaxConsecutiveRejections) + " consecutive draws");
}

EdfCurve compute_edf(const std::vector<double>& errors) {
  for (double e : errors)
    if (!(e >= 0.0 && e <= 1.0)) throw RangeError("EDF input " + csv::number(e) + " outside [0, 1]");
  EdfCurve curve;
  curve.xs = errors;
  std::sort(curve.xs.begin(), curve.xs.end());
  const double n = static_cast<double>(curve.xs.size());
  curve.ys.resize(curve.xs.size());
  for (std::size_t k = 0; k < curve.xs.size(); ++k) curve.ys[k] = static_cast<double>(k + 1) / n;
  return curve;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DegenerateInput("pearson needs series of equal length");
  if (xs.size() < 2) throw DegenerateInput("pearson needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Partition partition_by_range(const std::vector<DesignSample>& samples, const WdRange& range) {
  Partition p;
  for (const auto& s : samples) (range.lo <= s.wd && s.wd <= range.hi ? p.inside : p.outside).push_back(s);
  return p;
}

std::optional<WdRange> derive_optimal_range(const std::vector<double>& wds,
                                            const std::vector<std::vector<double>>& errors, double fraction) {
  if (wds.empty() || errors.empty()) throw DegenerateInput("derive_optimal_range needs samples and metrics");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw RangeError("fraction must lie in (0, 1]");
  WdRange out = WdRange::unbounded();
  for (const auto& metric : errors) {
    if (metric.size() != wds.size()) throw DegenerateInput("metric length differs from sample count");
    std::vector<std::size_t> idx(wds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return metric[a] < metric[b]; });
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(wds.size()))));
    double lo = wds[idx[0]], hi = wds[idx[0]];
    for (std::size_t k = 0; k < keep; ++k) {
      lo = std::min(lo, wds[idx[k]]);
      hi = std::max(hi, wds[idx[k]]);
    }
    out.lo = std::max(out.lo, lo);
    out.hi = std::min(out.hi, hi);
  }
  if (out.lo > out.hi) return std::nullopt;
  return out;
}

void write_samples_csv(std::ostream& out, const std::vector<DesignSample>& samples) {
  std::size_t max_n = 0;
  for (const auto& s : samples) max_n = std::max(max_n, s.spec.stages.size());
  out << "name,n";
  for (std::size_t i = 1; i <= max_n; ++i) out << ",D" << i;
  for (std::size_t i = 1; i <= max_n; ++i) out << ",W" << i;
  out << ",wd,params,error\n";
  for (const auto& s : samples) {
    const auto& st = s.spec.stages;
    out << csv::field(s.spec.name) << ',' << st.size();
    for (std::size_t i = 0; i < max_n; ++i) out << ',' << (i < st.size() ? std::to_string(st[i].depth) : "");
    for (std::size_t i = 0; i < max_n; ++i) out << ',' << (i < st.size() ? std::to_string(st[i].width) : "");
    out << ',' << csv::number(s.wd) << ',' << s.params << ',' << (s.error ? csv::number(*s.error) : "") << '\n';
  }
}

void write_edf_header(std::ostream& out) { out << "group,x,y\n"; }

void write_edf_csv(std::ostream& out, const EdfCurve& curve, const std::string& group) {
  for (std::size_t i = 0; i < curve.xs.size(); ++i)
    out << csv::field(group) << ',' << csv::number(curve.xs[i]) << ',' << csv::number(curve.ys[i]) << '\n';
}

}  // namespace robarch
