#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <utility>
#include <vector>

#include "robarch/archspec.hpp"

namespace robarch {

struct SampleBounds {
  std::set<int> n_choices{3, 4, 5, 6};
  int max_depth = 60;
  int max_width = 1000;
  std::optional<std::pair<std::int64_t, std::int64_t>> param_budget;
};

struct DesignSample {
  ArchitectureSpec spec;
  double wd = 0.0;
  std::int64_t params = 0;
  std::optional<double> error;

  bool operator==(const DesignSample&) const = default;
};

struct EdfCurve {
  std::vector<double> xs;
  std::vector<double> ys;

  bool empty() const noexcept { return xs.empty(); }
  /// Fraction of values <= x (right-continuous step function).
  double at(double x) const;
};

inline constexpr int kMaxConsecutiveRejections = 10'000;

/// Draws one configuration: n from n_choices, then D_i and W_i uniformly,
/// rejection-resampling until the parameter budget (if any) is met.
DesignSample sample_config(std::uint64_t seed, const SampleBounds& bounds, const ArchitectureSpec& templ);

EdfCurve compute_edf(const std::vector<double>& errors);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct Partition {
  std::vector<DesignSample> inside;
  std::vector<DesignSample> outside;
};

Partition partition_by_range(const std::vector<DesignSample>& samples, const WdRange& range);

/// For each metric keep the top `fraction` of samples (lowest error) and take
/// the [min, max] of their WD ratios; the result is the intersection of those
/// intervals. `errors[m][i]` is sample i's error under metric m. Returns
/// nullopt when the intervals do not overlap.
std::optional<WdRange> derive_optimal_range(const std::vector<double>& wds,
                                            const std::vector<std::vector<double>>& errors, double fraction = 0.10);

// CSV emitters.
void write_samples_csv(std::ostream& out, const std::vector<DesignSample>& samples);
void write_edf_csv(std::ostream& out, const EdfCurve& curve, const std::string& group = "all");
void write_edf_header(std::ostream& out);

}  // namespace robarch
