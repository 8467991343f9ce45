#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splr/linalg.hpp"

namespace splr {

struct interval {
  double lower = 0.0;
  double upper = 1.0;

  interval() = default;
  interval(double lo, double hi) : lower(lo), upper(hi) {
    if (!(lo < hi)) throw invalid_argument("interval: lower must be < upper");
  }
  double width() const { return upper - lower; }
  double midpoint() const { return 0.5 * (lower + upper); }
  bool operator==(const interval&) const = default;
};

/// Input points (one row per sample) and optional evaluations.
struct sample_set {
  matrix points; // Q x d
  std::optional<vector> values;
  std::uint64_t seed = 0;

  index_t size() const { return points.rows(); }
  index_t dimension() const { return points.cols(); }

  /// Rows selected by `rows`, values included when present.
  sample_set subset(const std::vector<index_t>& rows) const {
    sample_set out;
    out.seed = seed;
    out.points.resize(static_cast<index_t>(rows.size()), points.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.points.row(static_cast<index_t>(i)) = points.row(rows[i]);
    if (values) {
      vector v(static_cast<index_t>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<index_t>(i)] = (*values)[rows[i]];
      out.values = std::move(v);
    }
    return out;
  }
};

} // namespace splr
