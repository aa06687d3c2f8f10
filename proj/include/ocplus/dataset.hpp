#pragma once

#include "ocplus/core.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ocplus {

inline constexpr int kNormal = 1;
inline constexpr int kAnomaly = -1;

struct Dataset {
  Matrix features;                    // l x n
  std::optional<Matrix> privileged;   // l x m
  std::optional<std::vector<int>> labels;  // +1 normal, -1 anomaly
  std::uint64_t seed = 0;             // 0 for ingested data

  [[nodiscard]] Eigen::Index size() const { return features.rows(); }
  [[nodiscard]] bool has_privileged() const { return privileged.has_value(); }
  [[nodiscard]] bool has_labels() const { return labels.has_value(); }

  void validate() const {
    if (privileged)
      detail::require_dims(privileged->rows() == features.rows(),
                           "privileged matrix row count differs from features");
    if (labels) {
      detail::require_dims(
          static_cast<Eigen::Index>(labels->size()) == features.rows(),
          "label count differs from feature row count");
      for (int y : *labels)
        detail::require(y == kNormal || y == kAnomaly,
                        "labels must be +1 or -1");
    }
  }

  /// Rows at the given indices, in order.
  [[nodiscard]] Dataset subset(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.seed = seed;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    if (privileged)
      out.privileged = Matrix(static_cast<Eigen::Index>(idx.size()), privileged->cols());
    if (labels) out.labels = std::vector<int>(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      out.features.row(r) = features.row(idx[k]);
      if (privileged) out.privileged->row(r) = privileged->row(idx[k]);
      if (labels) (*out.labels)[k] = (*labels)[static_cast<std::size_t>(idx[k])];
    }
    return out;
  }

  [[nodiscard]] double anomaly_share() const {
    if (!labels || labels->empty()) return 0.0;
    std::size_t n = 0;
    for (int y : *labels) n += y == kAnomaly;
    return static_cast<double>(n) / static_cast<double>(labels->size());
  }
};

}  // namespace ocplus
