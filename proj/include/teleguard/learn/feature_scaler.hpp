#pragma once

#include <Eigen/Core>

#include "teleguard/common/binary_io.hpp"

namespace teleguard::learn {

// Per-feature standardization fitted on the training observations.
struct FeatureScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_std;

  static FeatureScaler identity(int dim);
  // Features with (near) zero spread are only centered.
  static FeatureScaler fit(const Eigen::MatrixXd& samples);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  int dim() const { return static_cast<int>(mean.size()); }

  void write(ByteWriter& out) const;
  static FeatureScaler read(ByteReader& in);
  bool operator==(const FeatureScaler& other) const {
    return mean == other.mean && inv_std == other.inv_std;
  }
};

}  // namespace teleguard::learn
