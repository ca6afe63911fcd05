#include "teleguard/learn/feature_scaler.hpp"

#include "teleguard/common/errors.hpp"

namespace teleguard::learn {

FeatureScaler FeatureScaler::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

FeatureScaler FeatureScaler::fit(const Eigen::MatrixXd& samples) {
  if (samples.cols() == 0) return identity(static_cast<int>(samples.rows()));
  FeatureScaler s;
  s.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - s.mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  s.inv_std.resize(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    s.inv_std[i] = var[i] > 1e-12 ? 1.0 / std::sqrt(var[i]) : 1.0;
  }
  return s;
}

Eigen::MatrixXd FeatureScaler::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean.size()) throw ValidationError("FeatureScaler: dimension mismatch");
  return (x.colwise() - mean).array().colwise() * inv_std.array();
}

void FeatureScaler::write(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(mean.size()));
  out.f64s({mean.data(), static_cast<std::size_t>(mean.size())});
  out.f64s({inv_std.data(), static_cast<std::size_t>(inv_std.size())});
}

FeatureScaler FeatureScaler::read(ByteReader& in) {
  const auto n = in.u32();
  if (n > (1u << 20)) throw CorruptFileError("FeatureScaler: implausible dimension");
  FeatureScaler s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  in.f64s({s.mean.data(), n});
  in.f64s({s.inv_std.data(), n});
  return s;
}

}  // namespace teleguard::learn
