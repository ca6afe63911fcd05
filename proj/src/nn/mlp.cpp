#include "teleguard/nn/mlp.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "teleguard/common/errors.hpp"

namespace teleguard::nn {
namespace {

std::atomic<std::uint64_t> g_revision{1};

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::kIdentity: break;
    // 1 - 2 / (exp(2z) + 1): Eigen vectorizes exp for doubles but not tanh.
    case Activation::kTanh: z = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix(); break;
    case Activation::kRelu: z = z.cwiseMax(0.0); break;
  }
}

// Derivative expressed through the activation output y.
Eigen::MatrixXd activation_slope(Activation act, const Eigen::MatrixXd& y) {
  switch (act) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(y.rows(), y.cols());
    case Activation::kTanh: return (1.0 - y.array().square()).matrix();
    case Activation::kRelu: return (y.array() > 0.0).cast<double>().matrix();
  }
  return Eigen::MatrixXd::Ones(y.rows(), y.cols());
}

}  // namespace

Eigen::VectorXd Gradients::flat() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weight.size(); ++l) n += weight[l].size() + bias[l].size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.segment(k, weight[l].size()) = weight[l].reshaped();
    k += weight[l].size();
    out.segment(k, bias[l].size()) = bias[l];
    k += bias[l].size();
  }
  return out;
}

bool Gradients::all_zero() const {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    if (!weight[l].isZero(0.0) || !bias[l].isZero(0.0)) return false;
  }
  return true;
}

Mlp::Mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations) {
  if (sizes.size() < 2 || activations.size() != sizes.size() - 1) {
    throw ValidationError("Mlp: need at least two sizes and one activation per layer");
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] < 1 || sizes[l + 1] < 1) throw ValidationError("Mlp: layer sizes must be >= 1");
    layers_.push_back({Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]),
                       Eigen::VectorXd::Zero(sizes[l + 1]), activations[l]});
  }
  touch();
}

Mlp Mlp::uniform_init(const std::vector<int>& sizes, const std::vector<Activation>& activations,
                      Rng& rng) {
  Mlp net(sizes, activations);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
  }
  net.touch();
  return net;
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

Eigen::Index Mlp::num_parameters() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, ForwardCache* cache) const {
  if (layers_.empty()) throw std::logic_error("Mlp::forward on an empty network");
  if (input.rows() != input_dim()) {
    throw ValidationError("Mlp::forward: input has " + std::to_string(input.rows()) +
                          " rows, expected " + std::to_string(input_dim()));
  }
  if (cache) {
    cache->values.clear();
    cache->values.reserve(layers_.size() + 1);
    cache->values.push_back(input);
    cache->revision = revision_;
  }
  Eigen::MatrixXd x = input;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    apply_activation(layer.activation, z);
    x = std::move(z);
    if (cache) cache->values.push_back(x);
  }
  return x;
}

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Gradients Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_output,
                        Eigen::MatrixXd* grad_input) const {
  if (cache.revision != revision_ || cache.values.size() != layers_.size() + 1) {
    throw std::logic_error("Mlp::backward: stale forward cache");
  }
  if (grad_output.rows() != output_dim() || grad_output.cols() != cache.values.back().cols()) {
    throw ValidationError("Mlp::backward: output-gradient shape mismatch");
  }
  Gradients grads;
  grads.weight.resize(layers_.size());
  grads.bias.resize(layers_.size());
  Eigen::MatrixXd g = grad_output;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const auto& layer = layers_[l];
    const Eigen::MatrixXd dz =
        g.cwiseProduct(activation_slope(layer.activation, cache.values[l + 1]));
    grads.weight[l] = dz * cache.values[l].transpose();
    grads.bias[l] = dz.rowwise().sum();
    if (l > 0 || grad_input) g = layer.weight.transpose() * dz;
  }
  if (grad_input) *grad_input = std::move(g);
  return grads;
}

DenseLayer& Mlp::mutable_layer(int index) {
  touch();
  return layers_.at(index);
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd out(num_parameters());
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    out.segment(k, l.weight.size()) = l.weight.reshaped();
    k += l.weight.size();
    out.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return out;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != num_parameters()) throw ValidationError("Mlp::set_parameters: size mismatch");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    l.weight.reshaped() = flat.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
  touch();
}

void Mlp::write(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(layers_.size()));
  out.u32(static_cast<std::uint32_t>(input_dim()));
  for (const auto& l : layers_) {
    out.u32(static_cast<std::uint32_t>(l.weight.rows()));
    out.u8(static_cast<std::uint8_t>(l.activation));
  }
  for (const auto& l : layers_) {
    out.f64s({l.weight.data(), static_cast<std::size_t>(l.weight.size())});
    out.f64s({l.bias.data(), static_cast<std::size_t>(l.bias.size())});
  }
}

Mlp Mlp::read(ByteReader& in) {
  const auto n_layers = in.u32();
  if (n_layers == 0 || n_layers > 64) throw CorruptFileError("Mlp: implausible layer count");
  std::vector<int> sizes{static_cast<int>(in.u32())};
  std::vector<Activation> acts;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto size = in.u32();
    const auto act = in.u8();
    if (size == 0 || size > (1u << 20)) throw CorruptFileError("Mlp: implausible layer size");
    if (act > 2) throw CorruptFileError("Mlp: unknown activation code");
    sizes.push_back(static_cast<int>(size));
    acts.push_back(static_cast<Activation>(act));
  }
  if (sizes.front() == 0 || static_cast<std::uint32_t>(sizes.front()) > (1u << 20)) {
    throw CorruptFileError("Mlp: implausible input size");
  }
  Mlp net(sizes, acts);
  for (auto& l : net.layers_) {
    in.f64s({l.weight.data(), static_cast<std::size_t>(l.weight.size())});
    in.f64s({l.bias.data(), static_cast<std::size_t>(l.bias.size())});
  }
  net.touch();
  return net;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
        a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

void Mlp::touch() { revision_ = g_revision.fetch_add(1); }

}  // namespace teleguard::nn
