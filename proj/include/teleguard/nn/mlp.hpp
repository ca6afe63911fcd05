#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "teleguard/common/binary_io.hpp"
#include "teleguard/common/random.hpp"

namespace teleguard::nn {

enum class Activation : std::uint8_t { kIdentity = 0, kTanh = 1, kRelu = 2 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::kIdentity;
};

// Shape-congruent with the Mlp that produced it.
struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  Eigen::VectorXd flat() const;
  bool all_zero() const;
};

// Per-layer values recorded by forward(); columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> values;  // values[0] input, values[l+1] output of layer l
  std::uint64_t revision = 0;
};

// Fully connected feed-forward network. Batched calls take one sample per column.
class Mlp {
 public:
  Mlp() = default;
  // Zero-initialized parameters.
  Mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations);

  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp uniform_init(const std::vector<int>& sizes, const std::vector<Activation>& activations,
                          Rng& rng);

  int input_dim() const;
  int output_dim() const;
  int num_layers() const { return static_cast<int>(layers_.size()); }
  Eigen::Index num_parameters() const;

  // Throws ValidationError on input dimension mismatch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache* cache = nullptr) const;
  Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const;

  // Reverse-mode gradient of <grad_output, forward(input)>. Throws std::logic_error
  // if the cache came from different parameters or has the wrong batch width.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_output,
                     Eigen::MatrixXd* grad_input = nullptr) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  DenseLayer& mutable_layer(int index);

  // Layer by layer: weight (column-major), then bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  void write(ByteWriter& out) const;
  static Mlp read(ByteReader& in);

  bool operator==(const Mlp& other) const;

 private:
  void touch();

  std::vector<DenseLayer> layers_;
  std::uint64_t revision_ = 0;
};

}  // namespace teleguard::nn
