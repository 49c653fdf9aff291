#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cb2cf/embed.hpp"

// Dense/convolutional building blocks with hand-written backward passes.
// Everything runs in double precision so gradients can be checked against
// central differences.
namespace cb2cf::nn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Mode { kTrain, kEval };

/// A trainable tensor (rank <= 2) and its accumulated gradient.
struct Param {
  std::string name;
  MatrixXd value;
  MatrixXd grad;
  bool regularized = false;
  bool trainable = true;
  /// Sparse params only touch (and zero) the rows listed in `touched`.
  bool sparse = false;
  std::vector<Index> touched;
  std::vector<bool> touched_flag;

  Param() = default;
  Param(std::string name, Index rows, Index cols, bool regularized);

  void zero_grad();
  void touch(Index row);
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(MatrixXd& weight, Index fan_in, Index fan_out, Rng& rng);

/// y = W x + b, with W [out x in].
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, Index in, Index out, bool regularized, Rng& rng);

  Index in() const { return weight.value.cols(); }
  Index out() const { return weight.value.rows(); }

  VectorXd forward(const VectorXd& x) const;
  /// Accumulates dW += dy x^T and db += dy; returns W^T dy.
  VectorXd backward(const VectorXd& x, const VectorXd& dy);

  Param weight;
  Param bias;
};

/// Valid 1D convolution over the time axis followed by global max pooling.
/// Weights are stored flattened as [filters x (width * channels)], each row
/// being the filter's `width` taps laid out one after another.
class Conv1dMaxPool {
 public:
  struct Cache {
    std::vector<Index> argmax;  // window start per filter
  };

  Conv1dMaxPool() = default;
  Conv1dMaxPool(const std::string& name, Index filters, Index width, Index channels, bool regularized,
                Rng& rng);

  Index filters() const { return weight.value.rows(); }
  Index width() const { return width_; }
  Index channels() const { return channels_; }

  /// Rows at index >= `active_rows` must be zero; windows lying entirely in
  /// that zero tail are evaluated once. Ties resolve to the first position.
  VectorXd forward(const RowMatrix& x, Cache* cache, Index active_rows = -1) const;
  /// Routes each filter's gradient through its argmax window only. `dx`, when
  /// non-null, must be sized like x and is accumulated into.
  void backward(const RowMatrix& x, const Cache& cache, const VectorXd& dpooled, RowMatrix* dx);

  Param weight;
  Param bias;

 private:
  Index width_ = 0;
  Index channels_ = 0;
};

VectorXd relu(const VectorXd& x);
/// dy masked by x > 0 (zero subgradient at 0).
VectorXd relu_grad(const VectorXd& x, const VectorXd& dy);

/// Inverted dropout: kept units scaled by 1/(1-p) in training mode,
/// identity in eval mode. `mask` receives the per-unit multiplier.
VectorXd dropout(const VectorXd& x, double p, Rng& rng, Mode mode, VectorXd* mask = nullptr);

/// Per-row multipliers for dropping whole rows (0 or 1/(1-p)).
std::vector<double> row_dropout_scales(Index rows, double p, Rng& rng);

struct Loss {
  double value;
  VectorXd grad;
};

/// (1/n) sum (pred - target)^2 and its gradient (2/n)(pred - target).
Loss mse_loss(const VectorXd& pred, const VectorXd& target);

/// lambda * sum ||W||^2 over regularized params; accumulates 2 lambda W.
double l2_penalty(std::span<Param* const> params, double lambda, bool accumulate_grad = true);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Sparse params get lazy row-wise updates.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig config = {});

  void step();
  std::uint64_t timestep() const { return t_; }

 private:
  void update_rows(Param& p, MatrixXd& m, MatrixXd& v, Index row_begin, Index row_count, double c1, double c2);

  std::vector<Param*> params_;
  std::vector<MatrixXd> m_;
  std::vector<MatrixXd> v_;
  AdamConfig config_;
  std::uint64_t t_ = 0;
};

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
/// entry of `values`, using central differences of `loss`.
double grad_check(const std::function<double()>& loss, std::span<MatrixXd* const> values,
                  std::span<const MatrixXd> analytic, double eps = 1e-5, double floor = 1e-6);

struct NamedTensor {
  std::string name;
  MatrixXd value;
};

/// Binary container: magic, version, metadata string, then per tensor its
/// name, shape and row-major little-endian float64 data.
void save_tensors(const std::filesystem::path& path, const std::string& metadata,
                  std::span<const NamedTensor> tensors);

struct TensorFile {
  std::uint32_t version = 0;
  std::string metadata;
  std::vector<NamedTensor> tensors;
};

TensorFile load_tensors(const std::filesystem::path& path);

}  // namespace cb2cf::nn
