#include "cb2cf/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cb2cf::nn {

Param::Param(std::string name_, Index rows, Index cols, bool regularized_)
    : name(std::move(name_)),
      value(MatrixXd::Zero(rows, cols)),
      grad(MatrixXd::Zero(rows, cols)),
      regularized(regularized_) {}

void Param::zero_grad() {
  if (sparse) {
    for (Index r : touched) {
      grad.row(r).setZero();
      touched_flag[static_cast<std::size_t>(r)] = false;
    }
    touched.clear();
  } else {
    grad.setZero();
  }
}

void Param::touch(Index row) {
  if (!sparse) return;
  if (touched_flag.size() != static_cast<std::size_t>(value.rows())) touched_flag.assign(value.rows(), false);
  if (!touched_flag[static_cast<std::size_t>(row)]) {
    touched_flag[static_cast<std::size_t>(row)] = true;
    touched.push_back(row);
  }
}

void glorot_uniform(MatrixXd& weight, Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Index i = 0; i < weight.size(); ++i) weight.data()[i] = u(rng);
}

Dense::Dense(const std::string& name, Index in, Index out, bool regularized, Rng& rng)
    : weight(name + ".weight", out, in, regularized), bias(name + ".bias", out, 1, false) {
  if (in < 1 || out < 1) throw std::invalid_argument("dense '" + name + "': dimensions must be >= 1");
  glorot_uniform(weight.value, in, out, rng);
}

VectorXd Dense::forward(const VectorXd& x) const {
  if (x.size() != in()) {
    throw std::invalid_argument(weight.name + ": input size " + std::to_string(x.size()) + " != " +
                                std::to_string(in()));
  }
  return weight.value * x + bias.value.col(0);
}

VectorXd Dense::backward(const VectorXd& x, const VectorXd& dy) {
  if (x.size() != in() || dy.size() != out()) throw std::invalid_argument(weight.name + ": backward shape mismatch");
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy;
  return weight.value.transpose() * dy;
}

Conv1dMaxPool::Conv1dMaxPool(const std::string& name, Index filters, Index width, Index channels,
                             bool regularized, Rng& rng)
    : weight(name + ".weight", filters, width * channels, regularized),
      bias(name + ".bias", filters, 1, false),
      width_(width),
      channels_(channels) {
  if (filters < 1 || width < 1 || channels < 1)
    throw std::invalid_argument("conv '" + name + "': dimensions must be >= 1");
  glorot_uniform(weight.value, width * channels, filters, rng);
}

VectorXd Conv1dMaxPool::forward(const RowMatrix& x, Cache* cache, Index active_rows) const {
  const Index rows = x.rows();
  if (x.cols() != channels_) throw std::invalid_argument(weight.name + ": channel mismatch");
  if (rows < width_) throw std::invalid_argument(weight.name + ": input shorter than filter width");
  const Index positions = rows - width_ + 1;
  const Index active = active_rows < 0 ? rows : std::min(active_rows, rows);
  const Index computed = std::min(positions, active);

  // Column t of `windows` is the flattened window starting at row t.
  using WindowMap = Eigen::Map<const MatrixXd, 0, Eigen::OuterStride<>>;
  const WindowMap windows(x.data(), width_ * channels_, computed, Eigen::OuterStride<>(channels_));
  MatrixXd scores = weight.value * windows;

  const Index filters = weight.value.rows();
  VectorXd pooled(filters);
  std::vector<Index> argmax(static_cast<std::size_t>(filters), 0);
  const bool zero_window = positions > active;
  for (Index f = 0; f < filters; ++f) {
    double best = -std::numeric_limits<double>::infinity();
    Index best_t = 0;
    for (Index t = 0; t < computed; ++t) {
      if (scores(f, t) > best) {
        best = scores(f, t);
        best_t = t;
      }
    }
    if (zero_window && 0.0 > best) {
      best = 0.0;
      best_t = active;
    }
    pooled(f) = best + bias.value(f, 0);
    argmax[static_cast<std::size_t>(f)] = best_t;
  }
  if (cache) cache->argmax = std::move(argmax);
  return pooled;
}

void Conv1dMaxPool::backward(const RowMatrix& x, const Cache& cache, const VectorXd& dpooled, RowMatrix* dx) {
  const Index span = width_ * channels_;
  for (Index f = 0; f < weight.value.rows(); ++f) {
    const double g = dpooled(f);
    if (g == 0.0) continue;
    const Index t = cache.argmax[static_cast<std::size_t>(f)];
    Eigen::Map<const Eigen::RowVectorXd> window(x.data() + t * channels_, span);
    weight.grad.row(f) += g * window;
    bias.grad(f, 0) += g;
    if (dx) {
      Eigen::Map<Eigen::RowVectorXd> dwindow(dx->data() + t * channels_, span);
      dwindow += g * weight.value.row(f);
    }
  }
}

VectorXd relu(const VectorXd& x) { return x.cwiseMax(0.0); }

VectorXd relu_grad(const VectorXd& x, const VectorXd& dy) {
  return (x.array() > 0.0).select(dy, 0.0);
}

VectorXd dropout(const VectorXd& x, double p, Rng& rng, Mode mode, VectorXd* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (mode == Mode::kEval || p == 0.0) {
    if (mask) *mask = VectorXd::Ones(x.size());
    return x;
  }
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  VectorXd m(x.size());
  for (Index i = 0; i < x.size(); ++i) m(i) = keep(rng) ? scale : 0.0;
  VectorXd out = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return out;
}

std::vector<double> row_dropout_scales(Index rows, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("word dropout: p must be in [0, 1)");
  std::vector<double> scales(static_cast<std::size_t>(rows), 1.0);
  if (p == 0.0) return scales;
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (auto& s : scales) s = keep(rng) ? scale : 0.0;
  return scales;
}

Loss mse_loss(const VectorXd& pred, const VectorXd& target) {
  if (pred.size() != target.size() || pred.size() == 0) throw std::invalid_argument("mse: shape mismatch");
  const VectorXd diff = pred - target;
  const double n = static_cast<double>(pred.size());
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

double l2_penalty(std::span<Param* const> params, double lambda, bool accumulate_grad) {
  if (lambda < 0.0) throw std::invalid_argument("l2: lambda must be >= 0");
  double penalty = 0.0;
  for (Param* p : params) {
    if (!p->regularized) continue;
    penalty += lambda * p->value.squaredNorm();
    if (accumulate_grad && lambda > 0.0) p->grad += (2.0 * lambda) * p->value;
  }
  return penalty;
}

Adam::Adam(std::vector<Param*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (Param* p : params_) {
    m_.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::update_rows(Param& p, MatrixXd& m, MatrixXd& v, Index row_begin, Index row_count, double c1,
                       double c2) {
  auto g = p.grad.middleRows(row_begin, row_count).array();
  auto mr = m.middleRows(row_begin, row_count).array();
  auto vr = v.middleRows(row_begin, row_count).array();
  mr = config_.beta1 * mr + (1.0 - config_.beta1) * g;
  vr = config_.beta2 * vr + (1.0 - config_.beta2) * g.square();
  p.value.middleRows(row_begin, row_count).array() -=
      config_.learning_rate * (mr / c1) / ((vr / c2).sqrt() + config_.epsilon);
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (!p.trainable) continue;
    if (p.sparse) {
      for (Index r : p.touched) update_rows(p, m_[i], v_[i], r, 1, c1, c2);
    } else {
      update_rows(p, m_[i], v_[i], 0, p.value.rows(), c1, c2);
    }
  }
}

double grad_check(const std::function<double()>& loss, std::span<MatrixXd* const> values,
                  std::span<const MatrixXd> analytic, double eps, double floor) {
  if (values.size() != analytic.size()) throw std::invalid_argument("grad_check: size mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    MatrixXd& v = *values[k];
    if (v.rows() != analytic[k].rows() || v.cols() != analytic[k].cols())
      throw std::invalid_argument("grad_check: shape mismatch");
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v.data()[i];
      v.data()[i] = saved + eps;
      const double plus = loss();
      v.data()[i] = saved - eps;
      const double minus = loss();
      v.data()[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

namespace {

constexpr char kMagic[8] = {'C', 'B', '2', 'C', 'F', 'N', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "tensor container assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw std::runtime_error("truncated tensor file: " + what);
  return value;
}

std::string read_string(std::ifstream& in, std::uint64_t size, const std::string& what) {
  std::string s(size, '\0');
  if (size && !in.read(s.data(), static_cast<std::streamsize>(size)))
    throw std::runtime_error("truncated tensor file: " + what);
  return s;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::string& metadata,
                  std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write tensors: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint64_t>(out, metadata.size());
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint32_t>(out, 2);
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    const RowMatrix row_major = t.value;
    out.write(reinterpret_cast<const char*>(row_major.data()),
              static_cast<std::streamsize>(row_major.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing tensors: " + path.string());
}

TensorFile load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read tensors: " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path.string() + ": not a tensor container");
  TensorFile file;
  file.version = read_pod<std::uint32_t>(in, "version");
  if (file.version != kVersion)
    throw std::runtime_error(path.string() + ": unsupported container version " + std::to_string(file.version));
  file.metadata = read_string(in, read_pod<std::uint64_t>(in, "metadata"), "metadata");
  const auto count = read_pod<std::uint32_t>(in, "count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = read_string(in, read_pod<std::uint32_t>(in, "name"), "name");
    const auto rank = read_pod<std::uint32_t>(in, t.name);
    if (rank != 2) throw std::runtime_error(path.string() + ": tensor '" + t.name + "' has unsupported rank");
    const auto rows = read_pod<std::uint64_t>(in, t.name);
    const auto cols = read_pod<std::uint64_t>(in, t.name);
    RowMatrix data(static_cast<Index>(rows), static_cast<Index>(cols));
    if (data.size() &&
        !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw std::runtime_error("truncated tensor file: " + t.name);
    t.value = data;
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace cb2cf::nn
