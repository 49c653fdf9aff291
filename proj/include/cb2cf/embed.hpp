#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cb2cf/corpus.hpp"

namespace cb2cf {

using Rng = std::mt19937_64;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace cb2cf

namespace cb2cf::embed {

/// id -> vector map with a fixed dimension. Rows are stored in insertion order.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : vectors_(0, static_cast<Eigen::Index>(dim)) {}
  EmbeddingTable(std::vector<std::string> ids, RowMatrix vectors);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  bool empty() const { return ids_.empty(); }

  const std::string& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<std::size_t> index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.contains(id); }

  auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }
  auto row(std::size_t i) { return vectors_.row(static_cast<Eigen::Index>(i)); }
  const RowMatrix& vectors() const { return vectors_; }
  RowMatrix& vectors() { return vectors_; }

  /// Appends a row; rejects duplicate ids and dimension mismatch.
  void add(const std::string& id, const Eigen::Ref<const Eigen::RowVectorXd>& vector);

  /// `count dim` header, then `id v1 ... vdim` per line; values printed with
  /// 17 significant digits so a load reproduces them exactly.
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  RowMatrix vectors_;
};

/// Cosine similarity, or nullopt when either vector has zero norm.
std::optional<double> cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                             const Eigen::Ref<const Eigen::RowVectorXd>& b);

struct Neighbor {
  std::size_t row;
  std::string id;
  double similarity;
};

/// Exact cosine top-k. Descending similarity, ties by ascending id. Zero-norm
/// table rows score -1. Rejects a zero-norm query or a dimension mismatch.
std::vector<Neighbor> similarity_search(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                        const EmbeddingTable& table, std::size_t topk,
                                        const std::unordered_set<std::string>& exclude = {});

struct SgnsConfig {
  std::size_t dim = 40;
  std::size_t epochs = 100;
  std::size_t negatives = 15;
  double subsample = 1e-4;
  std::size_t window = 4;  // word mode only
  double learning_rate = 0.025;
  double min_learning_rate_fraction = 1e-4;
  std::uint64_t seed = 1;

  static SgnsConfig words();
  static SgnsConfig items();
  void validate() const;
};

struct Pair {
  std::size_t center;
  std::size_t context;
  friend bool operator==(const Pair&, const Pair&) = default;
};

/// Skip-gram pairs with a per-position effective window drawn from 1..window.
std::vector<Pair> build_word_pairs(std::span<const std::size_t> sentence, std::size_t window, Rng& rng);

/// Every ordered pair (i, j), i != j, of a co-occurrence set (size >= 2).
std::vector<Pair> build_item_pairs(std::span<const std::size_t> set);

/// max(0, 1 - sqrt(t / f)).
double discard_probability(double frequency, double threshold);

/// Drops each element with probability discard_probability(count/total, t).
std::vector<std::size_t> subsample(std::span<const std::size_t> stream, double threshold,
                                   std::span<const std::uint64_t> counts, std::uint64_t total, Rng& rng);

/// Draws ids from the unigram^power distribution.
class NoiseSampler {
 public:
  explicit NoiseSampler(std::span<const std::uint64_t> counts, double power = 0.75);
  std::size_t operator()(Rng& rng) { return dist_(rng); }
  std::vector<double> probabilities() const { return dist_.probabilities(); }

 private:
  std::discrete_distribution<std::size_t> dist_;
};

/// Paired input/output tables and the SGNS update rule.
class SgnsModel {
 public:
  /// Input rows uniform in [-0.5/dim, 0.5/dim], output rows zero.
  SgnsModel(std::size_t vocab_size, std::size_t dim, Rng& rng);
  SgnsModel(RowMatrix input, RowMatrix output);

  /// -log s(u_c . v_ctx) - sum log s(-u_c . v_neg)
  double loss(std::size_t center, std::size_t context, std::span<const std::size_t> negatives) const;

  /// One ascent step on the log-likelihood of the pair plus its negatives.
  /// Returns the loss evaluated before the update.
  double step(std::size_t center, std::size_t context, std::span<const std::size_t> negatives, double lr);

  const RowMatrix& input() const { return input_; }
  const RowMatrix& output() const { return output_; }

 private:
  RowMatrix input_;
  RowMatrix output_;
  Eigen::RowVectorXd scratch_;
};

enum class PairMode { kWindow, kWholeSet };

/// Core training loop over index sequences. `counts` holds the corpus
/// frequency of every index; it drives subsampling and the noise distribution.
SgnsModel train_sgns(const std::vector<std::vector<std::size_t>>& sequences,
                     std::span<const std::uint64_t> counts, const SgnsConfig& config, PairMode mode);

/// Each set holds distinct item ids and has at least two members.
using CooccurrenceSets = std::vector<std::vector<std::string>>;

void validate_sets(const CooccurrenceSets& sets);

EmbeddingTable train_word2vec(const std::vector<corpus::TokenSequence>& sentences,
                              const corpus::Vocabulary& vocab, const SgnsConfig& config);

EmbeddingTable train_item2vec(const CooccurrenceSets& sets, const SgnsConfig& config);

}  // namespace cb2cf::embed
