#include "cb2cf/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cb2cf::embed {
namespace {

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool has_whitespace(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> ids, RowMatrix vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows())
    throw std::invalid_argument("embedding table: id count does not match row count");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second)
      throw std::invalid_argument("embedding table: duplicate id '" + ids_[i] + "'");
  }
}

std::optional<std::size_t> EmbeddingTable::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingTable::add(const std::string& id, const Eigen::Ref<const Eigen::RowVectorXd>& vector) {
  if (static_cast<std::size_t>(vector.size()) != dim())
    throw std::invalid_argument("embedding table: dimension mismatch for '" + id + "'");
  if (!index_.emplace(id, ids_.size()).second)
    throw std::invalid_argument("embedding table: duplicate id '" + id + "'");
  ids_.push_back(id);
  vectors_.conservativeResize(vectors_.rows() + 1, Eigen::NoChange);
  vectors_.row(vectors_.rows() - 1) = vector;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write vectors: " + path.string());
  std::fprintf(f, "%zu %zu\n", size(), dim());
  for (std::size_t i = 0; i < size(); ++i) {
    if (ids_[i].empty() || has_whitespace(ids_[i])) {
      std::fclose(f);
      throw std::runtime_error("vector id must be nonempty without whitespace: '" + ids_[i] + "'");
    }
    std::fputs(ids_[i].c_str(), f);
    for (Eigen::Index j = 0; j < vectors_.cols(); ++j)
      std::fprintf(f, " %.17g", vectors_(static_cast<Eigen::Index>(i), j));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vectors: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
  std::istringstream header(line);
  std::size_t count = 0, dim = 0;
  if (!(header >> count >> dim) || dim == 0)
    throw std::runtime_error(path.string() + ":1: expected 'count dim' header");

  std::vector<std::string> ids;
  RowMatrix vectors(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 2);
    if (!std::getline(in, line)) throw std::runtime_error(where + ": unexpected end of file");
    std::istringstream row(line);
    std::string id;
    row >> id;
    for (std::size_t j = 0; j < dim; ++j) {
      std::string token;
      if (!(row >> token)) throw std::runtime_error(where + ": expected " + std::to_string(dim) + " values");
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size() || !std::isfinite(v))
        throw std::runtime_error(where + ": bad value '" + token + "'");
      vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
    std::string extra;
    if (row >> extra) throw std::runtime_error(where + ": too many values");
    ids.push_back(std::move(id));
  }
  return EmbeddingTable(std::move(ids), std::move(vectors));
}

std::optional<double> cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                             const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return a.dot(b) / (na * nb);
}

std::vector<Neighbor> similarity_search(const Eigen::Ref<const Eigen::RowVectorXd>& query,
                                        const EmbeddingTable& table, std::size_t topk,
                                        const std::unordered_set<std::string>& exclude) {
  if (static_cast<std::size_t>(query.size()) != table.dim())
    throw std::invalid_argument("similarity search: query dimension mismatch");
  if (query.norm() == 0.0) throw std::invalid_argument("similarity search: zero-norm query");

  std::vector<Neighbor> all;
  all.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (exclude.contains(table.id(i))) continue;
    all.push_back({i, table.id(i), cosine(query, table.row(i)).value_or(-1.0)});
  }
  auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  };
  const std::size_t k = std::min(topk, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

SgnsConfig SgnsConfig::words() {
  SgnsConfig c;
  c.dim = 100;
  c.subsample = 1e-5;
  return c;
}

SgnsConfig SgnsConfig::items() { return SgnsConfig{}; }

void SgnsConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("sgns: dim must be >= 1");
  if (negatives < 1) throw std::invalid_argument("sgns: negatives must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw std::invalid_argument("sgns: subsample must be in (0, 1]");
  if (epochs < 1) throw std::invalid_argument("sgns: epochs must be >= 1");
  if (window < 1) throw std::invalid_argument("sgns: window must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("sgns: learning rate must be positive");
}

std::vector<Pair> build_word_pairs(std::span<const std::size_t> sentence, std::size_t window, Rng& rng) {
  if (window < 1) throw std::invalid_argument("build_word_pairs: window must be >= 1");
  std::vector<Pair> pairs;
  std::uniform_int_distribution<std::size_t> draw(1, window);
  const std::size_t n = sentence.size();
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t w = draw(rng);
    const std::size_t lo = pos >= w ? pos - w : 0;
    const std::size_t hi = std::min(n - 1, pos + w);
    for (std::size_t ctx = lo; ctx <= hi; ++ctx) {
      if (ctx != pos) pairs.push_back({sentence[pos], sentence[ctx]});
    }
  }
  return pairs;
}

std::vector<Pair> build_item_pairs(std::span<const std::size_t> set) {
  if (set.size() < 2) throw std::invalid_argument("build_item_pairs: set must have at least 2 items");
  std::vector<Pair> pairs;
  pairs.reserve(set.size() * (set.size() - 1));
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = 0; j < set.size(); ++j)
      if (i != j) pairs.push_back({set[i], set[j]});
  return pairs;
}

double discard_probability(double frequency, double threshold) {
  if (frequency <= 0.0) return 0.0;
  return std::max(0.0, 1.0 - std::sqrt(threshold / frequency));
}

std::vector<std::size_t> subsample(std::span<const std::size_t> stream, double threshold,
                                   std::span<const std::uint64_t> counts, std::uint64_t total, Rng& rng) {
  std::vector<std::size_t> kept;
  kept.reserve(stream.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto id : stream) {
    const double f = static_cast<double>(counts[id]) / static_cast<double>(total);
    const double p = discard_probability(f, threshold);
    if (p > 0.0 && unit(rng) < p) continue;
    kept.push_back(id);
  }
  return kept;
}

NoiseSampler::NoiseSampler(std::span<const std::uint64_t> counts, double power) {
  std::vector<double> weights(counts.size());
  std::transform(counts.begin(), counts.end(), weights.begin(),
                 [power](std::uint64_t c) { return std::pow(static_cast<double>(c), power); });
  dist_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
}

SgnsModel::SgnsModel(std::size_t vocab_size, std::size_t dim, Rng& rng)
    : input_(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dim)),
      output_(RowMatrix::Zero(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dim))),
      scratch_(static_cast<Eigen::Index>(dim)) {
  const double half = 0.5 / static_cast<double>(dim);
  std::uniform_real_distribution<double> init(-half, half);
  for (Eigen::Index i = 0; i < input_.size(); ++i) input_.data()[i] = init(rng);
}

SgnsModel::SgnsModel(RowMatrix input, RowMatrix output)
    : input_(std::move(input)), output_(std::move(output)), scratch_(input_.cols()) {
  if (input_.rows() != output_.rows() || input_.cols() != output_.cols())
    throw std::invalid_argument("sgns model: input/output shape mismatch");
}

double SgnsModel::loss(std::size_t center, std::size_t context, std::span<const std::size_t> negatives) const {
  const auto u = input_.row(static_cast<Eigen::Index>(center));
  double l = -log_sigmoid(u.dot(output_.row(static_cast<Eigen::Index>(context))));
  for (auto n : negatives) l -= log_sigmoid(-u.dot(output_.row(static_cast<Eigen::Index>(n))));
  return l;
}

double SgnsModel::step(std::size_t center, std::size_t context, std::span<const std::size_t> negatives,
                       double lr) {
  auto u = input_.row(static_cast<Eigen::Index>(center));
  scratch_.setZero();
  double l = 0.0;
  auto update = [&](std::size_t target, double label) {
    auto v = output_.row(static_cast<Eigen::Index>(target));
    const double score = u.dot(v);
    l -= log_sigmoid(label > 0.5 ? score : -score);
    const double g = lr * (label - sigmoid(score));
    scratch_.noalias() += g * v;
    v.noalias() += g * u;
  };
  update(context, 1.0);
  for (auto n : negatives) update(n, 0.0);
  u += scratch_;
  return l;
}

SgnsModel train_sgns(const std::vector<std::vector<std::size_t>>& sequences,
                     std::span<const std::uint64_t> counts, const SgnsConfig& config, PairMode mode) {
  config.validate();
  if (sequences.empty()) throw std::invalid_argument("train_sgns: empty training data");
  if (counts.size() < 2) throw std::invalid_argument("train_sgns: need at least two distinct ids");

  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  std::uint64_t elements_per_epoch = 0;
  for (const auto& s : sequences) {
    for (auto id : s) {
      if (id >= counts.size()) throw std::invalid_argument("train_sgns: id outside count table");
    }
    elements_per_epoch += s.size();
  }
  if (elements_per_epoch == 0 || total == 0) throw std::invalid_argument("train_sgns: empty training data");

  Rng rng(config.seed);
  SgnsModel model(counts.size(), config.dim, rng);
  NoiseSampler noise(counts);

  const double planned = static_cast<double>(elements_per_epoch) * static_cast<double>(config.epochs);
  const double floor_fraction = config.min_learning_rate_fraction;
  std::uint64_t processed = 0;
  std::vector<std::size_t> negatives(config.negatives);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      const double progress = static_cast<double>(processed) / planned;
      const double lr = config.learning_rate * (1.0 - progress * (1.0 - floor_fraction));
      processed += seq.size();

      const auto kept = subsample(seq, config.subsample, counts, total, rng);
      std::vector<Pair> pairs;
      if (mode == PairMode::kWindow) {
        pairs = build_word_pairs(kept, config.window, rng);
      } else if (kept.size() >= 2) {
        pairs = build_item_pairs(kept);
      }
      for (const auto& pair : pairs) {
        for (auto& n : negatives) {
          do {
            n = noise(rng);
          } while (n == pair.context);
        }
        model.step(pair.center, pair.context, negatives, lr);
      }
    }
  }
  return model;
}

void validate_sets(const CooccurrenceSets& sets) {
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].size() < 2)
      throw std::invalid_argument("co-occurrence set " + std::to_string(i) + " has fewer than 2 items");
    std::unordered_set<std::string> seen(sets[i].begin(), sets[i].end());
    if (seen.size() != sets[i].size())
      throw std::invalid_argument("co-occurrence set " + std::to_string(i) + " has duplicate items");
  }
}

namespace {

EmbeddingTable to_table(const SgnsModel& model, const corpus::Vocabulary& vocab) {
  return EmbeddingTable(vocab.tokens(), model.input());
}

}  // namespace

EmbeddingTable train_word2vec(const std::vector<corpus::TokenSequence>& sentences,
                              const corpus::Vocabulary& vocab, const SgnsConfig& config) {
  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(sentences.size());
  for (const auto& s : sentences) {
    auto e = corpus::encode(s, vocab);
    if (!e.empty()) encoded.push_back(std::move(e));
  }
  if (encoded.empty()) throw std::invalid_argument("train_word2vec: no in-vocabulary tokens");
  return to_table(train_sgns(encoded, vocab.counts(), config, PairMode::kWindow), vocab);
}

EmbeddingTable train_item2vec(const CooccurrenceSets& sets, const SgnsConfig& config) {
  if (sets.empty()) throw std::invalid_argument("train_item2vec: no co-occurrence sets");
  validate_sets(sets);
  // Item ids share the vocabulary shape: frequency-ranked, ties lexicographic.
  const auto vocab = corpus::build_vocabulary(sets, std::numeric_limits<std::size_t>::max());
  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(sets.size());
  for (const auto& s : sets) encoded.push_back(corpus::encode(s, vocab));
  return to_table(train_sgns(encoded, vocab.counts(), config, PairMode::kWholeSet), vocab);
}

}  // namespace cb2cf::embed
