#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cb2cf/corpus.hpp"
#include "cb2cf/embed.hpp"
#include "cb2cf/profile.hpp"

namespace cb2cf::features {

/// Word-table rows for the first `max_words` in-vocabulary words of a text.
/// A missing or empty text becomes the single token "n/a".
struct TextIndices {
  std::vector<std::size_t> rows;
  std::size_t max_words = 0;

  std::size_t effective_length() const { return rows.size(); }
  friend bool operator==(const TextIndices&, const TextIndices&) = default;
};

TextIndices text_indices(const std::optional<std::string>& text, const embed::EmbeddingTable& words,
                         std::size_t max_words);

/// `max_words` x dim matrix; rows past effective_length are zero.
struct TextMatrix {
  RowMatrix values;
  std::size_t effective_length = 0;
};

TextMatrix text_matrix(const TextIndices& indices, const RowMatrix& word_vectors);
TextMatrix text_matrix(const std::optional<std::string>& text, const embed::EmbeddingTable& words,
                       std::size_t max_words);

struct KMeansResult {
  RowMatrix centroids;
  std::vector<double> inertia;  // after each assignment step
  std::size_t iterations = 0;
};

/// k-means++ seeding, then Lloyd iterations until the largest centroid shift
/// drops below `tolerance` or `max_iterations` is reached. Empty clusters are
/// reseeded to the point farthest from its centroid.
KMeansResult fit_kmeans(const RowMatrix& points, std::size_t clusters, std::uint64_t seed,
                        std::size_t max_iterations = 100, double tolerance = 1e-6);

/// Soft assignment of each word to centroids, softmax(cos(w, c_j) / tau),
/// summed and normalized. No usable words gives the uniform histogram.
Eigen::VectorXd bow_histogram(const corpus::TokenSequence& tokens, const RowMatrix& centroids,
                              const embed::EmbeddingTable& words, double temperature);

struct FieldVocabulary {
  std::vector<std::string> tags;  // index 0 is "n/a"
  std::vector<std::uint64_t> counts;

  std::size_t size() const { return tags.size(); }
  std::optional<std::size_t> index_of(const std::string& tag) const;
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct TagVocabulary {
  std::size_t min_count = 5;
  std::array<FieldVocabulary, 4> fields;

  const FieldVocabulary& field(TagField f) const { return fields[field_index(f)]; }
};

/// Per field, tags seen on at least `min_count` items, ordered by descending
/// count then lexicographically, after the "n/a" sentinel.
TagVocabulary build_tag_vocab(std::span<const ContentProfile> profiles, std::size_t min_count = 5);

/// Binary vector over the field vocabulary; only "n/a" is set when none of
/// the item's tags survived.
Eigen::VectorXd tag_vector(const ContentProfile& profile, TagField field, const FieldVocabulary& vocab);

struct YearStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Mean and population std of the known years; std falls back to 1 when the
/// years carry no spread.
YearStats fit_year_stats(std::span<const ContentProfile> profiles);

/// Missing years take the mean, so they standardize to 0.
double numeric_feature(std::optional<int> year, const YearStats& stats);

struct FeatureConfig {
  std::size_t max_words = 500;
  std::size_t bow_centroids = 250;
  double bow_temperature = 0.1;
  std::size_t min_tag_count = 5;
  std::uint64_t seed = 1;
};

/// Everything fitted on the training split that featurization needs.
struct FeatureContext {
  FeatureConfig config;
  embed::EmbeddingTable words;  // always holds a "n/a" row
  RowMatrix centroids;
  TagVocabulary tags;
  YearStats years;
};

/// Fits tag vocabularies and year stats on `train`. Centroids are computed from
/// the word table unless `centroids` is given (they never depend on items).
FeatureContext fit_feature_context(std::span<const ContentProfile> train, embed::EmbeddingTable words,
                                   const FeatureConfig& config, const RowMatrix* centroids = nullptr);

struct FeatureNeeds {
  bool text = false;
  bool bow = false;
  std::array<bool, 4> tags{};
  bool year = false;
};

struct FeatureBundle {
  std::optional<TextIndices> text;
  std::optional<Eigen::VectorXd> bow;
  std::array<std::optional<Eigen::VectorXd>, 4> tags;
  std::optional<double> year;
};

FeatureBundle featurize_item(const ContentProfile& profile, const FeatureContext& context,
                             const FeatureNeeds& needs);

/// Writes manifest.json plus word/centroid vector files and per-field tag
/// tables into `dir`. `metadata` is recorded so the context can be refitted.
void save_feature_context(const FeatureContext& context, const std::filesystem::path& dir,
                          const std::filesystem::path& metadata);

struct LoadedFeatureContext {
  FeatureContext context;
  std::filesystem::path metadata;
  std::filesystem::path word_vectors;
};

LoadedFeatureContext load_feature_context(const std::filesystem::path& dir);

}  // namespace cb2cf::features
