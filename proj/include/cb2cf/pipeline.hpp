#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cb2cf/corpus.hpp"
#include "cb2cf/embed.hpp"
#include "cb2cf/profile.hpp"

namespace cb2cf::pipeline {

struct Rating {
  std::string item;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

struct UserHistory {
  std::string user;
  std::vector<Rating> ratings;

  friend bool operator==(const UserHistory&, const UserHistory&) = default;
};

/// MovieLens `userId,movieId,rating,timestamp` CSV, grouped by user in order
/// of first appearance. Ratings must lie in [0.5, 5] in half-star steps.
std::vector<UserHistory> load_ratings(const std::filesystem::path& path);
void save_ratings(std::span<const UserHistory> users, const std::filesystem::path& path);

/// Per user, items rated strictly above `threshold`; sets smaller than two are
/// dropped. A repeated (user, item) keeps the rating with the latest timestamp.
embed::CooccurrenceSets cooccurrence_from_ratings(std::span<const UserHistory> users, double threshold = 3.5);

struct SetsFile {
  embed::CooccurrenceSets sets;
  std::size_t dropped = 0;  // lines with fewer than two distinct items
};

/// One whitespace-separated set per line, deduplicated in order.
SetsFile load_sets(const std::filesystem::path& path);
void save_sets(const embed::CooccurrenceSets& sets, const std::filesystem::path& path);

/// JSON Lines with id/plot/genres/actors/directors/languages/year; any field
/// but id may be null. "n/a" values are treated as missing.
std::vector<ContentProfile> load_metadata(const std::filesystem::path& path);
/// Normalized JSON Lines: fixed key order, nulls for missing values.
void save_metadata(std::span<const ContentProfile> profiles, const std::filesystem::path& path);
std::string metadata_line(const ContentProfile& profile);

struct SyntheticSpec {
  std::size_t items = 500;
  std::size_t clusters = 10;
  std::size_t subtopics = 2;  // per cluster, carried by plot words
  std::size_t vocabulary = 600;
  std::array<std::size_t, 4> tag_counts = {20, 200, 60, 20};   // distinct tags per field
  std::array<std::size_t, 4> tags_per_item = {2, 3, 1, 1};
  std::array<double, 4> tag_fidelity = {0.55, 0.5, 0.5, 0.45};  // P(tag from own cluster)
  double noise = 0.5;
  std::size_t dim = 16;
  std::size_t sets = 2000;
  std::size_t set_size_min = 2;
  std::size_t set_size_max = 8;
  std::size_t plot_min_words = 20;
  std::size_t plot_max_words = 60;
  std::size_t corpus_sentences = 3000;
  double missing_rate = 0.03;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  std::vector<ContentProfile> profiles;
  embed::CooccurrenceSets sets;
  embed::EmbeddingTable planted;  // content-determined CF vectors, by item id
  std::vector<std::size_t> cluster;
  std::vector<corpus::TokenSequence> corpus;
  std::vector<UserHistory> ratings;
};

/// Items fall into clusters with a CF direction, signature words and signature
/// tags. An item's planted vector is its cluster direction plus `noise` times
/// a deviation built from its release year, its plot subtopic and a random
/// part, so content determines the vector up to that random part.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// metadata.jsonl, sets.txt, ratings.csv, corpus.txt, planted.vec, clusters.tsv.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

enum class LabelKind { kGenre, kYear };

/// First genre tag or release year; "n/a" when missing.
std::map<std::string, std::string> item_labels(std::span<const ContentProfile> profiles, LabelKind kind);

/// `id<TAB>label<TAB>v1..vn` for every row of `table`.
void export_labeled_vectors(const embed::EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                            const std::filesystem::path& path);

struct LabeledVectors {
  std::vector<std::string> labels;
  embed::EmbeddingTable vectors;
};

LabeledVectors read_labeled_vectors(const std::filesystem::path& path);

}  // namespace cb2cf::pipeline
