#include "cb2cf/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace cb2cf {

std::string_view field_name(TagField field) {
  switch (field) {
    case TagField::kGenres: return "genres";
    case TagField::kActors: return "actors";
    case TagField::kDirectors: return "directors";
    case TagField::kLanguages: return "languages";
  }
  return "unknown";
}

std::optional<TagField> parse_field(std::string_view name) {
  if (name == "genres" || name == "genre") return TagField::kGenres;
  if (name == "actors" || name == "actor") return TagField::kActors;
  if (name == "directors" || name == "director") return TagField::kDirectors;
  if (name == "languages" || name == "language") return TagField::kLanguages;
  return std::nullopt;
}

}  // namespace cb2cf

namespace cb2cf::features {
namespace {

corpus::TokenSequence text_tokens(const std::optional<std::string>& text) {
  if (!text) return {std::string(kMissing)};
  auto tokens = corpus::tokenize(*text);
  if (tokens.empty()) return {std::string(kMissing)};
  return tokens;
}

}  // namespace

TextIndices text_indices(const std::optional<std::string>& text, const embed::EmbeddingTable& words,
                         std::size_t max_words) {
  TextIndices out;
  out.max_words = max_words;
  for (const auto& token : text_tokens(text)) {
    if (out.rows.size() >= max_words) break;
    if (auto row = words.index_of(token)) out.rows.push_back(*row);
  }
  return out;
}

TextMatrix text_matrix(const TextIndices& indices, const RowMatrix& word_vectors) {
  TextMatrix m;
  m.values = RowMatrix::Zero(static_cast<Eigen::Index>(indices.max_words), word_vectors.cols());
  m.effective_length = indices.rows.size();
  for (std::size_t t = 0; t < indices.rows.size(); ++t)
    m.values.row(static_cast<Eigen::Index>(t)) = word_vectors.row(static_cast<Eigen::Index>(indices.rows[t]));
  return m;
}

TextMatrix text_matrix(const std::optional<std::string>& text, const embed::EmbeddingTable& words,
                       std::size_t max_words) {
  return text_matrix(text_indices(text, words, max_words), words.vectors());
}

namespace {

std::size_t count_distinct_rows(const RowMatrix& points) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(points.row(a).begin(), points.row(a).end(), points.row(b).begin(),
                                        points.row(b).end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (points.row(order[i]) != points.row(order[i - 1])) ++distinct;
  return distinct;
}

// Nearest centroid (lowest index on ties) and squared distance.
std::pair<Eigen::Index, double> nearest(const RowMatrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

}  // namespace

KMeansResult fit_kmeans(const RowMatrix& points, std::size_t clusters, std::uint64_t seed,
                        std::size_t max_iterations, double tolerance) {
  if (clusters < 1) throw std::invalid_argument("k-means: need at least one cluster");
  if (count_distinct_rows(points) < clusters)
    throw std::invalid_argument("k-means: fewer distinct points than clusters (" + std::to_string(clusters) + ")");

  const Eigen::Index n = points.rows();
  const auto k = static_cast<Eigen::Index>(clusters);
  Rng rng(seed);

  // k-means++ seeding.
  RowMatrix centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    std::discrete_distribution<Eigen::Index> pick(d2.data(), d2.data() + n);
    centroids.row(c) = points.row(pick(rng));
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }

  KMeansResult result;
  std::vector<Eigen::Index> assignment(static_cast<std::size_t>(n));
  Eigen::VectorXd dist(n);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto [c, d] = nearest(centroids, points.row(i));
      assignment[static_cast<std::size_t>(i)] = c;
      dist(i) = d;
      inertia += d;
    }
    result.inertia.push_back(inertia);

    RowMatrix sums = RowMatrix::Zero(k, points.cols());
    std::vector<std::size_t> sizes(clusters, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = assignment[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++sizes[static_cast<std::size_t>(c)];
    }
    RowMatrix updated(k, points.cols());
    for (Eigen::Index c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) {
        updated.row(c) = sums.row(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
        continue;
      }
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      updated.row(c) = points.row(far);
      dist(far) = 0.0;
    }
    const double shift = (updated - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(updated);
    result.iterations = iter + 1;
    if (shift < tolerance) break;
  }
  result.centroids = std::move(centroids);
  return result;
}

Eigen::VectorXd bow_histogram(const corpus::TokenSequence& tokens, const RowMatrix& centroids,
                              const embed::EmbeddingTable& words, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("bow: temperature must be positive");
  const Eigen::Index b = centroids.rows();
  if (b == 0) throw std::invalid_argument("bow: no centroids");
  const Eigen::VectorXd norms = centroids.rowwise().norm();
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(b);
  Eigen::VectorXd logits(b);
  bool any = false;
  for (const auto& token : tokens) {
    auto row = words.index_of(token);
    if (!row) continue;
    const auto w = words.row(*row);
    const double wn = w.norm();
    if (wn == 0.0) continue;
    for (Eigen::Index j = 0; j < b; ++j)
      logits(j) = norms(j) > 0.0 ? centroids.row(j).dot(w) / (norms(j) * wn) / temperature : 0.0;
    const double top = logits.maxCoeff();
    const Eigen::VectorXd e = (logits.array() - top).exp();
    hist += e / e.sum();
    any = true;
  }
  if (!any) return Eigen::VectorXd::Constant(b, 1.0 / static_cast<double>(b));
  return hist / hist.sum();
}

std::optional<std::size_t> FieldVocabulary::index_of(const std::string& tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void FieldVocabulary::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tags.size(); ++i) index_.emplace(tags[i], i);
}

TagVocabulary build_tag_vocab(std::span<const ContentProfile> profiles, std::size_t min_count) {
  TagVocabulary vocab;
  vocab.min_count = min_count;
  for (TagField field : kTagFields) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& p : profiles) {
      const std::set<std::string> unique(p.tags_of(field).begin(), p.tags_of(field).end());
      for (const auto& tag : unique)
        if (tag != kMissing) ++counts[tag];
    }
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (const auto& [tag, count] : counts)
      if (count >= min_count) kept.emplace_back(tag, count);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    auto& fv = vocab.fields[field_index(field)];
    fv.tags.assign(1, std::string(kMissing));
    fv.counts.assign(1, 0);
    for (auto& [tag, count] : kept) {
      fv.tags.push_back(tag);
      fv.counts.push_back(count);
    }
    fv.rebuild_index();
  }
  return vocab;
}

Eigen::VectorXd tag_vector(const ContentProfile& profile, TagField field, const FieldVocabulary& vocab) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
  bool any = false;
  for (const auto& tag : profile.tags_of(field)) {
    if (tag == kMissing) continue;
    if (auto i = vocab.index_of(tag)) {
      v(static_cast<Eigen::Index>(*i)) = 1.0;
      any = true;
    }
  }
  if (!any) v(0) = 1.0;
  return v;
}

YearStats fit_year_stats(std::span<const ContentProfile> profiles) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : profiles) {
    if (p.year) {
      sum += *p.year;
      ++n;
    }
  }
  YearStats stats;
  if (n == 0) return stats;
  stats.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& p : profiles)
    if (p.year) ss += (*p.year - stats.mean) * (*p.year - stats.mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  stats.stddev = sd > 0.0 ? sd : 1.0;
  return stats;
}

double numeric_feature(std::optional<int> year, const YearStats& stats) {
  const double filled = year ? static_cast<double>(*year) : stats.mean;
  return (filled - stats.mean) / stats.stddev;
}

FeatureContext fit_feature_context(std::span<const ContentProfile> train, embed::EmbeddingTable words,
                                   const FeatureConfig& config, const RowMatrix* centroids) {
  if (config.max_words < 1) throw std::invalid_argument("features: max_words must be >= 1");
  if (!(config.bow_temperature > 0.0)) throw std::invalid_argument("features: temperature must be positive");
  FeatureContext ctx;
  ctx.config = config;
  if (centroids) {
    ctx.centroids = *centroids;
  } else {
    ctx.centroids = fit_kmeans(words.vectors(), config.bow_centroids, config.seed).centroids;
  }
  if (static_cast<std::size_t>(ctx.centroids.cols()) != words.dim())
    throw std::invalid_argument("features: centroid dimension does not match word vectors");
  if (!words.contains(std::string(kMissing)))
    words.add(std::string(kMissing), Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(words.dim())));
  ctx.words = std::move(words);
  ctx.tags = build_tag_vocab(train, config.min_tag_count);
  ctx.years = fit_year_stats(train);
  return ctx;
}

FeatureBundle featurize_item(const ContentProfile& profile, const FeatureContext& context,
                             const FeatureNeeds& needs) {
  FeatureBundle bundle;
  if (needs.text) bundle.text = text_indices(profile.plot, context.words, context.config.max_words);
  if (needs.bow)
    bundle.bow = bow_histogram(text_tokens(profile.plot), context.centroids, context.words,
                               context.config.bow_temperature);
  for (TagField f : kTagFields) {
    if (needs.tags[field_index(f)]) bundle.tags[field_index(f)] = tag_vector(profile, f, context.tags.field(f));
  }
  if (needs.year) bundle.year = numeric_feature(profile.year, context.years);
  return bundle;
}

namespace {

void save_field(const FieldVocabulary& fv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tag vocabulary: " + path.string());
  for (std::size_t i = 0; i < fv.size(); ++i) out << fv.tags[i] << '\t' << fv.counts[i] << '\n';
}

FieldVocabulary load_field(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read tag vocabulary: " + path.string());
  FieldVocabulary fv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected tag<TAB>count");
    fv.tags.push_back(line.substr(0, tab));
    fv.counts.push_back(std::stoull(line.substr(tab + 1)));
  }
  if (fv.tags.empty() || fv.tags[0] != kMissing)
    throw std::runtime_error(path.string() + ": tag table must start with the n/a sentinel");
  fv.rebuild_index();
  return fv;
}

}  // namespace

void save_feature_context(const FeatureContext& context, const std::filesystem::path& dir,
                          const std::filesystem::path& metadata) {
  std::filesystem::create_directories(dir);
  context.words.save(dir / "words.vec");

  embed::EmbeddingTable centroid_table(static_cast<std::size_t>(context.centroids.cols()));
  for (Eigen::Index c = 0; c < context.centroids.rows(); ++c)
    centroid_table.add("c" + std::to_string(c), context.centroids.row(c));
  centroid_table.save(dir / "centroids.vec");

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["metadata"] = std::filesystem::absolute(metadata).string();
  manifest["word_vectors"] = "words.vec";
  manifest["centroids"] = "centroids.vec";
  for (TagField f : kTagFields) {
    const std::string file = "tags_" + std::string(field_name(f)) + ".tsv";
    save_field(context.tags.field(f), dir / file);
    manifest["tags"][std::string(field_name(f))] = file;
  }
  manifest["min_tag_count"] = context.tags.min_count;
  manifest["year"] = {{"mean", context.years.mean}, {"std", context.years.stddev}};
  manifest["config"] = {{"max_words", context.config.max_words},
                        {"bow_centroids", context.config.bow_centroids},
                        {"bow_temperature", context.config.bow_temperature},
                        {"min_tag_count", context.config.min_tag_count},
                        {"seed", context.config.seed}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

LoadedFeatureContext load_feature_context(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("version", 0) != 1) throw std::runtime_error("unsupported feature manifest version");

  LoadedFeatureContext loaded;
  auto& ctx = loaded.context;
  const auto& cfg = manifest.at("config");
  ctx.config.max_words = cfg.at("max_words").get<std::size_t>();
  ctx.config.bow_centroids = cfg.at("bow_centroids").get<std::size_t>();
  ctx.config.bow_temperature = cfg.at("bow_temperature").get<double>();
  ctx.config.min_tag_count = cfg.at("min_tag_count").get<std::size_t>();
  ctx.config.seed = cfg.at("seed").get<std::uint64_t>();

  loaded.word_vectors = dir / manifest.at("word_vectors").get<std::string>();
  ctx.words = embed::EmbeddingTable::load(loaded.word_vectors);
  ctx.centroids = embed::EmbeddingTable::load(dir / manifest.at("centroids").get<std::string>()).vectors();
  ctx.tags.min_count = manifest.at("min_tag_count").get<std::size_t>();
  for (TagField f : kTagFields)
    ctx.tags.fields[field_index(f)] =
        load_field(dir / manifest.at("tags").at(std::string(field_name(f))).get<std::string>());
  ctx.years.mean = manifest.at("year").at("mean").get<double>();
  ctx.years.stddev = manifest.at("year").at("std").get<double>();
  loaded.metadata = manifest.at("metadata").get<std::string>();
  return loaded;
}

}  // namespace cb2cf::features
