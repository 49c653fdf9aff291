#include "cb2cf/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace cb2cf::pipeline {

using json = nlohmann::json;

namespace {

std::runtime_error line_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

std::string format_rating(double r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", r);
  return buf;
}

}  // namespace

std::vector<UserHistory> load_ratings(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw line_error(path, 1, "missing header");
  strip_cr(line);
  if (line != "userId,movieId,rating,timestamp")
    throw line_error(path, 1, "expected header userId,movieId,rating,timestamp");

  std::vector<UserHistory> users;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 4) throw line_error(path, number, "expected 4 comma-separated fields");
    if (fields[0].empty() || fields[1].empty()) throw line_error(path, number, "empty user or item id");
    Rating r;
    r.item = std::string(fields[1]);
    if (!parse_number(fields[2], r.rating)) throw line_error(path, number, "unparseable rating");
    if (!(r.rating >= 0.5 && r.rating <= 5.0) || 2.0 * r.rating != std::floor(2.0 * r.rating))
      throw line_error(path, number, "rating " + std::string(fields[2]) + " is not a half-star value in [0.5, 5]");
    if (!parse_number(fields[3], r.timestamp)) throw line_error(path, number, "unparseable timestamp");
    const std::string user(fields[0]);
    auto [it, inserted] = index.try_emplace(user, users.size());
    if (inserted) users.push_back({user, {}});
    users[it->second].ratings.push_back(std::move(r));
  }
  return users;
}

void save_ratings(std::span<const UserHistory> users, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "userId,movieId,rating,timestamp\n";
  for (const auto& u : users)
    for (const auto& r : u.ratings) out << u.user << ',' << r.item << ',' << format_rating(r.rating) << ',' << r.timestamp << '\n';
}

embed::CooccurrenceSets cooccurrence_from_ratings(std::span<const UserHistory> users, double threshold) {
  embed::CooccurrenceSets sets;
  for (const auto& u : users) {
    // Latest timestamp wins; a later row breaks timestamp ties.
    std::vector<std::string> order;
    std::unordered_map<std::string, const Rating*> latest;
    for (const auto& r : u.ratings) {
      auto [it, inserted] = latest.try_emplace(r.item, &r);
      if (inserted)
        order.push_back(r.item);
      else if (r.timestamp >= it->second->timestamp)
        it->second = &r;
    }
    std::vector<std::string> liked;
    for (const auto& item : order)
      if (latest[item]->rating > threshold) liked.push_back(item);
    if (liked.size() >= 2) sets.push_back(std::move(liked));
  }
  return sets;
}

SetsFile load_sets(const std::filesystem::path& path) {
  auto in = open_in(path);
  SetsFile out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    strip_cr(line);
    for (unsigned char ch : line) {
      if (ch < 0x20 && ch != '\t') throw line_error(path, number, "control character in set line");
    }
    std::istringstream fields(line);
    std::vector<std::string> set;
    std::unordered_set<std::string> seen;
    for (std::string id; fields >> id;)
      if (seen.insert(id).second) set.push_back(id);
    if (set.size() < 2)
      ++out.dropped;
    else
      out.sets.push_back(std::move(set));
  }
  return out;
}

void save_sets(const embed::CooccurrenceSets& sets, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& set : sets) {
    for (std::size_t i = 0; i < set.size(); ++i) out << (i ? " " : "") << set[i];
    out << '\n';
  }
}

namespace {

bool is_missing(const std::string& s) { return s.empty() || s == kMissing; }

std::vector<std::string> read_tags(const json& value, const std::filesystem::path& path, std::size_t line,
                                   std::string_view key) {
  std::vector<std::string> tags;
  const auto take = [&](const json& v) {
    if (!v.is_string()) throw line_error(path, line, "field '" + std::string(key) + "' must hold strings");
    auto s = v.get<std::string>();
    if (!is_missing(s) && std::find(tags.begin(), tags.end(), s) == tags.end()) tags.push_back(std::move(s));
  };
  if (value.is_null()) return tags;
  if (value.is_array()) {
    for (const auto& v : value) take(v);
  } else {
    take(value);
  }
  return tags;
}

std::optional<int> read_year(const json& value, const std::filesystem::path& path, std::size_t line) {
  if (value.is_null()) return std::nullopt;
  long long year = 0;
  if (value.is_number_integer()) {
    year = value.get<long long>();
  } else if (value.is_number_float() && std::floor(value.get<double>()) == value.get<double>()) {
    year = static_cast<long long>(value.get<double>());
  } else if (value.is_string()) {
    const auto s = value.get<std::string>();
    if (is_missing(s)) return std::nullopt;
    if (!parse_number(std::string_view(s), year)) throw line_error(path, line, "year is not an integer");
  } else {
    throw line_error(path, line, "year is not an integer");
  }
  if (year < 1850 || year > 2100) throw line_error(path, line, "year " + std::to_string(year) + " outside 1850-2100");
  return static_cast<int>(year);
}

}  // namespace

std::vector<ContentProfile> load_metadata(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<ContentProfile> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw line_error(path, number, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw line_error(path, number, "expected a JSON object");
    ContentProfile p;
    const auto id = obj.find("id");
    if (id == obj.end() || id->is_null()) throw line_error(path, number, "missing id");
    if (id->is_string())
      p.id = id->get<std::string>();
    else if (id->is_number_integer())
      p.id = std::to_string(id->get<long long>());
    else
      throw line_error(path, number, "id must be a string or integer");
    if (p.id.empty() || p.id.find_first_of(" \t\n") != std::string::npos)
      throw line_error(path, number, "id must be nonempty without whitespace");
    if (!ids.insert(p.id).second) throw line_error(path, number, "duplicate id '" + p.id + "'");

    for (const auto& [key, value] : obj.items()) {
      if (key == "id") continue;
      if (key == "plot") {
        if (value.is_null()) continue;
        if (!value.is_string()) throw line_error(path, number, "plot must be a string");
        if (auto s = value.get<std::string>(); s != kMissing) p.plot = std::move(s);
      } else if (key == "year") {
        p.year = read_year(value, path, number);
      } else if (const auto field = parse_field(key)) {
        p.tags_of(*field) = read_tags(value, path, number, key);
      }
      // Unknown keys are ignored.
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string metadata_line(const ContentProfile& p) {
  // nlohmann orders object keys alphabetically; build the line by hand to
  // keep a fixed, readable order.
  std::string line = "{\"id\":" + json(p.id).dump();
  line += ",\"plot\":" + (p.plot ? json(*p.plot).dump() : "null");
  for (TagField f : kTagFields) line += ",\"" + std::string(field_name(f)) + "\":" + json(p.tags_of(f)).dump();
  line += ",\"year\":" + (p.year ? std::to_string(*p.year) : "null");
  return line + "}";
}

void save_metadata(std::span<const ContentProfile> profiles, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& p : profiles) out << metadata_line(p) << '\n';
}

void SyntheticSpec::validate() const {
  const auto fail = [](const std::string& what) { throw std::invalid_argument("synthetic spec: " + what); };
  if (clusters < 1 || subtopics < 1) fail("clusters and subtopics must be >= 1");
  if (items < clusters) fail("more clusters than items");
  if (dim < 2) fail("dim must be >= 2");
  if (vocabulary < 4 * clusters * subtopics) fail("vocabulary too small for the cluster/subtopic layout");
  for (std::size_t f = 0; f < 4; ++f) {
    if (tag_counts[f] < clusters) fail("each field needs at least one tag per cluster");
    if (tags_per_item[f] < 1) fail("tags per item must be >= 1");
    if (!(tag_fidelity[f] >= 0.0 && tag_fidelity[f] <= 1.0)) fail("tag fidelity must be in [0, 1]");
  }
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (set_size_min < 2 || set_size_max < set_size_min) fail("set sizes must satisfy 2 <= min <= max");
  if (plot_min_words < 1 || plot_max_words < plot_min_words) fail("plot lengths must satisfy 1 <= min <= max");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) fail("missing rate must be in [0, 1)");
}

namespace {

// Fixed-length consonant-vowel syllables: distinct indices give distinct,
// digit-free words.
std::string pseudo_word(std::size_t index, std::size_t syllables = 3) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  const std::size_t base = kConsonants.size() * kVowels.size();
  std::string out;
  for (std::size_t s = 0; s < syllables; ++s) {
    const std::size_t digit = index % base;
    index /= base;
    out += kConsonants[digit / kVowels.size()];
    out += kVowels[digit % kVowels.size()];
  }
  return out;
}

std::string capitalized(std::string s) {
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string tag_name(TagField field, std::size_t t) {
  switch (field) {
    case TagField::kGenres: return capitalized(pseudo_word(t + 1000, 2)) + "core";
    case TagField::kActors: return capitalized(pseudo_word(t + 3000, 2)) + " " + capitalized(pseudo_word(t + 9000));
    case TagField::kDirectors: return capitalized(pseudo_word(t + 5000, 2)) + " " + capitalized(pseudo_word(t + 12000));
    case TagField::kLanguages: return capitalized(pseudo_word(t + 7000, 2)) + "ish";
  }
  return "?";
}

Eigen::RowVectorXd unit_gaussian(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = g(rng);
  return v / v.norm();
}

std::size_t uniform(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct WordLayout {
  std::size_t filler_begin, filler_count;
  std::size_t signature_count;  // per cluster
  std::size_t subtopic_count;   // per (cluster, subtopic)

  std::size_t signature(std::size_t c, std::size_t k) const { return filler_count + c * signature_count + k; }
  std::size_t subtopic(std::size_t clusters, std::size_t subs, std::size_t c, std::size_t s, std::size_t k) const {
    return filler_count + clusters * signature_count + (c * subs + s) * subtopic_count + k;
  }
};

std::vector<std::string> sample_text(const WordLayout& w, const SyntheticSpec& spec, std::size_t c, std::size_t s,
                                     std::size_t length, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::string> words;
  for (std::size_t k = 0; k < length; ++k) {
    const double r = u(rng);
    std::size_t index;
    if (r < 0.35)
      index = w.signature(c, uniform(0, w.signature_count - 1, rng));
    else if (r < 0.6)
      index = w.subtopic(spec.clusters, spec.subtopics, c, s, uniform(0, w.subtopic_count - 1, rng));
    else
      index = uniform(0, w.filler_count - 1, rng);
    words.push_back(pseudo_word(index));
  }
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;

  WordLayout words{};
  words.filler_count = spec.vocabulary / 4;
  const std::size_t rest = spec.vocabulary - words.filler_count;
  words.signature_count = rest / (2 * spec.clusters);
  words.subtopic_count = rest / (2 * spec.clusters * spec.subtopics);

  std::vector<Eigen::RowVectorXd> direction, subtopic_direction;
  std::vector<double> mean_year;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    direction.push_back(unit_gaussian(spec.dim, rng));
    mean_year.push_back(1950.0 + 65.0 * u(rng));
    for (std::size_t s = 0; s < spec.subtopics; ++s) subtopic_direction.push_back(unit_gaussian(spec.dim, rng));
  }
  const Eigen::RowVectorXd era = unit_gaussian(spec.dim, rng);

  SyntheticData data;
  data.planted = embed::EmbeddingTable(spec.dim);
  std::vector<std::vector<std::size_t>> members(spec.clusters);
  for (std::size_t i = 0; i < spec.items; ++i) {
    // Round-robin keeps clusters balanced.
    const std::size_t c = i % spec.clusters;
    const std::size_t s = uniform(0, spec.subtopics - 1, rng);
    ContentProfile p;
    p.id = "m" + std::to_string(i + 1);
    const int year = std::clamp(static_cast<int>(std::lround(mean_year[c] + 6.0 * g(rng))), 1850, 2100);
    if (u(rng) >= spec.missing_rate) p.year = year;
    const auto plot = sample_text(words, spec, c, s, uniform(spec.plot_min_words, spec.plot_max_words, rng), rng);
    if (u(rng) >= spec.missing_rate) p.plot = join(plot);
    for (TagField f : kTagFields) {
      const std::size_t fi = field_index(f);
      const std::size_t owned = spec.tag_counts[fi] / spec.clusters;
      std::vector<std::string> tags;
      for (std::size_t k = 0; k < spec.tags_per_item[fi]; ++k) {
        const std::size_t t = u(rng) < spec.tag_fidelity[fi] ? c + spec.clusters * uniform(0, owned - 1, rng)
                                                             : uniform(0, spec.tag_counts[fi] - 1, rng);
        auto name = tag_name(f, t);
        if (std::find(tags.begin(), tags.end(), name) == tags.end()) tags.push_back(std::move(name));
      }
      if (u(rng) >= spec.missing_rate) p.tags_of(f) = std::move(tags);
    }
    Eigen::RowVectorXd random(static_cast<Eigen::Index>(spec.dim));
    for (auto& x : random) x = g(rng);
    const double z = (year - 1982.5) / 20.0;
    const Eigen::RowVectorXd deviation = 0.8 * z * era + 0.8 * subtopic_direction[c * spec.subtopics + s] +
                                         0.5 * random / std::sqrt(static_cast<double>(spec.dim));
    data.planted.add(p.id, direction[c] + spec.noise * deviation);
    data.profiles.push_back(std::move(p));
    data.cluster.push_back(c);
    data.corpus.push_back(plot);
    members[c].push_back(i);
  }

  for (std::size_t k = 0; k < spec.corpus_sentences; ++k) {
    const std::size_t c = uniform(0, spec.clusters - 1, rng);
    const std::size_t s = uniform(0, spec.subtopics - 1, rng);
    data.corpus.push_back(sample_text(words, spec, c, s, uniform(10, 20, rng), rng));
  }

  std::int64_t clock = 1'000'000'000;
  for (std::size_t k = 0; k < spec.sets; ++k) {
    const auto& pool = members[uniform(0, spec.clusters - 1, rng)];
    if (pool.size() < 2) continue;
    std::vector<std::size_t> picked = pool;
    std::shuffle(picked.begin(), picked.end(), rng);
    picked.resize(std::min(pool.size(), uniform(spec.set_size_min, spec.set_size_max, rng)));
    std::vector<std::string> set;
    UserHistory user{"u" + std::to_string(k + 1), {}};
    for (std::size_t i : picked) {
      set.push_back(data.profiles[i].id);
      user.ratings.push_back({data.profiles[i].id, 4.0 + 0.5 * static_cast<double>(uniform(0, 2, rng)), ++clock});
    }
    // A couple of low ratings outside the set.
    for (int extra = 0; extra < 2; ++extra) {
      const std::size_t i = uniform(0, spec.items - 1, rng);
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      user.ratings.push_back({data.profiles[i].id, 0.5 * static_cast<double>(uniform(1, 7, rng)), ++clock});
    }
    data.sets.push_back(std::move(set));
    data.ratings.push_back(std::move(user));
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_metadata(data.profiles, dir / "metadata.jsonl");
  save_sets(data.sets, dir / "sets.txt");
  save_ratings(data.ratings, dir / "ratings.csv");
  data.planted.save(dir / "planted.vec");
  auto corpus = open_out(dir / "corpus.txt");
  for (const auto& sentence : data.corpus) corpus << join(sentence) << '\n';
  auto clusters = open_out(dir / "clusters.tsv");
  for (std::size_t i = 0; i < data.profiles.size(); ++i) clusters << data.profiles[i].id << '\t' << data.cluster[i] << '\n';
}

std::map<std::string, std::string> item_labels(std::span<const ContentProfile> profiles, LabelKind kind) {
  std::map<std::string, std::string> out;
  for (const auto& p : profiles) {
    std::string label(kMissing);
    if (kind == LabelKind::kGenre && !p.tags_of(TagField::kGenres).empty()) label = p.tags_of(TagField::kGenres).front();
    if (kind == LabelKind::kYear && p.year) label = std::to_string(*p.year);
    out[p.id] = label;
  }
  return out;
}

void export_labeled_vectors(const embed::EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                            const std::filesystem::path& path) {
  for (const auto& id : table.ids()) {
    const auto it = labels.find(id);
    if (it == labels.end()) throw std::invalid_argument("no label for item '" + id + "'");
    if (it->second.find_first_of("\t\n") != std::string::npos)
      throw std::invalid_argument("label for '" + id + "' contains a tab or newline");
  }
  auto out = open_out(path);
  char buf[32];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.id(i) << '\t' << labels.at(table.id(i));
    for (double v : table.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

LabeledVectors read_labeled_vectors(const std::filesystem::path& path) {
  auto in = open_in(path);
  LabeledVectors out;
  std::string line;
  std::size_t number = 0;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++number;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 3) throw line_error(path, number, "expected id, label and at least one value");
    if (!rows.empty() && fields.size() - 2 != rows.front().size()) throw line_error(path, number, "dimension mismatch");
    ids.emplace_back(fields[0]);
    out.labels.emplace_back(fields[1]);
    std::vector<double> row;
    for (std::size_t k = 2; k < fields.size(); ++k) {
      double v = 0.0;
      if (!parse_number(fields[k], v)) throw line_error(path, number, "unparseable value");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  out.vectors = embed::EmbeddingTable(std::move(ids), std::move(m));
  return out;
}

}  // namespace cb2cf::pipeline
