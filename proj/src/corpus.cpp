#include "cb2cf/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cb2cf::corpus {
namespace {

struct CodeRange {
  char32_t first;
  char32_t last;
};

struct CaseMapping {
  char32_t upper;
  char32_t lower;
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodeRange (&table)[N], char32_t cp) {
  auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                             [](char32_t c, const CodeRange& r) { return c < r.first; });
  if (it == std::begin(table)) return false;
  --it;
  return cp <= it->last;
}

bool is_punctuation(char32_t cp) { return in_ranges(kPunctuation, cp); }
bool is_decimal_digit(char32_t cp) { return in_ranges(kDecimalDigit, cp); }

bool is_whitespace(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  auto it = std::lower_bound(std::begin(kLowercase), std::end(kLowercase), cp,
                             [](const CaseMapping& m, char32_t c) { return m.upper < c; });
  if (it != std::end(kLowercase) && it->upper == cp) return it->lower;
  return cp;
}

// Decodes one UTF-8 sequence at `pos`. Returns the byte length; `cp` is unset
// (nullopt) when the bytes are not valid UTF-8.
std::size_t decode_utf8(std::string_view s, std::size_t pos, std::optional<char32_t>& cp) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  cp.reset();
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  std::size_t len = 0;
  char32_t value = 0;
  char32_t min_value = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2; value = b0 & 0x1F; min_value = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3; value = b0 & 0x0F; min_value = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4; value = b0 & 0x07; min_value = 0x10000;
  } else {
    return 1;
  }
  if (pos + len > s.size()) return 1;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return 1;
    value = (value << 6) | (b & 0x3F);
  }
  if (value < min_value || value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF)) return 1;
  cp = value;
  return len;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };

  std::optional<char32_t> cp;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t len = decode_utf8(text, pos, cp);
    if (!cp) {
      current.append(text.substr(pos, len));
    } else if (is_whitespace(*cp)) {
      flush();
    } else if (is_decimal_digit(*cp)) {
      current.push_back('9');
    } else if (!is_punctuation(*cp)) {
      append_utf8(current, to_lower(*cp));
    }
    pos += len;
  }
  flush();
  return tokens;
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::add(std::string token, std::uint64_t count) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, std::size_t cap) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path.string());
  Vocabulary vocab;
  vocab.cap_ = cap;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected token<TAB>count");
    std::uint64_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad count");
    }
    if (vocab.size() >= cap) break;
    vocab.add(line.substr(0, tab), count);
    vocab.total_count_ += count;
  }
  return vocab;
}

Vocabulary build_vocabulary(std::span<const TokenSequence> streams, std::size_t cap) {
  if (cap < 1) throw std::invalid_argument("vocabulary cap must be >= 1");
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& stream : streams) {
    for (const auto& token : stream) {
      if (token.empty()) continue;
      ++counts[token];
      ++total;
    }
  }

  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic; a stable sort on count keeps that order for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);

  Vocabulary vocab;
  vocab.cap_ = cap;
  vocab.total_count_ = total;
  for (auto& [token, count] : ranked) vocab.add(std::move(token), count);
  return vocab;
}

std::vector<std::size_t> encode(const TokenSequence& tokens, const Vocabulary& vocab) {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& token : tokens) {
    if (auto idx = vocab.index_of(token)) out.push_back(*idx);
  }
  return out;
}

TokenSequence decode(std::span<const std::size_t> indices, const Vocabulary& vocab) {
  TokenSequence out;
  out.reserve(indices.size());
  for (auto idx : indices) out.push_back(vocab.token(idx));
  return out;
}

std::vector<TokenSequence> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus: " + path.string());
  std::vector<TokenSequence> sentences;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = tokenize(line);
    if (!tokens.empty()) sentences.push_back(std::move(tokens));
  }
  return sentences;
}

}  // namespace cb2cf::corpus
