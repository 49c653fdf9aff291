#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cb2cf::corpus {

using TokenSequence = std::vector<std::string>;

/// Lowercases, rewrites every decimal digit to '9', strips punctuation
/// (Unicode P* plus ASCII `~^|<>=+`) and splits on whitespace. Empty tokens
/// are dropped. Invalid UTF-8 bytes pass through unchanged.
TokenSequence tokenize(std::string_view text);

/// Frequency-ranked token table. Index 0 is the most frequent token.
class Vocabulary {
 public:
  static constexpr std::size_t kDefaultCap = 50000;

  Vocabulary() = default;

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  std::size_t cap() const { return cap_; }
  std::uint64_t total_count() const { return total_count_; }

  std::optional<std::size_t> index_of(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::uint64_t count(std::size_t index) const { return counts_.at(index); }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  /// Writes `token<TAB>count` lines in rank order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path, std::size_t cap = kDefaultCap);

  friend Vocabulary build_vocabulary(std::span<const TokenSequence> streams, std::size_t cap);
  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  void add(std::string token, std::uint64_t count);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t total_count_ = 0;
  std::size_t cap_ = kDefaultCap;
};

/// Keeps the `cap` most frequent tokens; ties broken lexicographically.
/// `total_count` counts every token in the streams, retained or not.
Vocabulary build_vocabulary(std::span<const TokenSequence> streams,
                            std::size_t cap = Vocabulary::kDefaultCap);

/// Maps tokens to vocabulary indices, dropping out-of-vocabulary tokens.
std::vector<std::size_t> encode(const TokenSequence& tokens, const Vocabulary& vocab);
TokenSequence decode(std::span<const std::size_t> indices, const Vocabulary& vocab);

/// Reads a UTF-8 corpus, one sentence per line, tokenizing each line.
std::vector<TokenSequence> read_corpus(const std::filesystem::path& path);

}  // namespace cb2cf::corpus
