#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cb2cf {

enum class TagField { kGenres = 0, kActors = 1, kDirectors = 2, kLanguages = 3 };

inline constexpr std::array<TagField, 4> kTagFields = {TagField::kGenres, TagField::kActors, TagField::kDirectors,
                                                       TagField::kLanguages};

inline constexpr std::size_t field_index(TagField f) { return static_cast<std::size_t>(f); }

std::string_view field_name(TagField field);
/// Accepts the plural JSON key or its singular ("director", "language").
std::optional<TagField> parse_field(std::string_view name);

/// Sentinel for missing plots and tag fields.
inline constexpr std::string_view kMissing = "n/a";

/// Raw content of one item. Absent plot/year are nullopt; an absent tag field
/// is an empty list.
struct ContentProfile {
  std::string id;
  std::optional<std::string> plot;
  std::array<std::vector<std::string>, 4> tags;
  std::optional<int> year;

  const std::vector<std::string>& tags_of(TagField f) const { return tags[field_index(f)]; }
  std::vector<std::string>& tags_of(TagField f) { return tags[field_index(f)]; }

  friend bool operator==(const ContentProfile&, const ContentProfile&) = default;
};

}  // namespace cb2cf
