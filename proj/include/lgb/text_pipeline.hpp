#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lgb/graph_store.hpp"

namespace lgb {

namespace tokens {
inline constexpr const char* kPad = "<pad>";
inline constexpr const char* kUnk = "<unk>";
inline constexpr const char* kDelimiter = "</s>";
inline constexpr const char* kUser = "@USER";
inline constexpr const char* kHashtag = "#HASHTAG";
inline constexpr const char* kUrl = "HTTPURL";
inline constexpr const char* kProfileHead0 = "User";
inline constexpr const char* kProfileHead1 = "profile:";
inline constexpr const char* kDescriptionHead = "Description:";
inline constexpr const char* kTweetHead = "Tweet:";
inline constexpr const char* kUnknownEmoji = ":emoji:";
}  // namespace tokens

/// Tweet-aware tokenization followed by the noise replacements: mentions,
/// hashtags and URLs become placeholders, emoji/emoticons become their
/// colon-delimited names, everything else is lowercased.
std::vector<std::string> normalize(std::string_view raw);

/// Raw tokenization only (no replacement, no lowercasing).
std::vector<std::string> tokenize(std::string_view raw);

enum class SegmentKind { profile, description, tweet };

struct Segment {
  SegmentKind kind;
  std::vector<std::string> tokens;
};

struct SegmentLimits {
  std::size_t profile = 32;
  std::size_t description = 64;
  std::size_t tweets = 160;  // total content tokens over all tweets
};

struct TextSequence {
  NodeId node_id;
  std::vector<Segment> segments;
  std::vector<std::string> flat_tokens;
};

/// Rebuilds the flat token list from segments.
std::vector<std::string> flatten(const std::vector<Segment>& segments);

TextSequence build_sequence(const UserRecord& u, const SegmentLimits& limits = {});

class Vocabulary {
 public:
  static const std::vector<std::string>& reserved();

  /// Reserved tokens only.
  Vocabulary();

  /// Tokens with count >= min_count, most frequent first with
  /// lexicographic tie-break, total size capped at max_size.
  static Vocabulary build(const std::vector<TextSequence>& sequences, std::size_t min_count,
                          std::size_t max_size);

  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  /// UNK id for unknown tokens.
  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::int32_t pad_id() const { return 0; }
  std::int32_t unk_id() const { return 1; }

  /// "token<TAB>id" lines.
  std::string serialize() const;
  static Vocabulary parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  struct Raw {};
  explicit Vocabulary(Raw) {}

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

/// Maps tokens to ids (UNK for unknown) and truncates to max_len. No padding.
std::vector<std::int32_t> to_ids(const TextSequence& seq, const Vocabulary& vocab,
                                 std::size_t max_len);

/// Golden-file helpers: one token per line.
std::vector<std::string> read_token_lines(const std::filesystem::path& path);
std::string join_token_lines(const std::vector<std::string>& tokens);

}  // namespace lgb
