#include "lgb/text_pipeline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace lgb {

namespace {

struct EmojiName {
  char32_t codepoint;
  const char* name;
};

// Small common set; anything else in the emoji blocks maps to ":emoji:".
constexpr EmojiName kEmojiNames[] = {
    {0x1F600, ":grinning_face:"},
    {0x1F601, ":beaming_face_with_smiling_eyes:"},
    {0x1F602, ":face_with_tears_of_joy:"},
    {0x1F603, ":grinning_face_with_big_eyes:"},
    {0x1F604, ":grinning_face_with_smiling_eyes:"},
    {0x1F605, ":grinning_face_with_sweat:"},
    {0x1F606, ":grinning_squinting_face:"},
    {0x1F609, ":winking_face:"},
    {0x1F60A, ":smiling_face_with_smiling_eyes:"},
    {0x1F60D, ":smiling_face_with_heart-eyes:"},
    {0x1F60E, ":smiling_face_with_sunglasses:"},
    {0x1F60F, ":smirking_face:"},
    {0x1F612, ":unamused_face:"},
    {0x1F618, ":face_blowing_a_kiss:"},
    {0x1F620, ":angry_face:"},
    {0x1F621, ":enraged_face:"},
    {0x1F622, ":crying_face:"},
    {0x1F62D, ":loudly_crying_face:"},
    {0x1F631, ":face_screaming_in_fear:"},
    {0x1F641, ":slightly_frowning_face:"},
    {0x1F642, ":slightly_smiling_face:"},
    {0x1F644, ":face_with_rolling_eyes:"},
    {0x1F914, ":thinking_face:"},
    {0x1F916, ":robot:"},
    {0x1F923, ":rolling_on_the_floor_laughing:"},
    {0x1F970, ":smiling_face_with_hearts:"},
    {0x1F30D, ":globe_showing_europe-africa:"},
    {0x1F389, ":party_popper:"},
    {0x1F440, ":eyes:"},
    {0x1F44B, ":waving_hand:"},
    {0x1F44D, ":thumbs_up:"},
    {0x1F44E, ":thumbs_down:"},
    {0x1F44F, ":clapping_hands:"},
    {0x1F4AF, ":hundred_points:"},
    {0x1F4B0, ":money_bag:"},
    {0x1F4C8, ":chart_increasing:"},
    {0x1F525, ":fire:"},
    {0x1F64C, ":raising_hands:"},
    {0x1F64F, ":folded_hands:"},
    {0x1F680, ":rocket:"},
    {0x1F6A8, ":police_car_light:"},
    {0x26A1, ":high_voltage:"},
    {0x2705, ":check_mark_button:"},
    {0x2728, ":sparkles:"},
    {0x2764, ":red_heart:"},
    {0x2B50, ":star:"},
};

struct Emoticon {
  std::string_view text;
  const char* name;
};

// Longest first so that ":-)" wins over ":-".
constexpr Emoticon kEmoticons[] = {
    {":'(", ":crying_face:"},
    {":-)", ":slightly_smiling_face:"},
    {":-(", ":slightly_frowning_face:"},
    {":-D", ":grinning_face_with_big_eyes:"},
    {";-)", ":winking_face:"},
    {":-P", ":face_with_tongue:"},
    {":-p", ":face_with_tongue:"},
    {":-O", ":face_with_open_mouth:"},
    {"</3", ":broken_heart:"},
    {":)", ":slightly_smiling_face:"},
    {"(:", ":slightly_smiling_face:"},
    {":(", ":slightly_frowning_face:"},
    {":D", ":grinning_face_with_big_eyes:"},
    {";)", ":winking_face:"},
    {":P", ":face_with_tongue:"},
    {":p", ":face_with_tongue:"},
    {":O", ":face_with_open_mouth:"},
    {":o", ":face_with_open_mouth:"},
    {":*", ":face_blowing_a_kiss:"},
    {"<3", ":red_heart:"},
};

enum class Kind { word, url, mention, hashtag, emoticon, emoji, emoji_name, punct };

struct RawToken {
  Kind kind;
  std::string text;
  const char* name = nullptr;  // emoticon/emoji name when mapped
};

bool is_ascii_word(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }

// Decodes one UTF-8 codepoint; returns its byte length (1 on invalid input).
std::size_t decode_utf8(std::string_view s, std::size_t i, char32_t& cp) {
  const auto c = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  if (c < 0x80) {
    cp = c;
    return 1;
  }
  if ((c >> 5) == 0x6) {
    cp = c & 0x1F;
    len = 2;
  } else if ((c >> 4) == 0xE) {
    cp = c & 0x0F;
    len = 3;
  } else if ((c >> 3) == 0x1E) {
    cp = c & 0x07;
    len = 4;
  } else {
    cp = 0xFFFD;
    return 1;
  }
  if (i + len > s.size()) {
    cp = 0xFFFD;
    return 1;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto cc = static_cast<unsigned char>(s[i + k]);
    if ((cc >> 6) != 0x2) {
      cp = 0xFFFD;
      return 1;
    }
    cp = (cp << 6) | (cc & 0x3F);
  }
  return len;
}

bool is_emoji(char32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) ||
         (cp >= 0x2B00 && cp <= 0x2BFF) || (cp >= 0x2300 && cp <= 0x23FF);
}

bool is_emoji_modifier(char32_t cp) {
  return cp == 0xFE0E || cp == 0xFE0F || cp == 0x20E3 || (cp >= 0x1F3FB && cp <= 0x1F3FF);
}

bool is_unicode_space(char32_t cp) {
  return cp == 0xA0 || cp == 0x3000 || (cp >= 0x2000 && cp <= 0x200B) || cp == 0x202F;
}

bool is_unicode_punct(char32_t cp) { return cp >= 0x200C && cp <= 0x206F; }

// Word character at position i (ASCII alnum/underscore or a non-emoji,
// non-punctuation multibyte codepoint). Sets len to the byte length.
bool word_char_at(std::string_view s, std::size_t i, std::size_t& len) {
  const auto c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    len = 1;
    return is_ascii_word(c);
  }
  char32_t cp;
  len = decode_utf8(s, i, cp);
  return !is_emoji(cp) && !is_emoji_modifier(cp) && !is_unicode_space(cp) &&
         !is_unicode_punct(cp);
}

bool starts_with_ci(std::string_view s, std::size_t i, std::string_view prefix) {
  if (i + prefix.size() > s.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(s[i + k])) != prefix[k]) return false;
  }
  return true;
}

const char* emoji_name(char32_t cp) {
  for (const auto& e : kEmojiNames) {
    if (e.codepoint == cp) return e.name;
  }
  return tokens::kUnknownEmoji;
}

std::vector<RawToken> scan(std::string_view s) {
  std::vector<RawToken> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c) != 0) {
      ++i;
      continue;
    }
    if (c >= 0x80) {
      char32_t cp;
      const std::size_t len = decode_utf8(s, i, cp);
      if (is_unicode_space(cp)) {
        i += len;
        continue;
      }
      if (is_emoji(cp)) {
        std::size_t j = i + len;
        // Absorb variation selectors, skin tones, and ZWJ sequences.
        while (j < n) {
          char32_t next;
          const std::size_t l2 = decode_utf8(s, j, next);
          if (is_emoji_modifier(next)) {
            j += l2;
          } else if (next == 0x200D && j + l2 < n) {
            char32_t joined;
            const std::size_t l3 = decode_utf8(s, j + l2, joined);
            if (!is_emoji(joined)) break;
            j += l2 + l3;
          } else {
            break;
          }
        }
        out.push_back({Kind::emoji, std::string(s.substr(i, j - i)), emoji_name(cp)});
        i = j;
        continue;
      }
      if (is_unicode_punct(cp)) {
        out.push_back({Kind::punct, std::string(s.substr(i, len))});
        i += len;
        continue;
      }
    }

    // URL
    if (starts_with_ci(s, i, "http://") || starts_with_ci(s, i, "https://") ||
        starts_with_ci(s, i, "www.")) {
      std::size_t j = i;
      while (j < n && std::isspace(static_cast<unsigned char>(s[j])) == 0) ++j;
      while (j > i + 4 && std::string_view(".,!?;:)\"'").find(s[j - 1]) != std::string_view::npos) {
        --j;
      }
      out.push_back({Kind::url, std::string(s.substr(i, j - i))});
      i = j;
      continue;
    }

    // Mention / hashtag
    if ((c == '@' || c == '#') && i + 1 < n) {
      std::size_t j = i + 1;
      std::size_t len = 0;
      while (j < n && word_char_at(s, j, len)) j += len;
      if (j > i + 1) {
        out.push_back({c == '@' ? Kind::mention : Kind::hashtag, std::string(s.substr(i, j - i))});
        i = j;
        continue;
      }
    }

    // Already-normalized emoji name, e.g. ":red_heart:".
    if (c == ':') {
      std::size_t j = i + 1;
      while (j < n && (std::islower(static_cast<unsigned char>(s[j])) != 0 ||
                       std::isdigit(static_cast<unsigned char>(s[j])) != 0 || s[j] == '_' ||
                       s[j] == '-' || s[j] == '+')) {
        ++j;
      }
      if (j < n && s[j] == ':' && j - i - 1 >= 2) {
        out.push_back({Kind::emoji_name, std::string(s.substr(i, j - i + 1))});
        i = j + 1;
        continue;
      }
    }

    // ASCII emoticons; letter-ended ones must not run into a word.
    bool matched = false;
    for (const auto& e : kEmoticons) {
      if (s.substr(i, e.text.size()) != e.text) continue;
      const std::size_t end = i + e.text.size();
      const bool letter_end = std::isalpha(static_cast<unsigned char>(e.text.back())) != 0;
      std::size_t len = 0;
      if (letter_end && end < n && word_char_at(s, end, len)) continue;
      out.push_back({Kind::emoticon, std::string(e.text), e.name});
      i = end;
      matched = true;
      break;
    }
    if (matched) continue;

    // Word with internal apostrophes/hyphens.
    std::size_t len = 0;
    if (word_char_at(s, i, len)) {
      std::size_t j = i + len;
      while (j < n) {
        if (word_char_at(s, j, len)) {
          j += len;
        } else if ((s[j] == '\'' || s[j] == '-') && j + 1 < n && word_char_at(s, j + 1, len)) {
          j += 1;
        } else {
          break;
        }
      }
      out.push_back({Kind::word, std::string(s.substr(i, j - i))});
      i = j;
      continue;
    }

    // Punctuation: run of one repeated character.
    std::size_t j = i + 1;
    while (j < n && s[j] == s[i]) ++j;
    out.push_back({Kind::punct, std::string(s.substr(i, j - i))});
    i = j;
  }
  return out;
}

std::string lowercase_ascii(std::string s) {
  for (auto& ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) ch = static_cast<char>(std::tolower(c));
  }
  return s;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view raw) {
  std::vector<std::string> out;
  for (auto& t : scan(raw)) out.push_back(std::move(t.text));
  return out;
}

std::vector<std::string> normalize(std::string_view raw) {
  std::vector<std::string> out;
  for (auto& t : scan(raw)) {
    switch (t.kind) {
      case Kind::url: out.emplace_back(tokens::kUrl); break;
      case Kind::mention: out.emplace_back(tokens::kUser); break;
      case Kind::hashtag: out.emplace_back(tokens::kHashtag); break;
      case Kind::emoticon:
      case Kind::emoji: out.emplace_back(t.name); break;
      case Kind::emoji_name: out.push_back(std::move(t.text)); break;
      case Kind::word:
        if (t.text == tokens::kUrl) {
          out.push_back(std::move(t.text));
        } else {
          out.push_back(lowercase_ascii(std::move(t.text)));
        }
        break;
      case Kind::punct: out.push_back(std::move(t.text)); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> flatten(const std::vector<Segment>& segments) {
  std::vector<std::string> flat;
  SegmentKind previous = SegmentKind::profile;
  bool first = true;
  for (const auto& seg : segments) {
    const bool continuing_tweets =
        !first && seg.kind == SegmentKind::tweet && previous == SegmentKind::tweet;
    if (!first) flat.emplace_back(tokens::kDelimiter);
    if (!continuing_tweets) {
      switch (seg.kind) {
        case SegmentKind::profile:
          flat.emplace_back(tokens::kProfileHead0);
          flat.emplace_back(tokens::kProfileHead1);
          break;
        case SegmentKind::description: flat.emplace_back(tokens::kDescriptionHead); break;
        case SegmentKind::tweet: flat.emplace_back(tokens::kTweetHead); break;
      }
    }
    flat.insert(flat.end(), seg.tokens.begin(), seg.tokens.end());
    previous = seg.kind;
    first = false;
  }
  return flat;
}

TextSequence build_sequence(const UserRecord& u, const SegmentLimits& limits) {
  auto append = [](std::vector<std::string>& dst, std::vector<std::string> src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
  };

  std::vector<std::string> profile;
  append(profile, {"name"});
  append(profile, normalize(u.name));
  append(profile, {"followers_count"});
  append(profile, normalize(std::to_string(u.followers_count)));
  append(profile, {"following_count"});
  append(profile, normalize(std::to_string(u.following_count)));
  for (const auto& [key, value] : u.extra_attributes) {
    append(profile, normalize(key));
    append(profile, normalize(value));
  }
  if (profile.size() > limits.profile) profile.resize(limits.profile);

  std::vector<std::string> description = normalize(u.description);
  if (description.size() > limits.description) description.resize(limits.description);

  TextSequence seq;
  seq.node_id = u.id;
  seq.segments.push_back({SegmentKind::profile, std::move(profile)});
  seq.segments.push_back({SegmentKind::description, std::move(description)});

  std::size_t budget = limits.tweets;
  std::size_t emitted = 0;
  for (const auto& tweet : u.tweets) {
    if (budget == 0) break;
    auto toks = normalize(tweet);
    if (toks.empty()) continue;
    if (toks.size() > budget) toks.resize(budget);
    budget -= toks.size();
    seq.segments.push_back({SegmentKind::tweet, std::move(toks)});
    ++emitted;
  }
  if (emitted == 0) seq.segments.push_back({SegmentKind::tweet, {}});
  seq.flat_tokens = flatten(seq.segments);
  return seq;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& Vocabulary::reserved() {
  static const std::vector<std::string> r = {
      tokens::kPad,         tokens::kUnk,          tokens::kDelimiter,        tokens::kUser,
      tokens::kHashtag,     tokens::kUrl,          tokens::kProfileHead0,     tokens::kProfileHead1,
      tokens::kDescriptionHead, tokens::kTweetHead};
  return r;
}

Vocabulary::Vocabulary() : Vocabulary(from_tokens(reserved())) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& r = reserved();
  if (tokens.size() < r.size() || !std::equal(r.begin(), r.end(), tokens.begin())) {
    throw ValidationError("vocabulary must start with the reserved tokens");
  }
  Vocabulary v{Raw{}};
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw ValidationError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<TextSequence>& sequences, std::size_t min_count,
                             std::size_t max_size) {
  if (sequences.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  const auto& r = reserved();
  if (max_size < r.size()) throw ValidationError("max_size smaller than the reserved set");

  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences) {
    for (const auto& t : seq.flat_tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, count] : counts) {
    if (count < min_count) continue;
    if (std::find(r.begin(), r.end(), tok) != r.end()) continue;
    ranked.emplace_back(tok, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = r;
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

std::int32_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_id() : it->second;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> tokens;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("vocabulary", number, "missing tab");
    const std::string id_text = line.substr(tab + 1);
    std::size_t id = 0;
    try {
      id = std::stoul(id_text);
    } catch (const std::exception&) {
      throw ParseError("vocabulary", number, "bad id '" + id_text + "'");
    }
    if (id != tokens.size()) throw ParseError("vocabulary", number, "ids must be contiguous");
    tokens.push_back(line.substr(0, tab));
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<std::int32_t> to_ids(const TextSequence& seq, const Vocabulary& vocab,
                                 std::size_t max_len) {
  std::vector<std::int32_t> ids;
  const std::size_t n = std::min(max_len, seq.flat_tokens.size());
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(vocab.id(seq.flat_tokens[i]));
  return ids;
}

std::vector<std::string> read_token_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::string join_token_lines(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    out += t;
    out += '\n';
  }
  return out;
}

}  // namespace lgb
