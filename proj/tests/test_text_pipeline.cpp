#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "lgb/text_pipeline.hpp"
#include "oracles.hpp"

using namespace lgb;

namespace {

std::vector<std::string> split_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& t : v) s += (s.empty() ? "" : " ") + t;
  return s;
}

long count(const std::vector<std::string>& v, const std::string& t) { return std::count(v.begin(), v.end(), t); }

}  // namespace

TEST_SUITE("text_pipeline") {
  TEST_CASE("normalization golden file") {
    std::ifstream in(oracle::data_dir() / "normalization_golden.tsv");
    REQUIRE(in);
    std::string line;
    std::getline(in, line);  // header
    int cases = 0;
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      REQUIRE(tab != std::string::npos);
      const std::string input = line.substr(0, tab);
      const auto want = split_spaces(line.substr(tab + 1));
      CAPTURE(input);
      CHECK(normalize(input) == want);
      ++cases;
    }
    CHECK(cases == 30);
  }

  TEST_CASE("spec examples") {
    CHECK(normalize("").empty());
    CHECK(normalize("@john check https://x.co #fun") ==
          std::vector<std::string>{"@USER", "check", "HTTPURL", "#HASHTAG"});
    CHECK(normalize("Hello WORLD") == std::vector<std::string>{"hello", "world"});
  }

  TEST_CASE("normalize is idempotent") {
    const char* texts[] = {"@john check https://x.co #fun", "Hi :) 😀 🔥 www.a.com now!!", "RT @a: #b <3 :-P done",
                           "plain words only", "Numbers 42 and $5.00, ok?", "🦄 and :fire: and :)"};
    for (const char* t : texts) {
      const auto once = normalize(t);
      CAPTURE(t);
      CHECK(normalize(join(once)) == once);
    }
  }

  TEST_CASE("tokenize keeps special tokens whole") {
    CHECK(tokenize("@Ann_1 #WOW https://a.b/c?d=1") ==
          std::vector<std::string>{"@Ann_1", "#WOW", "https://a.b/c?d=1"});
  }

  TEST_CASE("golden unified sequence") {
    UserRecord u = testing::user("u1", {"yo"}, "hi");
    u.name = "ann";
    u.followers_count = 2;
    u.following_count = 1;
    const TextSequence s = build_sequence(u);
    CHECK(s.flat_tokens == read_token_lines(oracle::data_dir() / "golden_sequence_ann.txt"));
    CHECK(s.node_id == "u1");
    CHECK(flatten(s.segments) == s.flat_tokens);
  }

  TEST_CASE("empty record keeps headers and delimiters") {
    UserRecord u = testing::user("e");
    u.name = "";
    const auto flat = build_sequence(u).flat_tokens;
    const std::vector<std::string> tail = {"</s>", "Description:", "</s>", "Tweet:"};
    REQUIRE(flat.size() >= tail.size());
    CHECK(std::vector<std::string>(flat.end() - 4, flat.end()) == tail);
    CHECK(flat[0] == "User");
    CHECK(flat[1] == "profile:");
  }

  TEST_CASE("delimiters between segments and tweets") {
    const auto one = build_sequence(testing::user("a", {"x"})).flat_tokens;
    const auto two = build_sequence(testing::user("a", {"x", "y"})).flat_tokens;
    const auto three = build_sequence(testing::user("a", {"x", "y", "z"})).flat_tokens;
    CHECK(count(one, "</s>") == 2);
    CHECK(count(two, "</s>") == 3);
    CHECK(count(three, "</s>") == 4);
    const auto pos_x = std::find(two.begin(), two.end(), "x");
    REQUIRE(pos_x != two.end());
    CHECK(*(pos_x + 1) == "</s>");
    CHECK(*(pos_x + 2) == "y");
  }

  TEST_CASE("profile attributes in fixed order with extras sorted") {
    UserRecord u = testing::user("a");
    u.name = "Zed";
    u.extra_attributes = {{"verified", "true"}, {"lang", "EN"}};
    const auto flat = build_sequence(u).flat_tokens;
    const std::vector<std::string> want = {"User", "profile:", "name", "zed", "followers_count", "0",
                                           "following_count", "0", "lang", "en", "verified", "true", "</s>"};
    CHECK(std::vector<std::string>(flat.begin(), flat.begin() + static_cast<long>(want.size())) == want);
  }

  TEST_CASE("segment caps truncate each segment") {
    UserRecord u = testing::user("a", {"a b c d e", "f g h"}, "one two three four");
    SegmentLimits lim;
    lim.description = 2;
    lim.tweets = 4;
    const TextSequence s = build_sequence(u, lim);
    for (const auto& seg : s.segments) {
      if (seg.kind == SegmentKind::description) CHECK(seg.tokens == std::vector<std::string>{"one", "two"});
    }
    std::size_t content = 0;
    bool after_tweet_head = false;
    for (const auto& t : s.flat_tokens) {
      if (t == "Tweet:") {
        after_tweet_head = true;
        continue;
      }
      if (after_tweet_head && t != "</s>") ++content;
    }
    CHECK(content == 4);
  }

  TEST_CASE("vocabulary basics") {
    const Vocabulary reserved;
    for (const auto& t : Vocabulary::reserved()) CHECK(reserved.contains(t));
    CHECK(reserved.token(reserved.pad_id()) == "<pad>");
    CHECK(reserved.token(reserved.unk_id()) == "<unk>");

    TextSequence s;
    s.flat_tokens = {"a", "a", "a"};
    const Vocabulary v = Vocabulary::build({s}, 1, 1000);
    CHECK(v.size() == Vocabulary::reserved().size() + 1);
    CHECK(v.contains("a"));

    TextSequence t;
    t.flat_tokens = {"b", "b", "a", "a"};
    const Vocabulary w = Vocabulary::build({t}, 1, 1000);
    CHECK(w.id("a") < w.id("b"));
    CHECK_THROWS(Vocabulary::build({}, 1, 1000));
  }

  TEST_CASE("vocabulary membership equals a frequency-count filter") {
    Rng rng(5);
    std::vector<TextSequence> docs(100);
    std::map<std::string, int> counts;
    for (auto& d : docs) {
      for (int k = 0; k < 20; ++k) {
        const std::string tok = "t" + std::to_string(rng.below(150));
        d.flat_tokens.push_back(tok);
        ++counts[tok];
      }
    }
    const Vocabulary v = Vocabulary::build(docs, 2, 100000);
    std::size_t expected = Vocabulary::reserved().size();
    for (const auto& [tok, c] : counts) {
      CAPTURE(tok);
      CHECK(v.contains(tok) == (c >= 2));
      expected += c >= 2;
    }
    CHECK(v.size() == expected);
    // Most frequent first.
    for (std::size_t i = Vocabulary::reserved().size() + 1; i < v.size(); ++i) {
      const auto& a = v.token(static_cast<std::int32_t>(i - 1));
      const auto& b = v.token(static_cast<std::int32_t>(i));
      CHECK((counts[a] > counts[b] || (counts[a] == counts[b] && a < b)));
    }
  }

  TEST_CASE("vocabulary size cap and serialization") {
    TextSequence s;
    s.flat_tokens = {"x", "x", "x", "y", "y", "z"};
    const Vocabulary v = Vocabulary::build({s}, 1, Vocabulary::reserved().size() + 2);
    CHECK(v.contains("x"));
    CHECK(v.contains("y"));
    CHECK(!v.contains("z"));
    CHECK(Vocabulary::parse(v.serialize()) == v);
  }

  TEST_CASE("to_ids maps, falls back to UNK, and truncates") {
    TextSequence s;
    s.flat_tokens = {"a", "b", "zzz"};
    std::vector<std::string> toks = Vocabulary::reserved();
    toks.push_back("a");
    toks.push_back("b");
    const Vocabulary v = Vocabulary::from_tokens(toks);
    const auto ids = to_ids(s, v, 10);
    REQUIRE(ids.size() == 3);
    CHECK(v.token(ids[0]) == "a");
    CHECK(v.token(ids[1]) == "b");
    CHECK(ids[2] == v.unk_id());

    TextSequence long_seq;
    for (int i = 0; i < 300; ++i) long_seq.flat_tokens.push_back(i % 2 ? "a" : "b");
    const auto cut = to_ids(long_seq, v, 128);
    CHECK(cut.size() == 128);
    const auto full = to_ids(long_seq, v, 1000);
    CHECK(std::equal(cut.begin(), cut.end(), full.begin()));
    for (auto id : full) CHECK(static_cast<std::size_t>(id) < v.size());
  }
}
