#include "traceguard/trace_model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "traceguard/synth.hpp"

namespace tg = traceguard;

namespace {

std::vector<std::string> texts(const std::vector<tg::Sentence>& s) {
  std::vector<std::string> out;
  for (const auto& x : s) out.push_back(x.text);
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("traceguard_" + name)).string();
}

// Random text over pieces that exercise every segmentation rule.
std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {"a",  "word", "3.14", ".",  "?",  "!", "\xE2\x80\xA6", "...", " ",
                                                  "  ", "\n", "\t",   "\r\n", "Wait", ",", "\"",          "x=2.5"};
  std::uniform_int_distribution<std::size_t> len(0, 40), pick(0, pieces.size() - 1);
  std::string s;
  for (std::size_t i = len(rng); i > 0; --i) s += pieces[pick(rng)];
  return s;
}

}  // namespace

TEST(CountTokens, Examples) {
  EXPECT_EQ(tg::count_tokens("Wait, I made a mistake"), 5u);
  EXPECT_EQ(tg::count_tokens(""), 0u);
  EXPECT_EQ(tg::count_tokens("a  b\tc\n"), 3u);
  EXPECT_EQ(tg::count_tokens("   "), 0u);
}

TEST(CountTokens, AdditiveAcrossSpace) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    std::string a = random_text(rng), b = random_text(rng);
    if (a.empty() || b.empty()) continue;
    EXPECT_EQ(tg::count_tokens(a + " " + b), tg::count_tokens(a) + tg::count_tokens(b)) << a << "|" << b;
  }
}

TEST(Segment, Examples) {
  EXPECT_EQ(texts(tg::segment_sentences("Wait, that's wrong. Let me retry.")),
            (std::vector<std::string>{"Wait, that's wrong.", "Let me retry."}));
  EXPECT_TRUE(tg::segment_sentences("").empty());
  EXPECT_EQ(texts(tg::segment_sentences("So 3.14 is pi. Done.")), (std::vector<std::string>{"So 3.14 is pi.", "Done."}));
}

TEST(Segment, HandSegmentedFixture) {
  std::ifstream in(std::string(TRACEGUARD_FIXTURE_DIR) + "/segmentation.jsonl");
  ASSERT_TRUE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    auto j = tg::Json::parse(line);
    const auto text = j["text"].get<std::string>();
    const auto expected = j["sentences"].get<std::vector<std::string>>();
    const auto got = tg::segment_sentences(text);
    EXPECT_EQ(texts(got), expected) << "input: " << text;
    EXPECT_EQ(tg::join_sentences(got), text);
    ++cases;
  }
  EXPECT_EQ(cases, 20);
}

TEST(Segment, SeparatorsAreStored) {
  auto s = tg::segment_sentences("  A. B\n\nC");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].leading_separator, "  ");
  EXPECT_EQ(s[1].leading_separator, " ");
  EXPECT_EQ(s[2].leading_separator, "\n\n");
}

TEST(Segment, RoundTripAndInvariantsOnRandomText) {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 2000; ++i) {
    const std::string t = random_text(rng);
    const auto s = tg::segment_sentences(t);
    ASSERT_EQ(tg::join_sentences(s), t);
    for (std::size_t k = 0; k < s.size(); ++k) {
      EXPECT_EQ(s[k].index, k);
      EXPECT_EQ(s[k].token_count, tg::count_tokens(s[k].text));
    }
    EXPECT_EQ(tg::segment_sentences(t), s);
  }
}

TEST(Corpus, LoadsOneRecordAndPreservesUnknownKeys) {
  std::istringstream in(R"({"id":"t1","prompt":"p","reasoning":"Wait. Done.","answer":"4","source":{"x":1}})"
                        "\n");
  auto c = tg::read_corpus(in);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].id, "t1");
  EXPECT_EQ(c[0].sentences.size(), 2u);
  std::ostringstream out;
  tg::write_corpus(c, out);
  EXPECT_EQ(out.str(), R"({"id":"t1","prompt":"p","reasoning":"Wait. Done.","answer":"4","source":{"x":1}})"
                       "\n");
}

TEST(Corpus, DuplicateIdIsRejected) {
  std::istringstream in(R"({"id":"a","prompt":"","reasoning":"","answer":""})"
                        "\n"
                        R"({"id":"a","prompt":"","reasoning":"","answer":""})"
                        "\n");
  try {
    tg::read_corpus(in);
    FAIL() << "expected DataError";
  } catch (const tg::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate id"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Corpus, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      tg::read_corpus(in);
    } catch (const tg::DataError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string good = R"({"id":"a","prompt":"","reasoning":"","answer":""})";
  EXPECT_NE(message(good + "\n{not json}\n").find("line 2"), std::string::npos);
  EXPECT_NE(message(R"({"id":"a","prompt":"","answer":""})").find("missing required field 'reasoning'"),
            std::string::npos);
  EXPECT_NE(message(R"({"id":7,"prompt":"","reasoning":"","answer":""})").find("must be a string"), std::string::npos);
  EXPECT_NE(message(good + "\n\n" + "{\"id\":\"b\",\"prompt\":\"\xff\",\"reasoning\":\"\",\"answer\":\"\"}")
                .find("line 3"),
            std::string::npos);
}

TEST(Corpus, SaveLoadRoundTripOnSyntheticTraces) {
  auto corpus = tg::synth_corpus(100, 99);
  corpus[3].extra["note"] = "kept";
  corpus[5].poison_report = tg::PoisonReport{corpus[5].id, tg::PoisonMethod::random, {0, 2}, 9, 40, 2, 42u, 2u};
  const auto path = temp_path("roundtrip.jsonl");
  tg::save_corpus(corpus, path);
  EXPECT_EQ(tg::load_corpus(path), corpus);
  std::filesystem::remove(path);
}

TEST(Corpus, MissingFileIsDataError) {
  EXPECT_THROW(tg::load_corpus("/nonexistent/corpus.jsonl"), tg::DataError);
}
