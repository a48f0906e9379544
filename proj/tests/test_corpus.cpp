#include <sstream>

#include <gtest/gtest.h>

#include "comac/corpus.hpp"

namespace comac {
namespace {

std::vector<std::string> words(const std::vector<Token>& tokens) { return surfaces(tokens); }

TEST(Tokenize, SplitsOnWhitespaceAndLowercases) {
  EXPECT_EQ(words(tokenize("I hope to move")),
            (std::vector<std::string>{"i", "hope", "to", "move"}));
  EXPECT_EQ(words(tokenize("a")), (std::vector<std::string>{"a"}));
}

TEST(Tokenize, PunctuationBecomesItsOwnToken) {
  EXPECT_EQ(words(tokenize("Where is this memorial ?")),
            (std::vector<std::string>{"where", "is", "this", "memorial", "?"}));
  EXPECT_EQ(words(tokenize("building,at Macrossan.")),
            (std::vector<std::string>{"building", ",", "at", "macrossan", "."}));
}

TEST(Tokenize, PositionsAreContiguous) {
  auto t = tokenize("  one\ttwo  three\n");
  ASSERT_EQ(t.size(), 3u);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i].position, i);
}

TEST(Tokenize, KeepsTurnSeparatorWhole) {
  EXPECT_EQ(words(tokenize("hi there </s> where is it ?")),
            (std::vector<std::string>{"hi", "there", "</s>", "where", "is", "it", "?"}));
}

TEST(Tokenize, EmptyTextIsAnError) {
  EXPECT_THROW(tokenize(""), EmptyEntry);
  EXPECT_THROW(tokenize(" \t\n"), EmptyEntry);
}

TEST(Tokenize, IsDeterministic) {
  const std::string text = "The Thorps Building, a heritage-listed building!";
  EXPECT_EQ(tokenize(text), tokenize(text));
}

std::string line(int personas, int labels, int knowledges, int label) {
  nlohmann::json j;
  j["dialog_id"] = "d1";
  j["round"] = 2;
  j["history"] = {"hello", "where is the memorial ?"};
  j["personas"] = std::vector<std::string>(personas, "i like old buildings");
  j["knowledges"] = std::vector<std::string>(knowledges, "the memorial is in town");
  j["persona_labels"] = std::vector<bool>(labels, false);
  j["knowledge_label"] = label;
  return j.dump();
}

TEST(LoadCorpus, ValidLine) {
  std::istringstream in(line(5, 5, 10, 3) + "\n");
  auto rounds = read_corpus(in);
  ASSERT_EQ(rounds.size(), 1u);
  const auto& r = rounds[0];
  EXPECT_EQ(r.persona_count(), 5u);
  EXPECT_EQ(r.knowledge_count(), 10u);
  EXPECT_EQ(r.knowledge_label, 3u);
  EXPECT_EQ(r.utterance.text, "hello </s> where is the memorial ?");
  EXPECT_EQ(r.utterance.id, "d1#2/u");
  EXPECT_EQ(r.personas[4].id, "d1#2/p4");
  EXPECT_EQ(r.knowledges[9].id, "d1#2/k9");
  EXPECT_EQ(r.knowledges[0].role, Role::knowledge);
}

TEST(LoadCorpus, LabelCountMismatchIsSchemaError) {
  std::istringstream in(line(5, 4, 10, 3));
  EXPECT_THROW(read_corpus(in), SchemaError);
}

TEST(LoadCorpus, KnowledgeLabelOutOfRange) {
  std::istringstream in(line(5, 5, 10, 10));
  EXPECT_THROW(read_corpus(in), SchemaError);
}

TEST(LoadCorpus, MalformedLineReportsLineNumber) {
  std::istringstream in(line(5, 5, 10, 3) + "\n{not json\n");
  try {
    read_corpus(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, MissingKeyAndEmptyEntry) {
  std::istringstream missing(R"({"dialog_id":"x","round":0})");
  EXPECT_THROW(read_corpus(missing), SchemaError);
  auto j = nlohmann::json::parse(line(1, 1, 2, 0));
  j["personas"][0] = "   ";
  std::istringstream empty(j.dump());
  EXPECT_THROW(read_corpus(empty), EmptyEntry);
}

TEST(LoadCorpus, PreservesOrder) {
  auto a = nlohmann::json::parse(line(2, 2, 3, 0));
  auto b = a;
  b["dialog_id"] = "d2";
  std::istringstream in(a.dump() + "\n\n" + b.dump() + "\n");
  auto rounds = read_corpus(in);
  ASSERT_EQ(rounds.size(), 2u);
  EXPECT_EQ(rounds[0].dialog_id, "d1");
  EXPECT_EQ(rounds[1].dialog_id, "d2");
}

TEST(LoadCorpus, WriteThenReadIsStable) {
  auto j = nlohmann::json::parse(line(3, 3, 4, 1));
  j["persona_labels"] = {true, false, true};
  j["response"] = "It is in Cooktown.";
  std::istringstream in(j.dump() + "\n" + line(1, 1, 2, 1) + "\n");
  const auto first = read_corpus(in);
  std::stringstream buf;
  write_corpus(buf, first);
  EXPECT_EQ(read_corpus(buf), first);
}

}  // namespace
}  // namespace comac
