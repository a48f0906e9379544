#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "comac/corpus.hpp"
#include "comac/error.hpp"
#include "comac/random.hpp"

namespace comac {

/// Desk-scale stand-in for a persona/knowledge dialogue corpus.
///
/// Each round's gold knowledge entry shares two rare words with the
/// utterance; each relevant persona shares one. Every other entry carries
/// its own rare words that never occur in the utterance. Filler comes from
/// a small pool of common words. A persona is relevant with probability
/// `positive_rate`.
struct SyntheticSpec {
  std::size_t rounds = 600;
  std::size_t personas = 5;
  std::size_t knowledges = 10;
  std::uint64_t seed = 7;
  double positive_rate = 0.13;
};

namespace detail {

inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words = {
      "the",    "a",      "of",     "and",    "to",     "in",     "is",     "it",
      "that",   "was",    "for",    "on",     "are",    "with",   "as",     "at",
      "be",     "this",   "have",   "from",   "or",     "one",    "had",    "by",
      "but",    "not",    "what",   "all",    "were",   "when",   "we",     "there",
      "can",    "an",     "your",   "which",  "their",  "said",   "if",     "do",
      "will",   "each",   "about",  "how",    "up",     "out",    "many",   "then",
      "them",   "these",  "so",     "some",   "her",    "would",  "make",   "like",
      "him",    "into",   "time",   "has",    "look",   "two",    "more",   "write",
      "go",     "see",    "number", "no",     "way",    "could",  "people", "my",
      "than",   "first",  "water",  "been",   "call",   "who",    "oil",    "its",
      "now",    "find",   "long",   "down",   "day",    "did",    "get",    "come",
      "made",   "may",    "part",   "over",   "new",    "sound",  "take",   "only",
      "little", "work",   "know",   "place",  "year",   "live",   "me",     "back",
      "give",   "most",   "very",   "after",  "thing",  "our",    "just",   "name",
      "good",   "sentence", "man",  "think",  "say",    "great",  "where",  "help",
      "through", "much",  "before", "line",   "right",  "too",    "mean",   "old",
      "any",    "same",   "tell",   "boy",    "follow", "came",   "want",   "show",
      "also",   "around", "form",   "three",  "small",  "set",    "put",    "end",
      "does",   "another", "well",  "large",  "must",   "big",    "even",   "such"};
  return words;
}

class WordSource {
 public:
  explicit WordSource(std::uint64_t seed) : rng_(seed) {}

  std::string common() {
    const auto& w = common_words();
    return w[uniform_index(rng_, w.size())];
  }

  /// Fresh pseudo-word never handed out before by this source.
  std::string rare() {
    static constexpr std::string_view consonants = "bcdfghjklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    for (;;) {
      std::string w;
      for (int s = 0; s < 4; ++s) {
        w += consonants[uniform_index(rng_, consonants.size())];
        w += vowels[uniform_index(rng_, vowels.size())];
      }
      if (issued_.insert(w).second) return w;
    }
  }

  std::vector<std::string> commons(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(common());
    return out;
  }

  std::size_t between(std::size_t lo, std::size_t hi) {
    return lo + uniform_index(rng_, hi - lo + 1);
  }
  bool chance(double p) { return uniform01(rng_) < p; }
  SplitMix64& rng() { return rng_; }

 private:
  SplitMix64 rng_;
  std::set<std::string> issued_;
};

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace detail

inline std::vector<DialogueRound> gen_synthetic(const SyntheticSpec& spec) {
  if (spec.knowledges < 2) throw ConfigError("synthetic corpus needs at least 2 knowledge entries");
  if (spec.personas < 1) throw ConfigError("synthetic corpus needs at least 1 persona entry");
  detail::WordSource src(mix_seed(spec.seed, 0x53594E54ULL));
  std::vector<DialogueRound> out;
  out.reserve(spec.rounds);

  for (std::size_t r = 0; r < spec.rounds; ++r) {
    const std::size_t gold = uniform_index(src.rng(), spec.knowledges);
    std::vector<std::string> question_rare;

    std::vector<std::string> knowledges;
    for (std::size_t j = 0; j < spec.knowledges; ++j) {
      auto words = src.commons(src.between(7, 10));
      std::array<std::string, 2> rare{src.rare(), src.rare()};
      if (j == gold) question_rare.insert(question_rare.end(), rare.begin(), rare.end());
      for (auto& w : rare)
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(uniform_index(src.rng(), words.size() + 1)), w);
      knowledges.push_back(detail::join_words(words) + " .");
    }

    std::vector<std::string> personas;
    std::vector<bool> labels;
    for (std::size_t i = 0; i < spec.personas; ++i) {
      auto words = src.commons(src.between(2, 4));
      auto rare = src.rare();
      const bool positive = src.chance(spec.positive_rate);
      if (positive) question_rare.push_back(rare);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(uniform_index(src.rng(), words.size() + 1)), rare);
      personas.push_back("i " + detail::join_words(words) + " .");
      labels.push_back(positive);
    }

    auto opener = src.commons(src.between(4, 7));
    auto question = src.commons(src.between(5, 8));
    for (auto& w : question_rare)
      question.insert(question.begin() + static_cast<std::ptrdiff_t>(uniform_index(src.rng(), question.size() + 1)), w);
    std::vector<std::string> history = {detail::join_words(opener) + " .",
                                        detail::join_words(question) + " ?"};

    char id[32];
    std::snprintf(id, sizeof id, "syn%06zu", r);
    out.push_back(make_round(id, 0, std::move(history), personas, knowledges, std::move(labels), gold));
  }
  return out;
}

}  // namespace comac
