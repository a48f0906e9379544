#pragma once

#include <cctype>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "comac/error.hpp"

namespace comac {

/// Separator placed between flattened history turns. The tokenizer keeps it
/// as a single token.
inline constexpr std::string_view kTurnSeparator = "</s>";

struct Token {
  std::string surface;
  std::size_t position = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

enum class Role { utterance, persona, knowledge };

inline const char* to_string(Role role) {
  switch (role) {
    case Role::utterance: return "utterance";
    case Role::persona: return "persona";
    case Role::knowledge: return "knowledge";
  }
  return "?";
}

struct TextEntry {
  std::string id;
  Role role = Role::utterance;
  std::string text;
  std::vector<Token> tokens;

  friend bool operator==(const TextEntry&, const TextEntry&) = default;
};

struct DialogueRound {
  std::string dialog_id;
  std::size_t round = 0;
  std::vector<std::string> history;
  TextEntry utterance;
  std::vector<TextEntry> personas;
  std::vector<TextEntry> knowledges;
  std::vector<bool> persona_labels;
  std::size_t knowledge_label = 0;
  /// Optional gold response; only consumed by a language-model loss hook
  /// and by text metrics.
  std::string response;

  std::size_t persona_count() const { return personas.size(); }
  std::size_t knowledge_count() const { return knowledges.size(); }

  friend bool operator==(const DialogueRound&, const DialogueRound&) = default;
};

namespace detail {

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }
inline bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace detail

/// Lowercased word split: whitespace separates tokens and every ASCII
/// punctuation character becomes its own token. Non-ASCII bytes are kept
/// inside words unchanged. May return an empty list.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (detail::is_space(c)) {
      flush();
    } else if (text.substr(i, kTurnSeparator.size()) == kTurnSeparator) {
      flush();
      out.emplace_back(kTurnSeparator);
      i += kTurnSeparator.size() - 1;
    } else if (detail::is_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                             : static_cast<char>(c));
    }
  }
  flush();
  return out;
}

inline std::vector<Token> tokenize(std::string_view text) {
  auto words = split_words(text);
  if (words.empty()) throw EmptyEntry("text has no tokens");
  std::vector<Token> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i)
    out.push_back({std::move(words[i]), i});
  return out;
}

inline std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

inline std::string entry_id(const std::string& dialog_id, std::size_t round,
                            Role role, std::size_t index = 0) {
  std::string id = dialog_id + "#" + std::to_string(round) + "/";
  switch (role) {
    case Role::utterance: return id + "u";
    case Role::persona: return id + "p" + std::to_string(index);
    case Role::knowledge: return id + "k" + std::to_string(index);
  }
  return id;
}

inline TextEntry make_entry(std::string id, Role role, std::string text) {
  TextEntry e{std::move(id), role, std::move(text), {}};
  e.tokens = tokenize(e.text);
  return e;
}

inline std::string join_history(const std::vector<std::string>& turns) {
  std::string out;
  const std::string sep = " " + std::string(kTurnSeparator) + " ";
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i) out += sep;
    out += turns[i];
  }
  return out;
}

/// Builds a validated round. Throws SchemaError / EmptyEntry on violations.
inline DialogueRound make_round(std::string dialog_id, std::size_t round,
                                std::vector<std::string> history,
                                const std::vector<std::string>& personas,
                                const std::vector<std::string>& knowledges,
                                std::vector<bool> persona_labels,
                                std::size_t knowledge_label,
                                std::string response = {}) {
  if (history.empty()) throw SchemaError("history is empty");
  if (personas.empty()) throw SchemaError("no persona entries");
  if (knowledges.empty()) throw SchemaError("no knowledge entries");
  if (persona_labels.size() != personas.size())
    throw SchemaError("persona_labels has " +
                      std::to_string(persona_labels.size()) +
                      " entries, expected " + std::to_string(personas.size()));
  if (knowledge_label >= knowledges.size())
    throw SchemaError("knowledge_label " + std::to_string(knowledge_label) +
                      " out of range for " +
                      std::to_string(knowledges.size()) + " entries");

  DialogueRound r;
  r.dialog_id = std::move(dialog_id);
  r.round = round;
  r.utterance = make_entry(entry_id(r.dialog_id, round, Role::utterance),
                           Role::utterance, join_history(history));
  r.history = std::move(history);
  for (std::size_t i = 0; i < personas.size(); ++i)
    r.personas.push_back(make_entry(entry_id(r.dialog_id, round, Role::persona, i),
                                    Role::persona, personas[i]));
  for (std::size_t j = 0; j < knowledges.size(); ++j)
    r.knowledges.push_back(
        make_entry(entry_id(r.dialog_id, round, Role::knowledge, j),
                   Role::knowledge, knowledges[j]));
  r.persona_labels = std::move(persona_labels);
  r.knowledge_label = knowledge_label;
  r.response = std::move(response);
  return r;
}

namespace detail {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing key '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline DialogueRound parse_round(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("line is not a JSON object");
  auto round = detail::required<long long>(j, "round");
  if (round < 0) throw SchemaError("round is negative");
  auto label = detail::required<long long>(j, "knowledge_label");
  if (label < 0) throw SchemaError("knowledge_label is negative");
  std::string response;
  if (auto it = j.find("response"); it != j.end() && it->is_string())
    response = it->get<std::string>();
  return make_round(detail::required<std::string>(j, "dialog_id"),
                    static_cast<std::size_t>(round),
                    detail::required<std::vector<std::string>>(j, "history"),
                    detail::required<std::vector<std::string>>(j, "personas"),
                    detail::required<std::vector<std::string>>(j, "knowledges"),
                    detail::required<std::vector<bool>>(j, "persona_labels"),
                    static_cast<std::size_t>(label), std::move(response));
}

inline nlohmann::json round_to_json(const DialogueRound& r) {
  nlohmann::json j;
  j["dialog_id"] = r.dialog_id;
  j["round"] = r.round;
  j["history"] = r.history;
  std::vector<std::string> ps, ks;
  for (const auto& p : r.personas) ps.push_back(p.text);
  for (const auto& k : r.knowledges) ks.push_back(k.text);
  j["personas"] = ps;
  j["knowledges"] = ks;
  j["persona_labels"] = r.persona_labels;
  j["knowledge_label"] = r.knowledge_label;
  if (!r.response.empty()) j["response"] = r.response;
  return j;
}

/// Reads a JSON-lines corpus. Blank lines are skipped; errors carry the
/// 1-based line number.
inline std::vector<DialogueRound> read_corpus(std::istream& in) {
  std::vector<DialogueRound> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      out.push_back(parse_round(j));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const EmptyEntry& e) {
      throw EmptyEntry("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<DialogueRound> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  return read_corpus(in);
}

inline void write_corpus(std::ostream& out,
                         const std::vector<DialogueRound>& rounds) {
  for (const auto& r : rounds) out << round_to_json(r).dump() << '\n';
}

inline void write_corpus(const std::string& path,
                         const std::vector<DialogueRound>& rounds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file '" + path + "'");
  write_corpus(out, rounds);
}

}  // namespace comac
