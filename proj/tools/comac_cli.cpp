// comac: command-line driver for the grounding engine.
//
// Exit codes: 0 success, 1 runtime error, 2 usage or I/O error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "comac/comac.hpp"

namespace {

using namespace comac;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

constexpr std::size_t kDefaultHashDim = 128;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path))
    throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  detail::write_file(path, text);
}

// TrainConfig flags. Values are kept as strings so a flag overrides the
// config file only when it was actually given.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    for (const char* key : {"alpha", "beta", "gamma", "w_star", "p_star", "P_sr", "d0", "strategy",
                            "learning_rate", "epochs", "seed", "normalize_tokens"})
      cmd->add_option(std::string("--") + key, values[key]);
  }

  TrainConfig resolve(CLI::App* cmd) const {
    TrainConfig cfg;
    if (!config_path.empty()) {
      require_file(config_path, "config file");
      std::ifstream in(config_path);
      cfg = parse_config(in);
    }
    for (const auto& [key, value] : values)
      if (cmd->count(std::string("--") + key) > 0) set_config_value(cfg, key, value);
    cfg.validate();
    return cfg;
  }
};

struct EmbeddingFlags {
  std::string path;
  std::size_t dim = kDefaultHashDim;

  void add(CLI::App* cmd) {
    cmd->add_option("--embeddings", path, "binary embedding file (default: hash embedder)");
    cmd->add_option("--dim", dim, "hash embedder width")->capture_default_str();
  }

  Embedder make() const {
    if (path.empty()) return Embedder::hashed(dim);
    require_file(path, "embedding file");
    return Embedder::imported(import_embeddings(path));
  }
};

std::vector<DialogueRound> read_rounds(const std::string& path) {
  require_file(path, "corpus");
  return load_corpus(path);
}

Embedder embedder_for(const Checkpoint& ck, const std::string& embeddings_path) {
  Embedder e = embeddings_path.empty() ? Embedder::hashed(ck.model.input_dim())
                                       : (require_file(embeddings_path, "embedding file"),
                                          Embedder::imported(import_embeddings(embeddings_path)));
  if (ck.embedder == "imported" && embeddings_path.empty())
    throw UsageError("model was trained on imported embeddings; pass --embeddings");
  if (e.dim() != ck.model.input_dim())
    throw ShapeError("embedding width " + std::to_string(e.dim()) + " does not match model width " +
                     std::to_string(ck.model.input_dim()));
  return e;
}

const IdfTable* idf_for(const Checkpoint& ck) {
  return ck.model.strategy == Strategy::tfidf ? &ck.idf : nullptr;
}

// ---------------------------------------------------------------------------

int cmd_build_idf(const std::string& corpus, const std::string& out) {
  save_idf(out, build_idf(read_rounds(corpus)));
  return kExitOk;
}

int cmd_embed(const std::string& corpus, std::size_t dim, const std::string& out) {
  std::vector<TokenMatrix> entries;
  for (const auto& r : read_rounds(corpus)) {
    entries.push_back(hash_embed(r.utterance, dim));
    for (const auto& p : r.personas) entries.push_back(hash_embed(p, dim));
    for (const auto& k : r.knowledges) entries.push_back(hash_embed(k, dim));
  }
  export_embeddings(out, entries);
  return kExitOk;
}

int cmd_import(const std::string& in, std::size_t dim, const std::string& corpus) {
  require_file(in, "embedding file");
  const auto table = import_embeddings(in, dim);
  std::size_t tokens = 0;
  for (const auto& [id, m] : table) tokens += m.tokens();
  nlohmann::json summary{{"entries", table.size()},
                         {"d", table.empty() ? 0 : table.begin()->second.dim()},
                         {"tokens", tokens}};
  if (!corpus.empty()) {
    std::size_t missing = 0;
    for (const auto& r : read_rounds(corpus)) {
      missing += !table.count(r.utterance.id);
      for (const auto& p : r.personas) missing += !table.count(p.id);
      for (const auto& k : r.knowledges) missing += !table.count(k.id);
    }
    summary["missing_entries"] = missing;
    if (missing) {
      std::cout << summary.dump() << '\n';
      throw MissingEntry(std::to_string(missing) + " corpus entries have no embedding");
    }
  }
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

int cmd_train(const std::string& corpus, const EmbeddingFlags& emb, const std::string& idf_path,
              const TrainConfig& cfg, const std::string& out, bool quiet) {
  const auto rounds = read_rounds(corpus);
  const auto embedder = emb.make();
  IdfTable idf;
  if (cfg.strategy == Strategy::tfidf) {
    if (!idf_path.empty()) {
      require_file(idf_path, "IDF file");
      idf = load_idf(idf_path);
    } else {
      // Round-trip through the file form so train and eval see one table.
      idf = idf_from_json(idf_to_json(build_idf(rounds)));
    }
  }
  const auto inputs = prepare_rounds(rounds, embedder, cfg.strategy == Strategy::tfidf ? &idf : nullptr);
  auto model = train(inputs, embedder.dim(), cfg, {}, [&](const TrainProgress& p) {
    if (!quiet) std::cerr << "epoch " << p.epoch + 1 << " mean loss " << p.mean_loss << '\n';
  });
  save_checkpoint(out, {std::move(model), cfg, std::move(idf), embedder.is_hashed() ? "hash" : "imported"});
  return kExitOk;
}

int cmd_ground(const std::string& model_path, const std::string& corpus,
               const std::string& embeddings, const std::string& sep, const std::string& out) {
  require_file(model_path, "model");
  const auto ck = load_checkpoint(model_path);
  const auto rounds = read_rounds(corpus);
  const auto embedder = embedder_for(ck, embeddings);
  std::ostringstream lines;
  for (const auto& r : rounds) {
    const auto in = prepare_round(r, embedder, idf_for(ck));
    const auto result = ground(ck.model, in, ck.config.p_sr);
    lines << grounding_record(r, result, assemble_prompt(r, result, sep)).dump() << '\n';
  }
  write_text(out, lines.str());
  return kExitOk;
}

std::optional<TextScores> text_scores(const std::vector<DialogueRound>& rounds,
                                      const std::string& path) {
  if (path.empty()) return std::nullopt;
  require_file(path, "responses file");
  std::map<std::pair<std::string, std::size_t>, const DialogueRound*> index;
  for (const auto& r : rounds) index[{r.dialog_id, r.round}] = &r;
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0, line_no = 0;
  TextScores sum;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("responses line " + std::to_string(line_no) + ": " + e.what());
    }
    auto it = index.find({detail::required<std::string>(j, "dialog_id"),
                          detail::required<std::size_t>(j, "round")});
    if (it == index.end() || it->second->response.empty()) continue;
    const auto candidate = detail::required<std::string>(j, "response");
    sum.f1 += unigram_f1(candidate, it->second->response);
    sum.rouge_l += rouge_l(candidate, it->second->response);
    ++n;
  }
  if (n == 0) throw EmptyEval("no responses matched a round with a reference response");
  return TextScores{sum.f1 / static_cast<double>(n), sum.rouge_l / static_cast<double>(n)};
}

int cmd_eval(const std::string& model_path, const std::string& corpus,
             const std::string& embeddings, const std::string& responses, bool stamp,
             const std::string& out) {
  require_file(model_path, "model");
  const auto ck = load_checkpoint(model_path);
  const auto rounds = read_rounds(corpus);
  const auto embedder = embedder_for(ck, embeddings);
  auto report = evaluate(ck.model, prepare_rounds(rounds, embedder, idf_for(ck)), ck.config.p_sr);
  report.text = text_scores(rounds, responses);
  auto j = report_to_json(report);
  if (stamp) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["generated_at"] = buf;
  }
  write_text(out, j.dump(2) + "\n");
  return kExitOk;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!detail::trim(item).empty()) out.push_back(detail::trim(item));
  return out;
}

SweepSpec parse_sweep(const std::vector<std::string>& weights, const std::vector<std::string>& p_sr,
                      bool constrain, const TrainConfig& base) {
  SweepSpec spec;
  spec.constrain_sum = constrain;
  for (const auto& w : weights) {
    auto parts = split_list(w, '/');
    if (parts.size() != 3) throw ConfigError("loss weights must look like alpha/beta/gamma, got '" + w + "'");
    spec.weights.push_back({detail::parse_double("alpha", parts[0]),
                            detail::parse_double("beta", parts[1]),
                            detail::parse_double("gamma", parts[2])});
  }
  for (const auto& p : p_sr) spec.p_sr.push_back(detail::parse_double("P_sr", p));
  if (weights.empty()) spec.weights.push_back({base.alpha, base.beta, base.gamma});
  if (p_sr.empty()) spec.p_sr.push_back(base.p_sr);
  return spec;
}

int cmd_sweep(const std::string& train_path, const std::string& eval_path,
              const EmbeddingFlags& emb, const SweepSpec& spec, const TrainConfig& base,
              const std::string& out) {
  spec.validate();
  const auto train_rounds = read_rounds(train_path);
  const auto eval_rounds = read_rounds(eval_path);
  const auto embedder = emb.make();
  IdfTable idf;
  const IdfTable* idf_ptr = nullptr;
  if (base.strategy == Strategy::tfidf) {
    idf = idf_from_json(idf_to_json(build_idf(train_rounds)));
    idf_ptr = &idf;
  }
  const auto rows = run_sweep(spec, base, prepare_rounds(train_rounds, embedder, idf_ptr),
                              prepare_rounds(eval_rounds, embedder, idf_ptr), embedder.dim());
  write_text(out, sweep_csv(rows));
  return kExitOk;
}

int cmd_gen(const SyntheticSpec& spec, const std::string& out, std::size_t eval_rounds,
            const std::string& eval_out) {
  SyntheticSpec s = spec;
  s.rounds = spec.rounds + eval_rounds;
  auto rounds = gen_synthetic(s);
  std::vector<DialogueRound> eval(rounds.begin() + static_cast<std::ptrdiff_t>(spec.rounds), rounds.end());
  rounds.resize(spec.rounds);
  write_corpus(out, rounds);
  if (eval_rounds > 0) {
    if (eval_out.empty()) throw UsageError("--eval-rounds requires --eval-out");
    write_corpus(eval_out, eval);
  }
  return kExitOk;
}

int cmd_bench(const std::string& corpus, const EmbeddingFlags& emb, double p_sr, std::size_t repeat) {
  check_ratio(p_sr);
  const auto rounds = read_rounds(corpus);
  const auto embedder = emb.make();
  const auto idf = build_idf(rounds);
  const auto inputs = prepare_rounds(rounds, embedder, &idf);
  TrainConfig cfg;
  const auto model = init_model(embedder.dim(), cfg);
  auto time_scoring = [&](double ratio) {
    volatile double sink = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < repeat; ++k)
      for (const auto& in : inputs) sink = sink + relevance(model, in, ratio).pu[0];
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const double sparse = time_scoring(p_sr);
  const double dense = time_scoring(1.0);
  nlohmann::json j{{"rounds", inputs.size()},
                   {"repeat", repeat},
                   {"P_sr", p_sr},
                   {"seconds_sampled", sparse},
                   {"seconds_full", dense},
                   {"relative_saving", dense > 0 ? (dense - sparse) / dense : 0.0}};
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse symmetric late-interaction grounding engine"};
  app.require_subcommand(1);

  std::string corpus, out, model, embeddings, idf_path, responses, sep = " ", eval_path;
  bool stamp = false, quiet = false, constrain = false;
  std::size_t dim = kDefaultHashDim, eval_rounds = 0, repeat = 3;
  std::string eval_out;
  double bench_ratio = 0.35;
  SyntheticSpec synth;
  synth.rounds = 500;
  std::vector<std::string> sweep_weights, sweep_ratios;

  auto* build_idf_cmd = app.add_subcommand("build-idf", "Precompute IDF weights from a corpus");
  build_idf_cmd->add_option("--corpus", corpus)->required();
  build_idf_cmd->add_option("--out", out)->required();

  auto* embed_cmd = app.add_subcommand("embed", "Write hash embeddings for every corpus entry");
  embed_cmd->add_option("--corpus", corpus)->required();
  embed_cmd->add_option("--dim", dim)->capture_default_str();
  embed_cmd->add_option("--out", out)->required();

  auto* import_cmd = app.add_subcommand("import-embeddings", "Validate a binary embedding file");
  std::size_t import_dim = 0;
  import_cmd->add_option("--in", embeddings)->required();
  import_cmd->add_option("--dim", import_dim, "expected width (0: any)");
  import_cmd->add_option("--corpus", corpus, "check coverage of this corpus");

  auto* train_cmd = app.add_subcommand("train", "Train reduction, saliency and grounding heads");
  EmbeddingFlags train_emb;
  ConfigFlags train_cfg;
  train_cmd->add_option("--corpus", corpus)->required();
  train_cmd->add_option("--idf", idf_path, "IDF table (default: built from the corpus)");
  train_cmd->add_option("--out", out)->required();
  train_cmd->add_flag("--quiet", quiet);
  train_emb.add(train_cmd);
  train_cfg.add(train_cmd);

  auto* ground_cmd = app.add_subcommand("ground", "Select personas/knowledge and assemble prompts");
  ground_cmd->add_option("--model", model)->required();
  ground_cmd->add_option("--corpus", corpus)->required();
  ground_cmd->add_option("--embeddings", embeddings);
  ground_cmd->add_option("--sep", sep, "prompt segment separator");
  ground_cmd->add_option("--out", out, "JSON lines output (default: stdout)");

  auto* eval_cmd = app.add_subcommand("eval", "Grounding (and optional text) metrics");
  eval_cmd->add_option("--model", model)->required();
  eval_cmd->add_option("--corpus", corpus)->required();
  eval_cmd->add_option("--embeddings", embeddings);
  eval_cmd->add_option("--responses", responses, "JSON lines {dialog_id, round, response}");
  eval_cmd->add_flag("--stamp", stamp, "include a timestamp in the report");
  eval_cmd->add_option("--out", out, "report path (default: stdout)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a hyper-parameter grid");
  EmbeddingFlags sweep_emb;
  ConfigFlags sweep_cfg;
  sweep_cmd->add_option("--train", corpus)->required();
  sweep_cmd->add_option("--eval", eval_path)->required();
  sweep_cmd->add_option("--weights", sweep_weights, "alpha/beta/gamma triples")->delimiter(',');
  sweep_cmd->add_option("--P_sr-grid", sweep_ratios, "sampling ratios")->delimiter(',');
  sweep_cmd->add_flag("--constrain-sum", constrain, "require alpha+beta+gamma = 10");
  sweep_cmd->add_option("--out", out, "CSV output (default: stdout)");
  sweep_emb.add(sweep_cmd);
  sweep_cfg.add(sweep_cmd);

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic corpus");
  gen_cmd->add_option("--rounds", synth.rounds)->capture_default_str();
  gen_cmd->add_option("--personas", synth.personas)->capture_default_str();
  gen_cmd->add_option("--knowledges", synth.knowledges)->capture_default_str();
  gen_cmd->add_option("--seed", synth.seed)->capture_default_str();
  gen_cmd->add_option("--out", out)->required();
  gen_cmd->add_option("--eval-rounds", eval_rounds, "extra held-out rounds");
  gen_cmd->add_option("--eval-out", eval_out);

  auto* bench_cmd = app.add_subcommand("bench", "Time similarity scoring with and without sampling");
  EmbeddingFlags bench_emb;
  bench_cmd->add_option("--corpus", corpus)->required();
  bench_cmd->add_option("--P_sr", bench_ratio)->capture_default_str();
  bench_cmd->add_option("--repeat", repeat)->capture_default_str();
  bench_emb.add(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*build_idf_cmd) return cmd_build_idf(corpus, out);
    if (*embed_cmd) return cmd_embed(corpus, dim, out);
    if (*import_cmd) return cmd_import(embeddings, import_dim, corpus);
    if (*train_cmd)
      return cmd_train(corpus, train_emb, idf_path, train_cfg.resolve(train_cmd), out, quiet);
    if (*ground_cmd) return cmd_ground(model, corpus, embeddings, sep, out);
    if (*eval_cmd) return cmd_eval(model, corpus, embeddings, responses, stamp, out);
    if (*sweep_cmd) {
      const auto base = sweep_cfg.resolve(sweep_cmd);
      return cmd_sweep(corpus, eval_path, sweep_emb, parse_sweep(sweep_weights, sweep_ratios, constrain, base),
                       base, out);
    }
    if (*gen_cmd) return cmd_gen(synth, out, eval_rounds, eval_out);
    if (*bench_cmd) return cmd_bench(corpus, bench_emb, bench_ratio, repeat);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const comac::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
