// Command-line front end for the resume quality scoring toolkit.
//
// Subcommands: synth, embed, train, cv, score, eval. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 protocol/config error. All outputs are
// written atomically (temp file + rename).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rqa/rqa.hpp"

namespace fs = std::filesystem;

namespace {

std::optional<std::uint64_t> env_seed_override() {
  const char* env = std::getenv("RQA_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  try {
    return static_cast<std::uint64_t>(std::stoull(env));
  } catch (const std::exception&) {
    throw rqa::ConfigError(std::string("RQA_SEED is not an integer: '") + env +
                           "'");
  }
}

rqa::Corpus load_corpus_with_warnings(const fs::path& path) {
  std::vector<std::string> warnings;
  rqa::Corpus corpus = rqa::load_corpus(path, &warnings);
  for (const std::string& w : warnings) {
    std::cerr << "warning: " << path.string() << ": " << w << "\n";
  }
  return corpus;
}

// Loads the table when a path is given, otherwise an empty table at the
// requested dimension so every lookup uses the deterministic embedder.
rqa::EmbeddingTable load_table_or_fallback(const std::string& path, int dim) {
  if (path.empty()) return rqa::EmbeddingTable(dim);
  return rqa::EmbeddingTable::load(path);
}

std::vector<std::string> read_id_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw rqa::Error(rqa::ErrorKind::data, "cannot open: " + path.string());
  }
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::string serialize_scores(
    const std::vector<std::pair<std::string, double>>& scores) {
  std::ostringstream out;
  out << "id,score\n";
  for (const auto& [id, score] : scores) {
    out << id << "," << rqa::format_double(score) << "\n";
  }
  return out.str();
}

std::vector<std::pair<std::string, double>> read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw rqa::Error(rqa::ErrorKind::data, "cannot open: " + path.string());
  }
  std::vector<std::pair<std::string, double>> scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("id,", 0) == 0) continue;  // header
    const std::size_t comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw rqa::ParseError(path.string() + ":" + std::to_string(lineno) +
                            ": expected 'id,score'");
    }
    try {
      scores.emplace_back(line.substr(0, comma),
                          std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw rqa::ParseError(path.string() + ":" + std::to_string(lineno) +
                            ": bad score value");
    }
  }
  return scores;
}

// --- synth ------------------------------------------------------------

struct SynthArgs {
  int n_pos = 0;
  int n_neg = 0;
  int n_unlabeled = 0;
  std::uint64_t seed = 0;
  std::string out;
};

void run_synth(const SynthArgs& args) {
  std::uint64_t seed = args.seed;
  if (auto env = env_seed_override()) seed = *env;
  const rqa::Corpus corpus =
      rqa::generate_synthetic(args.n_pos, args.n_neg, args.n_unlabeled, seed);
  rqa::save_corpus(corpus, args.out);
  std::cout << "wrote " << corpus.size() << " resumes to " << args.out << "\n";
}

// --- embed ------------------------------------------------------------

struct EmbedArgs {
  std::string corpus;
  int dim = rqa::kDefaultEmbeddingDim;
  std::string out;
};

void run_embed(const EmbedArgs& args) {
  const rqa::Corpus corpus = load_corpus_with_warnings(args.corpus);
  rqa::EmbeddingTable table(args.dim);
  std::set<std::string> texts;
  for (const rqa::Resume& r : corpus.resumes()) {
    texts.insert(r.skills.begin(), r.skills.end());
    texts.insert(r.work_experiences.begin(), r.work_experiences.end());
  }
  for (const std::string& text : texts) {
    table.insert(text, rqa::deterministic_embed(text, args.dim));
  }
  table.save(args.out);
  std::cout << "wrote " << table.size() << " embeddings to " << args.out
            << "\n";
}

// --- train ------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string config;
  std::string embeddings;
  std::string model_out;
  std::string history_out;
  std::string train_ids_file;
  std::string val_ids_file;
  bool auto_split = false;
};

void run_train(const TrainArgs& args) {
  const rqa::Corpus corpus = load_corpus_with_warnings(args.corpus);
  rqa::TrainConfig config = rqa::load_train_config(args.config);
  if (auto env = env_seed_override()) config.seed = *env;
  const rqa::EmbeddingTable table =
      load_table_or_fallback(args.embeddings, config.embedding_dim);

  rqa::CorpusSplit split;
  split.unlabeled_ids = corpus.unlabeled_ids();
  if (args.auto_split) {
    // deterministic 80/20 split of the labeled ids
    std::vector<std::string> ids = corpus.labeled_ids();
    if (ids.size() < 2) {
      throw rqa::ProtocolError("auto-split needs at least 2 labeled samples");
    }
    rqa::Rng rng(rqa::mix_seed(config.seed, 0x6175746f73706c74ull));
    rng.shuffle(ids);
    std::size_t n_val = std::max<std::size_t>(1, ids.size() / 5);
    split.val_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  } else {
    if (args.train_ids_file.empty() || args.val_ids_file.empty()) {
      throw rqa::ConfigError(
          "pass --train-ids and --val-ids, or --auto-split");
    }
    split.train_ids = read_id_file(args.train_ids_file);
    split.val_ids = read_id_file(args.val_ids_file);
  }

  const rqa::TrainResult result = rqa::train(corpus, table, split, config);

  rqa::ModelArtifact artifact;
  artifact.params = result.params;
  artifact.stats = rqa::fit_normalizer(corpus);
  artifact.config = config;

  const std::string model_text = rqa::serialize_model(artifact);
  const std::string history_text = rqa::serialize_history(result.history);
  const fs::path history_path = args.history_out.empty()
                                    ? fs::path(args.model_out + ".history.csv")
                                    : fs::path(args.history_out);
  rqa::write_file_atomic(args.model_out, model_text);
  rqa::write_file_atomic(history_path, history_text);
  if (table.fallback_count() > 0) {
    std::cerr << "note: " << table.fallback_count()
              << " embedding lookups used the deterministic fallback\n";
  }
  std::cout << "best validation AUC " << rqa::format_double(result.best_val_auc)
            << " at epoch " << result.best_epoch << "\n";
  std::cout << "wrote model to " << args.model_out << " and history to "
            << history_path.string() << "\n";
}

// --- cv ---------------------------------------------------------------

struct CvArgs {
  std::string corpus;
  std::string config;
  std::string embeddings;
  int shuffles = 10;
  int jobs = 1;
  std::string out;
  std::string roc_prefix;
};

void run_cv(const CvArgs& args) {
  const rqa::Corpus corpus = load_corpus_with_warnings(args.corpus);
  rqa::TrainConfig config = rqa::load_train_config(args.config);
  if (auto env = env_seed_override()) config.seed = *env;
  const rqa::EmbeddingTable table =
      load_table_or_fallback(args.embeddings, config.embedding_dim);

  const rqa::CVReport report =
      rqa::cross_validate(corpus, table, config, args.shuffles, 5, args.jobs);

  std::string roc_prefix = args.roc_prefix;
  if (roc_prefix.empty()) {
    fs::path base(args.out);
    base.replace_extension();
    roc_prefix = base.string() + "_roc_shuffle";
  }
  rqa::write_file_atomic(args.out, rqa::serialize_cv_report(report));
  for (const rqa::ShuffleBlock& block : report.shuffles) {
    rqa::write_file_atomic(roc_prefix + std::to_string(block.shuffle) + ".csv",
                           rqa::serialize_roc(block.pooled_roc));
  }
  std::cout << "mean AUC " << rqa::format_double(report.auc.mean) << " +/- "
            << rqa::format_double(report.auc.stddev) << ", mean F1 "
            << rqa::format_double(report.f1.mean) << ", mean AP "
            << rqa::format_double(report.ap.mean) << "\n";
  std::cout << "wrote report to " << args.out << "\n";
}

// --- score ------------------------------------------------------------

struct ScoreArgs {
  std::string model;
  std::string corpus;
  std::string embeddings;
  std::string out;
};

void run_score(const ScoreArgs& args) {
  const rqa::ModelArtifact artifact = rqa::load_model(args.model);
  const rqa::Corpus corpus = load_corpus_with_warnings(args.corpus);
  const rqa::EmbeddingTable table =
      load_table_or_fallback(args.embeddings, artifact.params.dims.embedding);
  const auto scores = rqa::score_corpus(corpus, table, artifact);
  rqa::write_file_atomic(args.out, serialize_scores(scores));
  std::cout << "wrote " << scores.size() << " scores to " << args.out << "\n";
}

// --- eval -------------------------------------------------------------

struct EvalArgs {
  std::string scores;
  std::string corpus;
  std::string out;
  std::string roc_out;
};

void run_eval(const EvalArgs& args) {
  const auto scores = read_scores(args.scores);
  const rqa::Corpus corpus = load_corpus_with_warnings(args.corpus);

  std::vector<rqa::ScoredItem> items;
  std::size_t n_unlabeled = 0;
  for (const auto& [id, score] : scores) {
    const rqa::Resume* r = corpus.find(id);
    if (r == nullptr) {
      throw rqa::ValidationError("scored id '" + id + "' not in corpus");
    }
    if (r->label == rqa::Label::unlabeled) {
      ++n_unlabeled;
      continue;
    }
    items.push_back({id, score, r->label == rqa::Label::positive ? 1 : -1});
  }
  if (n_unlabeled > 0) {
    std::cerr << "warning: ignored " << n_unlabeled << " unlabeled ids\n";
  }

  const rqa::RocResult roc = rqa::roc_auc(items);
  const rqa::F1Result f1 = rqa::f1_at_zero(items);
  const double ap = rqa::average_precision(items);

  nlohmann::ordered_json j;
  j["auc"] = roc.auc;
  j["f1"] = f1.f1;
  j["precision"] = f1.precision;
  j["recall"] = f1.recall;
  j["ap"] = ap;
  j["n_scored"] = items.size();
  j["n_ignored_unlabeled"] = n_unlabeled;
  rqa::write_file_atomic(args.out, j.dump(2) + "\n");
  if (!args.roc_out.empty()) {
    rqa::write_file_atomic(args.roc_out, rqa::serialize_roc(roc.points));
  }
  std::cout << "auc " << rqa::format_double(roc.auc) << " f1 "
            << rqa::format_double(f1.f1) << " ap " << rqa::format_double(ap)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"resume quality scoring toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic corpus");
  synth_cmd->add_option("--pos", synth.n_pos, "positive resumes")->required();
  synth_cmd->add_option("--neg", synth.n_neg, "negative resumes")->required();
  synth_cmd->add_option("--unlabeled", synth.n_unlabeled, "unlabeled resumes")
      ->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--out", synth.out, "corpus file to write")->required();
  synth_cmd->callback([&] { run_synth(synth); });

  EmbedArgs embed;
  CLI::App* embed_cmd = app.add_subcommand(
      "embed", "precompute deterministic embeddings for a corpus");
  embed_cmd->add_option("--corpus", embed.corpus, "corpus file")->required();
  embed_cmd->add_option("--dim", embed.dim, "embedding dimension");
  embed_cmd->add_option("--out", embed.out, "table file to write")->required();
  embed_cmd->callback([&] { run_embed(embed); });

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a scoring model");
  train_cmd->add_option("--corpus", train.corpus, "corpus file")->required();
  train_cmd->add_option("--config", train.config, "training config file")
      ->required();
  train_cmd->add_option("--embeddings", train.embeddings,
                        "embedding table (deterministic fallback if absent)");
  train_cmd->add_option("--model-out", train.model_out, "model file to write")
      ->required();
  train_cmd->add_option("--history-out", train.history_out,
                        "history csv (default: <model-out>.history.csv)");
  train_cmd->add_option("--train-ids", train.train_ids_file,
                        "file with one training id per line");
  train_cmd->add_option("--val-ids", train.val_ids_file,
                        "file with one validation id per line");
  train_cmd->add_flag("--auto-split", train.auto_split,
                      "derive a seeded 80/20 train/validation split");
  train_cmd->callback([&] { run_train(train); });

  CvArgs cv;
  CLI::App* cv_cmd =
      app.add_subcommand("cv", "run the shuffled cross-validation protocol");
  cv_cmd->add_option("--corpus", cv.corpus, "corpus file")->required();
  cv_cmd->add_option("--config", cv.config, "training config file")->required();
  cv_cmd->add_option("--embeddings", cv.embeddings,
                     "embedding table (deterministic fallback if absent)");
  cv_cmd->add_option("--shuffles", cv.shuffles, "number of labeled-set shuffles");
  cv_cmd->add_option("--jobs", cv.jobs, "parallel fold workers");
  cv_cmd->add_option("--out", cv.out, "report file to write")->required();
  cv_cmd->add_option("--roc-prefix", cv.roc_prefix,
                     "prefix for per-shuffle ROC csv files");
  cv_cmd->callback([&] { run_cv(cv); });

  ScoreArgs score;
  CLI::App* score_cmd = app.add_subcommand("score", "score a corpus");
  score_cmd->add_option("--model", score.model, "model file")->required();
  score_cmd->add_option("--corpus", score.corpus, "corpus file")->required();
  score_cmd->add_option("--embeddings", score.embeddings,
                        "embedding table (deterministic fallback if absent)");
  score_cmd->add_option("--out", score.out, "score csv to write")->required();
  score_cmd->callback([&] { run_score(score); });

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate scores against corpus labels");
  eval_cmd->add_option("--scores", eval.scores, "id,score csv")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "corpus file with labels")
      ->required();
  eval_cmd->add_option("--out", eval.out, "metrics report to write")->required();
  eval_cmd->add_option("--roc-out", eval.roc_out, "ROC points csv");
  eval_cmd->callback([&] { run_eval(eval); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const rqa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
