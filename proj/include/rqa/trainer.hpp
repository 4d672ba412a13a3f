#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rqa/common.hpp"
#include "rqa/corpus.hpp"
#include "rqa/embedding.hpp"
#include "rqa/features.hpp"
#include "rqa/losses.hpp"
#include "rqa/metrics.hpp"
#include "rqa/model.hpp"
#include "rqa/sampling.hpp"

namespace rqa {

// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
  return nlohmann::json(x).dump();
}

struct HyperGrids {
  std::vector<double> gamma;
  std::vector<double> gamma_i;
  std::vector<int> k;
  std::vector<double> mu;

  static HyperGrids defaults() {
    HyperGrids g;
    for (int i = -5; i <= 5; ++i) g.gamma.push_back(std::ldexp(1.0, i));
    for (int i : {-8, -6, -4, -2, 0, 2, 4}) {
      g.gamma_i.push_back(std::ldexp(1.0, i));
    }
    g.k = {5, 10, 15, 20, 30};
    g.mu = {0.1, 0.2, 0.5, 1.0};
    return g;
  }

  void validate() const {
    if (gamma.empty() || gamma_i.empty() || k.empty() || mu.empty()) {
      throw ConfigError("hyperparameter grids must be non-empty");
    }
  }
};

struct TrainConfig {
  LossConfig loss;
  Aggregation aggregation = Aggregation::average;
  double learning_rate = 0.01;
  int max_epochs = 100;
  int patience = 10;  // epochs without validation-AUC improvement
  std::uint64_t seed = 0;
  int hidden_dim = 128;
  int embedding_dim = kDefaultEmbeddingDim;
  HyperGrids grids = HyperGrids::defaults();

  ModelDims dims() const { return ModelDims{embedding_dim, hidden_dim}; }

  void validate() const {
    loss.validate();
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
    grids.validate();
  }
};

// ---------------------------------------------------------------------------
// Config file: flat "key = value" text, '#' starts a comment.

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad number for '" + key + "': '" + value + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for '" + key + "': '" + value + "'");
  }
}

}  // namespace detail

inline TrainConfig parse_train_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::size_t hash = line.find('#'); hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "loss") {
      config.loss.variant = loss_from_string(value);
    } else if (key == "aggregation") {
      config.aggregation = aggregation_from_string(value);
    } else if (key == "gamma") {
      config.loss.gamma = detail::parse_double(key, value);
    } else if (key == "gamma_i") {
      config.loss.gamma_i = detail::parse_double(key, value);
    } else if (key == "k") {
      config.loss.k = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "mu") {
      config.loss.mu = detail::parse_double(key, value);
    } else if (key == "eta") {
      config.loss.eta = detail::parse_double(key, value);
    } else if (key == "sigma") {
      config.loss.sigma = detail::parse_double(key, value);
    } else if (key == "learning_rate") {
      config.learning_rate = detail::parse_double(key, value);
    } else if (key == "max_epochs") {
      config.max_epochs = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "patience") {
      config.patience = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "seed") {
      config.seed = static_cast<std::uint64_t>(detail::parse_int(key, value));
    } else if (key == "hidden_dim") {
      config.hidden_dim = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "embedding_dim") {
      config.embedding_dim = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "grids.gamma" || key == "grids.gamma_i" ||
               key == "grids.mu") {
      std::vector<double> values;
      for (const std::string& item : detail::split_csv(value)) {
        values.push_back(detail::parse_double(key, item));
      }
      if (key == "grids.gamma") config.grids.gamma = values;
      if (key == "grids.gamma_i") config.grids.gamma_i = values;
      if (key == "grids.mu") config.grids.mu = values;
    } else if (key == "grids.k") {
      config.grids.k.clear();
      for (const std::string& item : detail::split_csv(value)) {
        config.grids.k.push_back(
            static_cast<int>(detail::parse_int(key, item)));
      }
    } else {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(read_file(path));
}

inline std::string serialize_train_config(const TrainConfig& c) {
  std::ostringstream out;
  auto join_doubles = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += format_double(v[i]);
    }
    return s;
  };
  out << "loss = " << to_string(c.loss.variant) << "\n";
  out << "aggregation = " << to_string(c.aggregation) << "\n";
  out << "gamma = " << format_double(c.loss.gamma) << "\n";
  out << "gamma_i = " << format_double(c.loss.gamma_i) << "\n";
  out << "k = " << c.loss.k << "\n";
  out << "mu = " << format_double(c.loss.mu) << "\n";
  out << "eta = " << format_double(c.loss.eta) << "\n";
  out << "sigma = " << format_double(c.loss.sigma) << "\n";
  out << "learning_rate = " << format_double(c.learning_rate) << "\n";
  out << "max_epochs = " << c.max_epochs << "\n";
  out << "patience = " << c.patience << "\n";
  out << "seed = " << c.seed << "\n";
  out << "hidden_dim = " << c.hidden_dim << "\n";
  out << "embedding_dim = " << c.embedding_dim << "\n";
  out << "grids.gamma = " << join_doubles(c.grids.gamma) << "\n";
  out << "grids.gamma_i = " << join_doubles(c.grids.gamma_i) << "\n";
  {
    out << "grids.k = ";
    for (std::size_t i = 0; i < c.grids.k.size(); ++i) {
      if (i) out << ",";
      out << c.grids.k[i];
    }
    out << "\n";
  }
  out << "grids.mu = " << join_doubles(c.grids.mu) << "\n";
  return out.str();
}

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["loss"] = to_string(c.loss.variant);
  j["aggregation"] = to_string(c.aggregation);
  j["gamma"] = c.loss.gamma;
  j["gamma_i"] = c.loss.gamma_i;
  j["k"] = c.loss.k;
  j["mu"] = c.loss.mu;
  j["eta"] = c.loss.eta;
  j["sigma"] = c.loss.sigma;
  j["learning_rate"] = c.learning_rate;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["hidden_dim"] = c.hidden_dim;
  j["embedding_dim"] = c.embedding_dim;
  j["grids"] = {{"gamma", c.grids.gamma},
                {"gamma_i", c.grids.gamma_i},
                {"k", c.grids.k},
                {"mu", c.grids.mu}};
  return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.loss.variant = loss_from_string(j.at("loss").get<std::string>());
  c.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  c.loss.gamma = j.at("gamma").get<double>();
  c.loss.gamma_i = j.at("gamma_i").get<double>();
  c.loss.k = j.at("k").get<int>();
  c.loss.mu = j.at("mu").get<double>();
  c.loss.eta = j.at("eta").get<double>();
  c.loss.sigma = j.at("sigma").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.grids.gamma = j.at("grids").at("gamma").get<std::vector<double>>();
  c.grids.gamma_i = j.at("grids").at("gamma_i").get<std::vector<double>>();
  c.grids.k = j.at("grids").at("k").get<std::vector<int>>();
  c.grids.mu = j.at("grids").at("mu").get<std::vector<double>>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Prepared corpus: embeddings and normalized features computed once.

struct PreparedCorpus {
  NormalizationStats stats;
  std::vector<PreparedResume> resumes;  // corpus order
  std::unordered_map<std::string, std::size_t> index;

  const PreparedResume& at(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) {
      throw ValidationError("unknown resume id: '" + id + "'");
    }
    return resumes[it->second];
  }
};

// keep_embeddings retains the per-skill embedding lists (needed by the
// attention path; the average path only needs the precomputed means).
inline PreparedCorpus prepare_corpus(const Corpus& corpus,
                                     const EmbeddingTable& table,
                                     bool keep_embeddings = true) {
  PreparedCorpus prepared;
  prepared.stats = fit_normalizer(corpus);
  prepared.resumes.reserve(corpus.size());
  for (const Resume& r : corpus.resumes()) {
    PreparedResume p = prepare_resume(r, table, prepared.stats);
    if (!keep_embeddings) {
      p.skill_embeddings.clear();
      p.skill_embeddings.shrink_to_fit();
    }
    prepared.index.emplace(p.id, prepared.resumes.size());
    prepared.resumes.push_back(std::move(p));
  }
  return prepared;
}

// ---------------------------------------------------------------------------
// Training data and SGD.

struct CorpusSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> unlabeled_ids;  // neighbor pool for MR
};

struct TrainDatum {
  enum class Kind { single, pair, triplet, mr_edge };
  Kind kind = Kind::single;
  std::size_t a = 0;  // single/labeled/anchor index into PreparedCorpus
  std::size_t b = 0;  // pair second / triplet positive / unlabeled
  std::size_t c = 0;  // triplet negative
  int pair_label = 0;  // contrastive y
  double omega = 0.0;  // mr edge weight
};

// The per-step objective for one datum: the configured loss (or MR penalty
// for edge data) plus the Frobenius term. Gradients cover every parameter
// the datum reaches.
inline double evaluate_datum(const TrainDatum& datum,
                             const PreparedCorpus& corpus,
                             const ModelParams& params, const LossConfig& loss,
                             Gradients* grads) {
  double value = 0.0;
  switch (datum.kind) {
    case TrainDatum::Kind::single: {
      const PreparedResume& r = corpus.resumes[datum.a];
      ForwardTrace trace;
      const double f = forward(r, params, &trace);
      const double y = r.label == Label::positive ? 1.0 : -1.0;
      const LossValue1 l = l2_loss(f, y);
      value = l.value;
      if (grads) grads->accumulate(backward(trace, l.d, params), 1.0);
      break;
    }
    case TrainDatum::Kind::pair: {
      ForwardTrace t1, t2;
      const double f1 = forward(corpus.resumes[datum.a], params, &t1);
      const double f2 = forward(corpus.resumes[datum.b], params, &t2);
      const LossValue2 l = contrastive_loss(f1, f2, datum.pair_label, loss.eta);
      value = l.value;
      if (grads) {
        grads->accumulate(backward(t1, l.d1, params), 1.0);
        grads->accumulate(backward(t2, l.d2, params), 1.0);
      }
      break;
    }
    case TrainDatum::Kind::triplet: {
      ForwardTrace ta, tp, tn;
      const double fa = forward(corpus.resumes[datum.a], params, &ta);
      const double fp = forward(corpus.resumes[datum.b], params, &tp);
      const double fn = forward(corpus.resumes[datum.c], params, &tn);
      const LossValue3 l = triplet_loss(fa, fp, fn, loss.mu);
      value = l.value;
      if (grads && l.value > 0.0) {
        grads->accumulate(backward(ta, l.da, params), 1.0);
        grads->accumulate(backward(tp, l.dp, params), 1.0);
        grads->accumulate(backward(tn, l.dn, params), 1.0);
      }
      break;
    }
    case TrainDatum::Kind::mr_edge: {
      ForwardTrace tl, tu;
      const double fl = forward(corpus.resumes[datum.a], params, &tl);
      const double fu = forward(corpus.resumes[datum.b], params, &tu);
      const LossValue2 l = mr_penalty(fl, fu, datum.omega, loss.gamma_i);
      value = l.value;
      if (grads) {
        grads->accumulate(backward(tl, l.d1, params), 1.0);
        grads->accumulate(backward(tu, l.d2, params), 1.0);
      }
      break;
    }
  }
  value += frobenius_reg(params, loss.gamma, grads);
  return value;
}

// One SGD update from one datum; returns the pre-update objective value.
inline double sgd_step(ModelParams& params, const TrainDatum& datum,
                       const PreparedCorpus& corpus,
                       const TrainConfig& config) {
  Gradients grads = Gradients::zeros_like(params);
  const double value =
      evaluate_datum(datum, corpus, params, config.loss, &grads);
  if (!grads.all_finite_grads() || !std::isfinite(value)) {
    throw ConfigError("non-finite gradient during SGD; lower the learning "
                      "rate or regularization weights");
  }
  apply_gradient(params, grads, -config.learning_rate);
  return value;
}

namespace detail {

constexpr std::uint64_t kInitStream = 0x696e697470617273ull;
constexpr std::uint64_t kEpochStream = 0x65706f6368736575ull;
constexpr std::uint64_t kShuffleStream = 0x73687566666c6531ull;
constexpr std::uint64_t kCellStream = 0x63656c6c73656564ull;

inline std::vector<std::size_t> resolve_ids(
    const PreparedCorpus& corpus, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = corpus.index.find(id);
    if (it == corpus.index.end()) {
      throw ValidationError("unknown resume id: '" + id + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace detail

// Datum set for one training run: singles, pairs or triplets from the
// labeled training ids, plus one MR edge per kNN link when gamma_i > 0.
inline std::vector<TrainDatum> build_datum_set(const PreparedCorpus& corpus,
                                               const CorpusSplit& split,
                                               const TrainConfig& config) {
  std::vector<std::string> pos_ids, neg_ids;
  for (const std::string& id : split.train_ids) {
    const PreparedResume& r = corpus.at(id);
    if (r.label == Label::positive) {
      pos_ids.push_back(id);
    } else if (r.label == Label::negative) {
      neg_ids.push_back(id);
    } else {
      throw ValidationError("unlabeled id '" + id + "' in training set");
    }
  }

  std::vector<TrainDatum> data;
  auto idx = [&corpus](const std::string& id) { return corpus.index.at(id); };

  switch (config.loss.variant) {
    case LossVariant::l2: {
      for (const std::string& id : split.train_ids) {
        TrainDatum d;
        d.kind = TrainDatum::Kind::single;
        d.a = idx(id);
        data.push_back(d);
      }
      break;
    }
    case LossVariant::contrastive: {
      const PairSet pairs = make_pairs(pos_ids, neg_ids);
      for (const auto& [first, second] : pairs.positive_pairs) {
        TrainDatum d;
        d.kind = TrainDatum::Kind::pair;
        d.a = idx(first);
        d.b = idx(second);
        d.pair_label = 1;
        data.push_back(d);
      }
      for (const auto& [pos, neg] : pairs.negative_pairs) {
        TrainDatum d;
        d.kind = TrainDatum::Kind::pair;
        d.a = idx(pos);
        d.b = idx(neg);
        d.pair_label = 0;
        data.push_back(d);
      }
      break;
    }
    case LossVariant::triplet: {
      const TripletSet triplets = make_triplets(pos_ids, neg_ids);
      for (const auto& t : triplets.triplets) {
        TrainDatum d;
        d.kind = TrainDatum::Kind::triplet;
        d.a = idx(t.anchor);
        d.b = idx(t.positive);
        d.c = idx(t.negative);
        data.push_back(d);
      }
      break;
    }
  }
  if (data.empty()) {
    throw ConfigError(std::string("no training data for loss '") +
                      to_string(config.loss.variant) + "' (" +
                      std::to_string(pos_ids.size()) + " positive, " +
                      std::to_string(neg_ids.size()) + " negative samples)");
  }

  if (config.loss.gamma_i > 0.0) {
    if (split.unlabeled_ids.empty()) {
      throw ConfigError(
          "manifold regularization (gamma_i > 0) requires unlabeled samples");
    }
    auto to_id_vectors = [&corpus](const std::vector<std::string>& ids) {
      std::vector<IdVector> vecs;
      vecs.reserve(ids.size());
      for (const std::string& id : ids) {
        const PreparedResume& r = corpus.at(id);
        IdVector iv;
        iv.id = id;
        iv.sim.v = r.mean_input;
        iv.sim.degenerate = r.mean_degenerate;
        vecs.push_back(std::move(iv));
      }
      return vecs;
    };
    const NeighborGraph graph =
        build_knn_graph(to_id_vectors(split.train_ids),
                        to_id_vectors(split.unlabeled_ids), config.loss.k,
                        config.loss.sigma);
    for (const auto& edge : graph.edges) {
      TrainDatum d;
      d.kind = TrainDatum::Kind::mr_edge;
      d.a = idx(edge.labeled_id);
      d.b = idx(edge.unlabeled_id);
      d.omega = edge.omega;
      data.push_back(d);
    }
  }
  return data;
}

struct EpochStats {
  int epoch = 0;        // 1-based
  double train_loss = 0.0;  // mean pre-update datum objective
  double val_auc = 0.0;
};

struct TrainResult {
  ModelParams params;  // best validation AUC seen
  std::vector<EpochStats> history;
  double best_val_auc = 0.0;
  int best_epoch = 0;
};

namespace detail {

inline double validation_auc(const PreparedCorpus& corpus,
                             const std::vector<std::size_t>& val_indices,
                             const ModelParams& params) {
  std::vector<ScoredItem> items;
  items.reserve(val_indices.size());
  for (std::size_t i : val_indices) {
    const PreparedResume& r = corpus.resumes[i];
    items.push_back(
        {r.id, forward(r, params), r.label == Label::positive ? 1 : -1});
  }
  return roc_auc(items).auc;
}

}  // namespace detail

// SGD with one datum per step, epochs in seeded shuffled order, early
// stopping on validation AUC.
inline TrainResult train(const PreparedCorpus& corpus, const CorpusSplit& split,
                         const TrainConfig& config) {
  config.validate();
  if (split.val_ids.empty()) {
    throw ConfigError("validation set is empty");
  }
  {
    bool has_pos = false, has_neg = false;
    for (const std::string& id : split.val_ids) {
      const Label label = corpus.at(id).label;
      has_pos |= label == Label::positive;
      has_neg |= label == Label::negative;
    }
    if (!has_pos || !has_neg) {
      throw ProtocolError(
          "validation set needs both classes to compute AUC");
    }
  }

  std::vector<TrainDatum> data = build_datum_set(corpus, split, config);
  const std::vector<std::size_t> val_indices =
      detail::resolve_ids(corpus, split.val_ids);

  ModelParams params = init_params(
      config.aggregation, config.dims(),
      mix_seed(config.seed, detail::kInitStream));

  TrainResult result;
  result.params = params;
  result.best_val_auc = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  int stale_epochs = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, detail::kEpochStream,
                     static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t i : order) {
      loss_sum += sgd_step(params, data[i], corpus, config);
    }
    const double val_auc = detail::validation_auc(corpus, val_indices, params);
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(data.size()), val_auc});
    if (val_auc > result.best_val_auc) {
      result.best_val_auc = val_auc;
      result.best_epoch = epoch;
      result.params = params;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) break;
    }
  }
  return result;
}

inline TrainResult train(const Corpus& corpus, const EmbeddingTable& table,
                         const CorpusSplit& split, const TrainConfig& config) {
  if (table.dimension() != config.embedding_dim) {
    throw ConfigError("embedding table dimension " +
                      std::to_string(table.dimension()) +
                      " does not match configured embedding_dim " +
                      std::to_string(config.embedding_dim));
  }
  const PreparedCorpus prepared = prepare_corpus(
      corpus, table, config.aggregation == Aggregation::attention);
  return train(prepared, split, config);
}

// ---------------------------------------------------------------------------
// Model artifact: parameters + normalization + the config that produced them.

struct ModelArtifact {
  ModelParams params;
  NormalizationStats stats;
  TrainConfig config;
};

inline std::string serialize_model(const ModelArtifact& artifact) {
  const ModelParams& p = artifact.params;
  if (!p.all_finite_params()) {
    throw ValidationError("refusing to save non-finite model parameters");
  }
  nlohmann::ordered_json j;
  j["format"] = "rqa-model-v1";
  j["aggregation"] = to_string(p.aggregation);
  j["dims"] = {{"embedding", p.dims.embedding},
               {"hidden", p.dims.hidden},
               {"input", ModelDims::input}};
  nlohmann::ordered_json params;
  params["attention_kernel"] = p.attention_kernel;
  params["cascade_weight"] = p.cascade_weight.data;
  params["cascade_bias"] = p.cascade_bias;
  params["hidden_weight"] = p.hidden_weight.data;
  params["hidden_bias"] = p.hidden_bias;
  params["output_weight"] = p.output_weight;
  params["output_bias"] = p.output_bias;
  j["params"] = std::move(params);
  j["normalization"] = {
      {"mean", std::vector<double>(artifact.stats.mean.begin(),
                                   artifact.stats.mean.end())},
      {"stddev", std::vector<double>(artifact.stats.stddev.begin(),
                                     artifact.stats.stddev.end())}};
  j["train_config"] = config_to_json(artifact.config);
  return j.dump(2) + "\n";
}

inline ModelArtifact parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model file: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "rqa-model-v1") {
      throw ParseError("unsupported model format: " +
                       j.at("format").get<std::string>());
    }
    ModelArtifact artifact;
    ModelParams& p = artifact.params;
    p.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
    p.dims.embedding = j.at("dims").at("embedding").get<int>();
    p.dims.hidden = j.at("dims").at("hidden").get<int>();
    const auto& params = j.at("params");
    p.attention_kernel = params.at("attention_kernel").get<Vec>();
    const std::size_t d = static_cast<std::size_t>(p.dims.embedding);
    const std::size_t h = static_cast<std::size_t>(p.dims.hidden);
    if (p.uses_attention()) {
      p.cascade_weight = Matrix(d, d);
      p.cascade_weight.data = params.at("cascade_weight").get<Vec>();
      p.cascade_bias = params.at("cascade_bias").get<Vec>();
      if (p.attention_kernel.size() != d || p.cascade_bias.size() != d ||
          p.cascade_weight.data.size() != d * d) {
        throw ParseError("model file: attention parameter shape mismatch");
      }
    }
    p.hidden_weight = Matrix(h, static_cast<std::size_t>(ModelDims::input));
    p.hidden_weight.data = params.at("hidden_weight").get<Vec>();
    p.hidden_bias = params.at("hidden_bias").get<Vec>();
    p.output_weight = params.at("output_weight").get<Vec>();
    p.output_bias = params.at("output_bias").get<double>();
    if (p.hidden_weight.data.size() !=
            h * static_cast<std::size_t>(ModelDims::input) ||
        p.hidden_bias.size() != h || p.output_weight.size() != h) {
      throw ParseError("model file: head parameter shape mismatch");
    }
    if (!p.all_finite_params()) {
      throw ParseError("model file: non-finite parameters");
    }
    const auto mean = j.at("normalization").at("mean").get<std::vector<double>>();
    const auto stddev =
        j.at("normalization").at("stddev").get<std::vector<double>>();
    if (mean.size() != kNumScalarFeatures || stddev.size() != kNumScalarFeatures) {
      throw ParseError("model file: normalization shape mismatch");
    }
    std::copy(mean.begin(), mean.end(), artifact.stats.mean.begin());
    std::copy(stddev.begin(), stddev.end(), artifact.stats.stddev.begin());
    artifact.config = config_from_json(j.at("train_config"));
    return artifact;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model file: ") + e.what());
  }
}

inline void save_model(const ModelArtifact& artifact,
                       const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(artifact));
}

inline ModelArtifact load_model(const std::filesystem::path& path) {
  return parse_model(read_file(path));
}

// Scores every resume in corpus order.
inline std::vector<std::pair<std::string, double>> score_corpus(
    const Corpus& corpus, const EmbeddingTable& table,
    const ModelArtifact& artifact) {
  if (table.dimension() != artifact.params.dims.embedding) {
    throw Error(ErrorKind::data,
                "embedding dimension " + std::to_string(table.dimension()) +
                    " does not match model dimension " +
                    std::to_string(artifact.params.dims.embedding));
  }
  std::vector<std::pair<std::string, double>> scores;
  scores.reserve(corpus.size());
  for (const Resume& r : corpus.resumes()) {
    const PreparedResume prepared =
        prepare_resume(r, table, artifact.stats);
    scores.emplace_back(r.id, forward(prepared, artifact.params));
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Cross-validation protocol: per shuffle, 5 folds, each fold tested once
// with hyperparameters grid-searched on the validation fold.

struct MetricsSummary {
  double auc = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double ap = 0.0;
};

inline MetricsSummary compute_metrics(const std::vector<ScoredItem>& items) {
  MetricsSummary m;
  m.auc = roc_auc(items).auc;
  const F1Result f1 = f1_at_zero(items);
  m.f1 = f1.f1;
  m.precision = f1.precision;
  m.recall = f1.recall;
  m.ap = average_precision(items);
  return m;
}

struct FoldCell {
  int shuffle = 0;
  int fold = 0;
  LossConfig chosen;
  double chosen_val_auc = 0.0;
  std::vector<std::pair<std::string, double>> test_scores;
  std::optional<MetricsSummary> fold_metrics;  // absent if fold single-class
};

struct ShuffleBlock {
  int shuffle = 0;
  std::uint64_t shuffle_seed = 0;
  std::vector<FoldCell> folds;
  MetricsSummary pooled;  // over all labeled ids of the shuffle
  std::vector<std::pair<double, double>> pooled_roc;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev across shuffles
};

struct CVReport {
  int n_shuffles = 0;
  int n_folds = 0;
  TrainConfig base_config;
  std::vector<ShuffleBlock> shuffles;
  Aggregate auc, f1, ap;
};

// Grid candidates in deterministic order. mu is swept only for the triplet
// loss; gamma_i and k only when MR is enabled (base gamma_i > 0).
inline std::vector<LossConfig> expand_grid(const TrainConfig& base) {
  base.grids.validate();
  const std::vector<double> mus = base.loss.variant == LossVariant::triplet
                                      ? base.grids.mu
                                      : std::vector<double>{base.loss.mu};
  const bool mr = base.loss.gamma_i > 0.0;
  const std::vector<double> gamma_is =
      mr ? base.grids.gamma_i : std::vector<double>{base.loss.gamma_i};
  const std::vector<int> ks = mr ? base.grids.k : std::vector<int>{base.loss.k};

  std::vector<LossConfig> out;
  for (double gamma : base.grids.gamma) {
    for (double mu : mus) {
      for (double gamma_i : gamma_is) {
        for (int k : ks) {
          LossConfig c = base.loss;
          c.gamma = gamma;
          c.mu = mu;
          c.gamma_i = gamma_i;
          c.k = k;
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

namespace detail {

inline FoldCell run_fold_cell(const Corpus& corpus,
                              const PreparedCorpus& prepared,
                              const FoldPlan& plan, int shuffle, int fold,
                              const TrainConfig& base,
                              const std::vector<LossConfig>& candidates) {
  CorpusSplit split;
  split.train_ids = plan.training_ids(fold);
  split.val_ids = plan.validation_ids(fold);
  if (base.loss.gamma_i > 0.0) split.unlabeled_ids = corpus.unlabeled_ids();

  FoldCell cell;
  cell.shuffle = shuffle;
  cell.fold = fold;

  TrainConfig config = base;
  config.seed = mix_seed(base.seed, kCellStream,
                         static_cast<std::uint64_t>(shuffle) * 1000003ull +
                             static_cast<std::uint64_t>(fold));
  std::optional<TrainResult> best;
  for (const LossConfig& candidate : candidates) {
    config.loss = candidate;
    TrainResult result = train(prepared, split, config);
    if (!best || result.best_val_auc > best->best_val_auc) {
      best = std::move(result);
      cell.chosen = candidate;
      cell.chosen_val_auc = best->best_val_auc;
    }
  }

  for (const std::string& id : plan.test_ids(fold)) {
    cell.test_scores.emplace_back(id, forward(prepared.at(id), best->params));
  }

  std::vector<ScoredItem> items;
  bool has_pos = false, has_neg = false;
  for (const auto& [id, score] : cell.test_scores) {
    const int label = prepared.at(id).label == Label::positive ? 1 : -1;
    has_pos |= label == 1;
    has_neg |= label == -1;
    items.push_back({id, score, label});
  }
  if (has_pos && has_neg) cell.fold_metrics = compute_metrics(items);
  return cell;
}

inline Aggregate aggregate_metric(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return a;
}

}  // namespace detail

inline CVReport cross_validate(const Corpus& corpus,
                               const EmbeddingTable& table,
                               const TrainConfig& base_config, int n_shuffles,
                               int n_folds = 5, int jobs = 1) {
  base_config.validate();
  if (n_shuffles < 1) throw ConfigError("n_shuffles must be >= 1");
  if (table.dimension() != base_config.embedding_dim) {
    throw ConfigError("embedding table dimension " +
                      std::to_string(table.dimension()) +
                      " does not match configured embedding_dim " +
                      std::to_string(base_config.embedding_dim));
  }
  if (corpus.counts().labeled() < static_cast<std::size_t>(n_folds)) {
    throw ProtocolError("only " + std::to_string(corpus.counts().labeled()) +
                        " labeled samples for " + std::to_string(n_folds) +
                        " folds");
  }

  const PreparedCorpus prepared = prepare_corpus(
      corpus, table, base_config.aggregation == Aggregation::attention);
  const std::vector<LossConfig> candidates = expand_grid(base_config);

  CVReport report;
  report.n_shuffles = n_shuffles;
  report.n_folds = n_folds;
  report.base_config = base_config;
  report.shuffles.resize(static_cast<std::size_t>(n_shuffles));

  std::vector<FoldPlan> plans;
  plans.reserve(static_cast<std::size_t>(n_shuffles));
  for (int s = 0; s < n_shuffles; ++s) {
    const std::uint64_t shuffle_seed = mix_seed(
        base_config.seed, detail::kShuffleStream, static_cast<std::uint64_t>(s));
    plans.push_back(plan_folds(corpus, n_folds, shuffle_seed));
    report.shuffles[static_cast<std::size_t>(s)].shuffle = s;
    report.shuffles[static_cast<std::size_t>(s)].shuffle_seed = shuffle_seed;
    report.shuffles[static_cast<std::size_t>(s)].folds.resize(
        static_cast<std::size_t>(n_folds));
  }

  // (shuffle, fold) cells are independent; run them on a small worker pool
  // and assemble into preallocated slots so the report is identical for any
  // job count.
  struct Task {
    int shuffle;
    int fold;
  };
  std::vector<Task> tasks;
  for (int s = 0; s < n_shuffles; ++s) {
    for (int f = 0; f < n_folds; ++f) tasks.push_back({s, f});
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const Task& t = tasks[i];
        report.shuffles[static_cast<std::size_t>(t.shuffle)]
            .folds[static_cast<std::size_t>(t.fold)] = detail::run_fold_cell(
            corpus, prepared, plans[static_cast<std::size_t>(t.shuffle)],
            t.shuffle, t.fold, base_config, candidates);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (std::thread& th : threads) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<double> aucs, f1s, aps;
  for (ShuffleBlock& block : report.shuffles) {
    std::vector<ScoredItem> pooled;
    for (const FoldCell& cell : block.folds) {
      for (const auto& [id, score] : cell.test_scores) {
        pooled.push_back(
            {id, score,
             prepared.at(id).label == Label::positive ? 1 : -1});
      }
    }
    const RocResult roc = roc_auc(pooled);
    block.pooled = compute_metrics(pooled);
    block.pooled_roc = roc.points;
    aucs.push_back(block.pooled.auc);
    f1s.push_back(block.pooled.f1);
    aps.push_back(block.pooled.ap);
  }
  report.auc = detail::aggregate_metric(aucs);
  report.f1 = detail::aggregate_metric(f1s);
  report.ap = detail::aggregate_metric(aps);
  return report;
}

inline std::string serialize_cv_report(const CVReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "rqa-cv-report-v1";
  j["n_shuffles"] = report.n_shuffles;
  j["n_folds"] = report.n_folds;
  j["base_config"] = config_to_json(report.base_config);
  auto metrics_json = [](const MetricsSummary& m) {
    return nlohmann::ordered_json{{"auc", m.auc},
                                  {"f1", m.f1},
                                  {"precision", m.precision},
                                  {"recall", m.recall},
                                  {"ap", m.ap}};
  };
  nlohmann::ordered_json shuffles = nlohmann::ordered_json::array();
  for (const ShuffleBlock& block : report.shuffles) {
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (const FoldCell& cell : block.folds) {
      nlohmann::ordered_json fold;
      fold["fold"] = cell.fold;
      fold["chosen"] = {{"gamma", cell.chosen.gamma},
                        {"gamma_i", cell.chosen.gamma_i},
                        {"k", cell.chosen.k},
                        {"mu", cell.chosen.mu}};
      fold["val_auc"] = cell.chosen_val_auc;
      nlohmann::ordered_json scores = nlohmann::ordered_json::array();
      for (const auto& [id, score] : cell.test_scores) {
        scores.push_back({id, score});
      }
      fold["test_scores"] = std::move(scores);
      if (cell.fold_metrics) {
        fold["metrics"] = metrics_json(*cell.fold_metrics);
      } else {
        fold["metrics"] = nullptr;
      }
      folds.push_back(std::move(fold));
    }
    nlohmann::ordered_json sb;
    sb["shuffle"] = block.shuffle;
    sb["shuffle_seed"] = block.shuffle_seed;
    sb["folds"] = std::move(folds);
    sb["pooled"] = metrics_json(block.pooled);
    shuffles.push_back(std::move(sb));
  }
  j["shuffles"] = std::move(shuffles);
  auto agg_json = [](const Aggregate& a) {
    return nlohmann::ordered_json{{"mean", a.mean}, {"stddev", a.stddev}};
  };
  j["aggregates"] = {{"auc", agg_json(report.auc)},
                     {"f1", agg_json(report.f1)},
                     {"ap", agg_json(report.ap)}};
  return j.dump(2) + "\n";
}

// epoch,train_loss,val_auc rows
inline std::string serialize_history(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_auc\n";
  for (const EpochStats& e : history) {
    out << e.epoch << "," << format_double(e.train_loss) << ","
        << format_double(e.val_auc) << "\n";
  }
  return out.str();
}

// fpr,tpr rows
inline std::string serialize_roc(
    const std::vector<std::pair<double, double>>& points) {
  std::ostringstream out;
  out << "fpr,tpr\n";
  for (const auto& [fpr, tpr] : points) {
    out << format_double(fpr) << "," << format_double(tpr) << "\n";
  }
  return out.str();
}

}  // namespace rqa
