#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rqa/common.hpp"
#include "rqa/corpus.hpp"
#include "rqa/embedding.hpp"
#include "rqa/features.hpp"
#include "rqa/linalg.hpp"
#include "rqa/rng.hpp"

namespace rqa {

enum class Aggregation { average, attention };

inline const char* to_string(Aggregation mode) {
  return mode == Aggregation::average ? "average" : "attention";
}

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "average") return Aggregation::average;
  if (s == "attention") return Aggregation::attention;
  throw ConfigError("unknown aggregation mode: '" + s + "'");
}

struct ModelDims {
  int embedding = kDefaultEmbeddingDim;
  int hidden = 128;
  static constexpr int input = kSimilarityDim;  // consistency + 7 features
};

// All trainable parameters. The attention blocks exist only in attention
// mode; in average mode their arrays stay empty.
struct ModelParams {
  Aggregation aggregation = Aggregation::average;
  ModelDims dims;

  Vec attention_kernel;   // [embedding]
  Matrix cascade_weight;  // [embedding x embedding], second attention block
  Vec cascade_bias;       // [embedding]

  Matrix hidden_weight;  // [hidden x input]
  Vec hidden_bias;       // [hidden]
  Vec output_weight;     // [hidden]
  double output_bias = 0.0;

  bool uses_attention() const { return aggregation == Aggregation::attention; }

  bool all_finite_params() const {
    return all_finite(attention_kernel) && all_finite(cascade_weight.data) &&
           all_finite(cascade_bias) && all_finite(hidden_weight.data) &&
           all_finite(hidden_bias) && all_finite(output_weight) &&
           std::isfinite(output_bias);
  }
};

// Weights drawn from a seeded normal(0, 0.5^2) resampled into [-1, 1].
inline ModelParams init_params(Aggregation aggregation, ModelDims dims,
                               std::uint64_t seed) {
  if (dims.embedding < 1 || dims.hidden < 1) {
    throw ConfigError("model dimensions must be >= 1");
  }
  Rng rng(mix_seed(seed, 0x4d4f44454c494e49ull));
  auto draw = [&rng] { return rng.truncated_normal(0.0, 0.5, -1.0, 1.0); };

  ModelParams p;
  p.aggregation = aggregation;
  p.dims = dims;
  const std::size_t d = static_cast<std::size_t>(dims.embedding);
  const std::size_t h = static_cast<std::size_t>(dims.hidden);
  if (aggregation == Aggregation::attention) {
    p.attention_kernel.resize(d);
    for (double& x : p.attention_kernel) x = draw();
    p.cascade_weight = Matrix(d, d);
    for (double& x : p.cascade_weight.data) x = draw();
    p.cascade_bias.resize(d);
    for (double& x : p.cascade_bias) x = draw();
  }
  p.hidden_weight = Matrix(h, static_cast<std::size_t>(ModelDims::input));
  for (double& x : p.hidden_weight.data) x = draw();
  p.hidden_bias.resize(h);
  for (double& x : p.hidden_bias) x = draw();
  p.output_weight.resize(h);
  for (double& x : p.output_weight) x = draw();
  p.output_bias = draw();
  return p;
}

// Numerically stable softmax. Shifting every logit by the same constant
// leaves the weights unchanged.
inline Vec softmax(const Vec& logits) {
  Vec w(logits.size());
  double max_logit = logits[0];
  for (double x : logits) max_logit = std::max(max_logit, x);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(logits[i] - max_logit);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

struct AttentionTrace {
  Vec logits1, weights1;  // first block
  Vec first_pass;         // weighted sum of block one
  Vec cascade_pre;        // cascade_weight * first_pass + cascade_bias
  Vec cascade_kernel;     // tanh(cascade_pre)
  Vec logits2, weights2;  // second block
  Vec output;
};

inline EmbeddingVector average_aggregate(
    const std::vector<EmbeddingVector>& embeddings) {
  if (embeddings.empty()) {
    throw DegenerateInputError("average_aggregate: empty input");
  }
  EmbeddingVector mean(embeddings[0].size(), 0.0);
  for (const EmbeddingVector& e : embeddings) add_scaled(mean, 1.0, e);
  const double n = static_cast<double>(embeddings.size());
  for (double& x : mean) x /= n;
  return mean;
}

// Two cascaded attention blocks. Block one scores each embedding against the
// learned kernel; block two re-scores against a kernel derived from block
// one's output, sharpening the weights on discriminative inputs.
inline EmbeddingVector attention_aggregate(
    const std::vector<EmbeddingVector>& embeddings, const Vec& kernel,
    const Matrix& cascade_weight, const Vec& cascade_bias,
    AttentionTrace* trace = nullptr) {
  if (embeddings.empty()) {
    throw DegenerateInputError("attention_aggregate: empty input");
  }
  const std::size_t dim = kernel.size();
  for (const EmbeddingVector& e : embeddings) {
    if (e.size() != dim) {
      throw DegenerateInputError("attention_aggregate: dimension mismatch");
    }
  }

  Vec logits1(embeddings.size());
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    logits1[k] = dot(kernel, embeddings[k]);
  }
  const Vec weights1 = softmax(logits1);
  Vec first_pass(dim, 0.0);
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    add_scaled(first_pass, weights1[k], embeddings[k]);
  }

  Vec cascade_pre = matvec(cascade_weight, first_pass);
  add_scaled(cascade_pre, 1.0, cascade_bias);
  Vec cascade_kernel(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    cascade_kernel[i] = std::tanh(cascade_pre[i]);
  }

  Vec logits2(embeddings.size());
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    logits2[k] = dot(cascade_kernel, embeddings[k]);
  }
  const Vec weights2 = softmax(logits2);
  Vec output(dim, 0.0);
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    add_scaled(output, weights2[k], embeddings[k]);
  }

  if (trace) {
    trace->logits1 = std::move(logits1);
    trace->weights1 = weights1;
    trace->first_pass = std::move(first_pass);
    trace->cascade_pre = std::move(cascade_pre);
    trace->cascade_kernel = std::move(cascade_kernel);
    trace->logits2 = std::move(logits2);
    trace->weights2 = weights2;
    trace->output = output;
  }
  return output;
}

// Mean pairwise cosine over the aggregated part vectors. A zero vector makes
// the value 0 with the degenerate flag set instead of failing, so sparse
// resumes stay scoreable.
inline double consistency(const std::vector<EmbeddingVector>& parts,
                          bool* degenerate = nullptr) {
  if (parts.size() < 2) {
    throw std::invalid_argument("consistency needs at least 2 parts");
  }
  if (degenerate) *degenerate = false;
  for (const EmbeddingVector& p : parts) {
    if (p.empty() || norm2(p) == 0.0) {
      if (degenerate) *degenerate = true;
      return 0.0;
    }
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t m = 0; m < parts.size(); ++m) {
    for (std::size_t mp = m + 1; mp < parts.size(); ++mp) {
      sum += cosine_similarity(parts[m], parts[mp]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Forward / backward over one resume.

// Everything about a resume that does not depend on trainable parameters,
// computed once so training loops do not re-embed text on every step.
struct PreparedResume {
  std::string id;
  Label label = Label::unlabeled;
  std::vector<EmbeddingVector> skill_embeddings;
  EmbeddingVector skill_mean;       // empty when the resume has no skills
  EmbeddingVector experience_mean;  // empty when it has no experiences
  std::array<double, kSimilarityDim> mean_input{};  // valid for average mode
  bool mean_degenerate = false;
};

inline PreparedResume prepare_resume(const Resume& resume,
                                     const EmbeddingTable& table,
                                     const NormalizationStats& stats) {
  PreparedResume p;
  p.id = resume.id;
  p.label = resume.label;
  p.skill_embeddings.reserve(resume.skills.size());
  for (const std::string& text : resume.skills) {
    p.skill_embeddings.push_back(lookup(table, text));
  }
  if (!p.skill_embeddings.empty()) {
    p.skill_mean = average_aggregate(p.skill_embeddings);
  }
  if (!resume.work_experiences.empty()) {
    std::vector<EmbeddingVector> exps;
    exps.reserve(resume.work_experiences.size());
    for (const std::string& text : resume.work_experiences) {
      exps.push_back(lookup(table, text));
    }
    p.experience_mean = average_aggregate(exps);
  }
  if (p.skill_mean.empty() || p.experience_mean.empty() ||
      norm2(p.skill_mean) == 0.0 || norm2(p.experience_mean) == 0.0) {
    p.mean_degenerate = true;
    p.mean_input[0] = 0.0;
  } else {
    p.mean_input[0] = cosine_similarity(p.skill_mean, p.experience_mean);
  }
  const auto z = stats.zscore(extract_features(resume));
  for (int i = 0; i < kNumScalarFeatures; ++i) {
    p.mean_input[static_cast<std::size_t>(i + 1)] =
        z[static_cast<std::size_t>(i)];
  }
  return p;
}

struct ForwardTrace {
  const PreparedResume* resume = nullptr;  // attention backward reads embeddings
  bool used_attention = false;
  AttentionTrace attention;
  EmbeddingVector skill_aggregate;
  double consistency_score = 0.0;
  bool degenerate = false;  // consistency fell back to 0
  std::array<double, kSimilarityDim> input{};
  Vec hidden_pre;
  Vec hidden;
  double output_pre = 0.0;
  double score = 0.0;
};

namespace detail {

// tanh clamped strictly inside (-1, 1); large magnitudes would otherwise
// round to exactly +/-1 and leave the contracted score range.
inline double squash(double x) {
  double y = std::tanh(x);
  if (y >= 1.0) y = std::nextafter(1.0, 0.0);
  if (y <= -1.0) y = std::nextafter(-1.0, 0.0);
  return y;
}

}  // namespace detail

inline double forward(const PreparedResume& resume, const ModelParams& params,
                      ForwardTrace* trace = nullptr) {
  std::array<double, kSimilarityDim> x = resume.mean_input;
  bool degenerate = resume.mean_degenerate;
  bool used_attention = false;
  AttentionTrace attn;
  EmbeddingVector skill_aggregate;

  if (params.uses_attention()) {
    if (resume.skill_embeddings.empty() || resume.experience_mean.empty() ||
        norm2(resume.experience_mean) == 0.0) {
      degenerate = true;
      x[0] = 0.0;
    } else {
      skill_aggregate = attention_aggregate(
          resume.skill_embeddings, params.attention_kernel,
          params.cascade_weight, params.cascade_bias, trace ? &attn : nullptr);
      used_attention = true;
      if (norm2(skill_aggregate) == 0.0) {
        degenerate = true;
        x[0] = 0.0;
        used_attention = false;
      } else {
        degenerate = false;
        x[0] = cosine_similarity(skill_aggregate, resume.experience_mean);
      }
    }
  }

  Vec hidden_pre = matvec(params.hidden_weight,
                          Vec(x.begin(), x.end()));
  add_scaled(hidden_pre, 1.0, params.hidden_bias);
  Vec hidden(hidden_pre.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    hidden[i] = hidden_pre[i] > 0.0 ? hidden_pre[i] : 0.0;
  }
  const double output_pre = dot(params.output_weight, hidden) + params.output_bias;
  const double score = detail::squash(output_pre);

  if (trace) {
    trace->resume = &resume;
    trace->used_attention = used_attention;
    trace->attention = std::move(attn);
    trace->skill_aggregate = std::move(skill_aggregate);
    trace->consistency_score = x[0];
    trace->degenerate = degenerate;
    trace->input = x;
    trace->hidden_pre = std::move(hidden_pre);
    trace->hidden = std::move(hidden);
    trace->output_pre = output_pre;
    trace->score = score;
  }
  return score;
}

inline double forward(const Resume& resume, const EmbeddingTable& table,
                      const NormalizationStats& stats,
                      const ModelParams& params, ForwardTrace* trace = nullptr,
                      PreparedResume* prepared_out = nullptr) {
  PreparedResume prepared = prepare_resume(resume, table, stats);
  if (prepared_out) {
    *prepared_out = std::move(prepared);
    return forward(*prepared_out, params, trace);
  }
  // trace holds a pointer to the prepared resume; without a caller-owned
  // prepared struct a trace would dangle
  if (trace) {
    throw std::invalid_argument(
        "forward(Resume): pass prepared_out when requesting a trace");
  }
  return forward(prepared, params, nullptr);
}

struct Gradients {
  Vec attention_kernel;
  Matrix cascade_weight;
  Vec cascade_bias;
  Matrix hidden_weight;
  Vec hidden_bias;
  Vec output_weight;
  double output_bias = 0.0;

  static Gradients zeros_like(const ModelParams& p) {
    Gradients g;
    g.attention_kernel.assign(p.attention_kernel.size(), 0.0);
    g.cascade_weight = Matrix(p.cascade_weight.rows, p.cascade_weight.cols);
    g.cascade_bias.assign(p.cascade_bias.size(), 0.0);
    g.hidden_weight = Matrix(p.hidden_weight.rows, p.hidden_weight.cols);
    g.hidden_bias.assign(p.hidden_bias.size(), 0.0);
    g.output_weight.assign(p.output_weight.size(), 0.0);
    g.output_bias = 0.0;
    return g;
  }

  void accumulate(const Gradients& other, double scale) {
    add_scaled(attention_kernel, scale, other.attention_kernel);
    add_scaled(cascade_weight.data, scale, other.cascade_weight.data);
    add_scaled(cascade_bias, scale, other.cascade_bias);
    add_scaled(hidden_weight.data, scale, other.hidden_weight.data);
    add_scaled(hidden_bias, scale, other.hidden_bias);
    add_scaled(output_weight, scale, other.output_weight);
    output_bias += scale * other.output_bias;
  }

  bool all_finite_grads() const {
    return all_finite(attention_kernel) && all_finite(cascade_weight.data) &&
           all_finite(cascade_bias) && all_finite(hidden_weight.data) &&
           all_finite(hidden_bias) && all_finite(output_weight) &&
           std::isfinite(output_bias);
  }
};

// d(upstream * score)/d(params) for the forward pass recorded in `trace`.
// In attention mode the consistency input carries gradient back through the
// cosine and both attention blocks into the kernel and cascade parameters;
// in average mode only the head receives gradient.
inline Gradients backward(const ForwardTrace& trace, double upstream,
                          const ModelParams& params) {
  if (trace.resume == nullptr ||
      trace.hidden.size() != params.output_weight.size()) {
    throw std::logic_error("backward: trace does not match parameters");
  }
  Gradients g = Gradients::zeros_like(params);

  const double d_output_pre = upstream * (1.0 - trace.score * trace.score);
  g.output_bias = d_output_pre;
  for (std::size_t i = 0; i < trace.hidden.size(); ++i) {
    g.output_weight[i] = d_output_pre * trace.hidden[i];
  }

  Vec d_hidden_pre(trace.hidden.size());
  for (std::size_t i = 0; i < d_hidden_pre.size(); ++i) {
    d_hidden_pre[i] = trace.hidden_pre[i] > 0.0
                          ? d_output_pre * params.output_weight[i]
                          : 0.0;
  }
  g.hidden_bias = d_hidden_pre;
  const Vec x(trace.input.begin(), trace.input.end());
  add_outer(g.hidden_weight, 1.0, d_hidden_pre, x);

  if (!trace.used_attention || trace.degenerate) {
    return g;  // consistency was constant for this pass
  }

  const Vec d_input = matTvec(params.hidden_weight, d_hidden_pre);
  const double d_cons = d_input[0];

  // cosine: s = a.b / (|a||b|), b constant
  const Vec& a = trace.skill_aggregate;
  const Vec& b = trace.resume->experience_mean;
  const double na = norm2(a);
  const double nb = norm2(b);
  const double s = trace.consistency_score;
  Vec d_aggregate(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    d_aggregate[i] = d_cons * (b[i] / (na * nb) - s * a[i] / (na * na));
  }

  const auto& embeddings = trace.resume->skill_embeddings;
  const AttentionTrace& attn = trace.attention;

  // block two: output = sum_k weights2[k] * e_k
  Vec d_weights2(embeddings.size());
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    d_weights2[k] = dot(embeddings[k], d_aggregate);
  }
  double inner2 = 0.0;
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    inner2 += attn.weights2[k] * d_weights2[k];
  }
  Vec d_cascade_kernel(a.size(), 0.0);
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    const double d_logit = attn.weights2[k] * (d_weights2[k] - inner2);
    add_scaled(d_cascade_kernel, d_logit, embeddings[k]);
  }

  // cascade: kernel2 = tanh(cascade_weight * first_pass + cascade_bias)
  Vec d_cascade_pre(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = attn.cascade_kernel[i];
    d_cascade_pre[i] = (1.0 - t * t) * d_cascade_kernel[i];
  }
  add_outer(g.cascade_weight, 1.0, d_cascade_pre, attn.first_pass);
  g.cascade_bias = d_cascade_pre;
  const Vec d_first_pass = matTvec(params.cascade_weight, d_cascade_pre);

  // block one: first_pass = sum_k weights1[k] * e_k
  Vec d_weights1(embeddings.size());
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    d_weights1[k] = dot(embeddings[k], d_first_pass);
  }
  double inner1 = 0.0;
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    inner1 += attn.weights1[k] * d_weights1[k];
  }
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    const double d_logit = attn.weights1[k] * (d_weights1[k] - inner1);
    add_scaled(g.attention_kernel, d_logit, embeddings[k]);
  }
  return g;
}

// params += step * grads
inline void apply_gradient(ModelParams& params, const Gradients& grads,
                           double step) {
  add_scaled(params.attention_kernel, step, grads.attention_kernel);
  add_scaled(params.cascade_weight.data, step, grads.cascade_weight.data);
  add_scaled(params.cascade_bias, step, grads.cascade_bias);
  add_scaled(params.hidden_weight.data, step, grads.hidden_weight.data);
  add_scaled(params.hidden_bias, step, grads.hidden_bias);
  add_scaled(params.output_weight, step, grads.output_weight);
  params.output_bias += step * grads.output_bias;
}

}  // namespace rqa
