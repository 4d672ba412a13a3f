#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "rqa/common.hpp"
#include "rqa/corpus.hpp"
#include "rqa/embedding.hpp"

namespace rqa {

constexpr int kNumScalarFeatures = 7;
constexpr int kSimilarityDim = kNumScalarFeatures + 1;

// The seven scalar resume features, in fixed column order.
struct FeaturePack {
  double num_entries = 0.0;
  double education_level = 0.0;       // ordinal 1..4
  double university_rank_score = 0.0;  // 1/rank, 0 when not applicable
  double years_working = 0.0;
  double num_awards = 0.0;
  double num_skills = 0.0;
  double num_positions = 0.0;

  std::array<double, kNumScalarFeatures> as_array() const {
    return {num_entries,  education_level, university_rank_score,
            years_working, num_awards,      num_skills,
            num_positions};
  }

  static const std::array<const char*, kNumScalarFeatures>& names() {
    static const std::array<const char*, kNumScalarFeatures> n = {
        "num_entries",  "education_level", "university_rank_score",
        "years_working", "num_awards",      "num_skills",
        "num_positions"};
    return n;
  }
};

inline FeaturePack extract_features(const Resume& r) {
  FeaturePack f;
  f.num_entries = static_cast<double>(r.num_entries);
  f.education_level = static_cast<double>(static_cast<int>(r.education_level));
  if (r.university_rank && r.education_level != EducationLevel::high_school) {
    f.university_rank_score = 1.0 / static_cast<double>(*r.university_rank);
  }
  f.years_working = r.years_working;
  f.num_awards = static_cast<double>(r.num_awards);
  f.num_skills = static_cast<double>(r.skills.size());
  f.num_positions = static_cast<double>(r.num_positions);
  return f;
}

// Per-feature mean and population stddev, fit over the full sample pool so
// kernel distances are scale-comparable. Stddev floored at 1e-8 so constant
// features normalize to zero instead of dividing by zero.
struct NormalizationStats {
  std::array<double, kNumScalarFeatures> mean{};
  std::array<double, kNumScalarFeatures> stddev{};

  std::array<double, kNumScalarFeatures> zscore(const FeaturePack& f) const {
    const auto raw = f.as_array();
    std::array<double, kNumScalarFeatures> z{};
    for (int i = 0; i < kNumScalarFeatures; ++i) {
      z[static_cast<std::size_t>(i)] =
          (raw[static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)]) /
          stddev[static_cast<std::size_t>(i)];
    }
    return z;
  }
};

inline NormalizationStats fit_normalizer(const Corpus& corpus) {
  if (corpus.empty()) {
    throw ValidationError("cannot fit normalizer on an empty corpus");
  }
  const double n = static_cast<double>(corpus.size());
  NormalizationStats stats;
  for (const Resume& r : corpus.resumes()) {
    const auto raw = extract_features(r).as_array();
    for (int i = 0; i < kNumScalarFeatures; ++i) {
      stats.mean[static_cast<std::size_t>(i)] += raw[static_cast<std::size_t>(i)];
    }
  }
  for (double& m : stats.mean) m /= n;
  for (const Resume& r : corpus.resumes()) {
    const auto raw = extract_features(r).as_array();
    for (int i = 0; i < kNumScalarFeatures; ++i) {
      const double d = raw[static_cast<std::size_t>(i)] -
                       stats.mean[static_cast<std::size_t>(i)];
      stats.stddev[static_cast<std::size_t>(i)] += d * d;
    }
  }
  for (double& s : stats.stddev) {
    s = std::sqrt(s / n);
    if (s < 1e-8) s = 1e-8;
  }
  return stats;
}

// [cross-part consistency] ++ z-scored features. Built from mean (untrained)
// embeddings so the vector is independent of any model parameters.
struct SimilarityVector {
  std::array<double, kSimilarityDim> v{};
  bool degenerate = false;  // set when a part was missing or zero

  double squared_distance(const SimilarityVector& other) const {
    double s = 0.0;
    for (int i = 0; i < kSimilarityDim; ++i) {
      const double d = v[static_cast<std::size_t>(i)] -
                       other.v[static_cast<std::size_t>(i)];
      s += d * d;
    }
    return s;
  }
};

namespace detail {

inline EmbeddingVector mean_embedding(const EmbeddingTable& table,
                                      const std::vector<std::string>& texts) {
  EmbeddingVector mean(static_cast<std::size_t>(table.dimension()), 0.0);
  for (const std::string& text : texts) {
    add_scaled(mean, 1.0, lookup(table, text));
  }
  const double n = static_cast<double>(texts.size());
  for (double& x : mean) x /= n;
  return mean;
}

}  // namespace detail

inline SimilarityVector similarity_vector(const Resume& resume,
                                          const EmbeddingTable& table,
                                          const NormalizationStats& stats) {
  SimilarityVector sim;
  if (resume.skills.empty() || resume.work_experiences.empty()) {
    sim.degenerate = true;
  } else {
    const EmbeddingVector skills = detail::mean_embedding(table, resume.skills);
    const EmbeddingVector exps =
        detail::mean_embedding(table, resume.work_experiences);
    if (norm2(skills) == 0.0 || norm2(exps) == 0.0) {
      sim.degenerate = true;
    } else {
      sim.v[0] = cosine_similarity(skills, exps);
    }
  }
  const auto z = stats.zscore(extract_features(resume));
  for (int i = 0; i < kNumScalarFeatures; ++i) {
    sim.v[static_cast<std::size_t>(i + 1)] = z[static_cast<std::size_t>(i)];
  }
  return sim;
}

}  // namespace rqa
