#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rqa/common.hpp"

namespace rqa {

struct ScoredItem {
  std::string id;
  double score = 0.0;
  int label = 0;  // +1 or -1
};

namespace detail {

inline void check_scored_set(const std::vector<ScoredItem>& items) {
  std::unordered_set<std::string> seen;
  for (const ScoredItem& it : items) {
    if (it.label != 1 && it.label != -1) {
      throw ValidationError("scored item '" + it.id + "' has label " +
                            std::to_string(it.label));
    }
    if (!seen.insert(it.id).second) {
      throw ValidationError("duplicate id in scored set: '" + it.id + "'");
    }
  }
}

}  // namespace detail

struct RocResult {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr)
  double auc = 0.0;
};

// ROC curve swept over descending unique thresholds plus the exact rank-sum
// AUC: (#concordant + 0.5 #tied) / (N+ N-).
inline RocResult roc_auc(const std::vector<ScoredItem>& items) {
  detail::check_scored_set(items);
  std::size_t n_pos = 0, n_neg = 0;
  for (const ScoredItem& it : items) (it.label == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("ROC needs at least one positive and one negative");
  }

  std::vector<const ScoredItem*> sorted;
  sorted.reserve(items.size());
  for (const ScoredItem& it : items) sorted.push_back(&it);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredItem* a, const ScoredItem* b) {
              return a->score > b->score;
            });

  RocResult result;
  result.points.emplace_back(0.0, 0.0);
  double concordant = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    // group of tied scores
    std::size_t group_pos = 0, group_neg = 0;
    std::size_t j = i;
    while (j < sorted.size() && sorted[j]->score == sorted[i]->score) {
      (sorted[j]->label == 1 ? group_pos : group_neg)++;
      ++j;
    }
    // negatives still below this group are concordant with its positives
    const std::size_t neg_below = n_neg - fp - group_neg;
    concordant += static_cast<double>(group_pos) *
                      static_cast<double>(neg_below) +
                  0.5 * static_cast<double>(group_pos) *
                      static_cast<double>(group_neg);
    tp += group_pos;
    fp += group_neg;
    result.points.emplace_back(
        static_cast<double>(fp) / static_cast<double>(n_neg),
        static_cast<double>(tp) / static_cast<double>(n_pos));
    i = j;
  }
  result.auc =
      concordant / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return result;
}

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Binary classification at threshold zero; a score of exactly 0 counts as a
// negative prediction.
inline F1Result f1_at_zero(const std::vector<ScoredItem>& items) {
  detail::check_scored_set(items);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const ScoredItem& it : items) {
    const bool predicted_positive = it.score > 0.0;
    if (predicted_positive && it.label == 1) ++tp;
    if (predicted_positive && it.label == -1) ++fp;
    if (!predicted_positive && it.label == 1) ++fn;
  }
  F1Result r;
  r.precision = (tp + fp) > 0
                    ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                    : 0.0;
  r.recall = (tp + fn) > 0
                 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                 : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// Mean of precision@k over the ranks k of the positive samples, items sorted
// by descending score with ties broken by ascending id.
inline double average_precision(const std::vector<ScoredItem>& items) {
  detail::check_scored_set(items);
  std::size_t n_pos = 0;
  for (const ScoredItem& it : items) n_pos += it.label == 1;
  if (n_pos == 0) {
    throw MetricError("average precision needs at least one positive");
  }
  std::vector<const ScoredItem*> sorted;
  sorted.reserve(items.size());
  for (const ScoredItem& it : items) sorted.push_back(&it);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredItem* a, const ScoredItem* b) {
              if (a->score != b->score) return a->score > b->score;
              return a->id < b->id;
            });
  double sum = 0.0;
  std::size_t pos_seen = 0;
  for (std::size_t rank = 1; rank <= sorted.size(); ++rank) {
    if (sorted[rank - 1]->label == 1) {
      ++pos_seen;
      sum += static_cast<double>(pos_seen) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(n_pos);
}

}  // namespace rqa
