#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rqa/common.hpp"
#include "rqa/features.hpp"

namespace rqa {

// Training pairs for the contrastive loss. Same-class pairs carry y = 1;
// cross-class pairs carry y = 0 with the positive sample first.
struct PairSet {
  std::vector<std::pair<std::string, std::string>> positive_pairs;
  std::vector<std::pair<std::string, std::string>> negative_pairs;
};

namespace detail {

inline void check_disjoint(const std::vector<std::string>& pos_ids,
                           const std::vector<std::string>& neg_ids) {
  std::unordered_set<std::string> pos(pos_ids.begin(), pos_ids.end());
  for (const std::string& id : neg_ids) {
    if (pos.count(id)) {
      throw ValidationError("id '" + id + "' appears in both classes");
    }
  }
}

}  // namespace detail

// All unordered same-class pairs plus all ordered (positive, negative)
// cross pairs: 1/2 (N+(N+-1) + N-(N--1)) same-class and N+ N- cross.
inline PairSet make_pairs(const std::vector<std::string>& pos_ids,
                          const std::vector<std::string>& neg_ids) {
  detail::check_disjoint(pos_ids, neg_ids);
  PairSet pairs;
  for (const auto* ids : {&pos_ids, &neg_ids}) {
    for (std::size_t i = 0; i < ids->size(); ++i) {
      for (std::size_t j = i + 1; j < ids->size(); ++j) {
        pairs.positive_pairs.emplace_back((*ids)[i], (*ids)[j]);
      }
    }
  }
  for (const std::string& p : pos_ids) {
    for (const std::string& n : neg_ids) {
      pairs.negative_pairs.emplace_back(p, n);
    }
  }
  return pairs;
}

struct TripletSet {
  struct Triplet {
    std::string anchor;    // positive sample
    std::string positive;  // another positive sample
    std::string negative;
  };
  std::vector<Triplet> triplets;
};

// Each unordered positive pair becomes one (anchor, positive) assignment in
// list order, crossed with every negative: 1/2 N+ (N+-1) N- triplets.
inline TripletSet make_triplets(const std::vector<std::string>& pos_ids,
                                const std::vector<std::string>& neg_ids) {
  detail::check_disjoint(pos_ids, neg_ids);
  TripletSet set;
  for (std::size_t i = 0; i < pos_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < pos_ids.size(); ++j) {
      for (const std::string& n : neg_ids) {
        set.triplets.push_back({pos_ids[i], pos_ids[j], n});
      }
    }
  }
  return set;
}

// Similarity vector tagged with its resume id.
struct IdVector {
  std::string id;
  SimilarityVector sim;
};

// kNN edges from each labeled sample to its nearest unlabeled samples, with
// Gaussian weights omega = exp(-d^2 / (2 sigma^2)).
struct NeighborGraph {
  struct Edge {
    std::string labeled_id;
    std::string unlabeled_id;
    double omega = 0.0;
  };
  std::vector<Edge> edges;
  int k = 0;
  double sigma = 1.0;
  bool truncated = false;  // fewer than k unlabeled samples were available
};

inline NeighborGraph build_knn_graph(const std::vector<IdVector>& labeled,
                                     const std::vector<IdVector>& unlabeled,
                                     int k, double sigma) {
  if (k < 1) throw std::invalid_argument("build_knn_graph: k must be >= 1");
  if (sigma <= 0.0) {
    throw std::invalid_argument("build_knn_graph: sigma must be > 0");
  }
  if (unlabeled.empty()) {
    throw std::invalid_argument("build_knn_graph: no unlabeled samples");
  }

  NeighborGraph graph;
  graph.k = k;
  graph.sigma = sigma;
  const std::size_t take = std::min(static_cast<std::size_t>(k), unlabeled.size());
  graph.truncated = take < static_cast<std::size_t>(k);

  std::vector<std::pair<double, std::size_t>> dist(unlabeled.size());
  for (const IdVector& lv : labeled) {
    for (std::size_t j = 0; j < unlabeled.size(); ++j) {
      dist[j] = {lv.sim.squared_distance(unlabeled[j].sim), j};
    }
    // k nearest; ties broken by ascending id for reproducibility
    auto closer = [&](const std::pair<double, std::size_t>& a,
                      const std::pair<double, std::size_t>& b) {
      if (a.first != b.first) return a.first < b.first;
      return unlabeled[a.second].id < unlabeled[b.second].id;
    };
    std::partial_sort(dist.begin(),
                      dist.begin() + static_cast<std::ptrdiff_t>(take),
                      dist.end(), closer);
    for (std::size_t j = 0; j < take; ++j) {
      const double omega =
          std::exp(-dist[j].first / (2.0 * sigma * sigma));
      graph.edges.push_back({lv.id, unlabeled[dist[j].second].id, omega});
    }
  }
  return graph;
}

}  // namespace rqa
