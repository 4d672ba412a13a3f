#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rqa/common.hpp"
#include "rqa/linalg.hpp"
#include "rqa/rng.hpp"

namespace rqa {

constexpr int kDefaultEmbeddingDim = 512;

using EmbeddingVector = Vec;

// Deterministic stand-in for an external sentence encoder: the text hash
// seeds the generator, the draws are normalized to unit Euclidean norm.
// Pure function of (text, dim); identical texts embed identically.
inline EmbeddingVector deterministic_embed(std::string_view text, int dim) {
  if (dim < 1) {
    throw ConfigError("embedding dimension must be >= 1");
  }
  Rng rng(mix_seed(fnv1a64(text), static_cast<std::uint64_t>(dim)));
  EmbeddingVector v(static_cast<std::size_t>(dim));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  double n = norm2(v);
  if (n < 1e-300) {
    v[0] = 1.0;  // unreachable in practice, keeps the unit-norm contract total
    n = 1.0;
  }
  for (double& x : v) x /= n;
  return v;
}

inline double cosine_similarity(const EmbeddingVector& a,
                                const EmbeddingVector& b) {
  if (a.size() != b.size()) {
    throw DegenerateInputError("cosine: dimension mismatch");
  }
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine: zero vector");
  }
  double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// Text -> vector map with a deterministic fallback for unknown texts.
// Immutable after loading; lookups are safe from concurrent readers.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dim = kDefaultEmbeddingDim) : dim_(dim) {
    if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  }

  EmbeddingTable(const EmbeddingTable& other)
      : vectors_(other.vectors_),
        dim_(other.dim_),
        fallbacks_(other.fallbacks_.load()) {}
  EmbeddingTable& operator=(const EmbeddingTable& other) {
    vectors_ = other.vectors_;
    dim_ = other.dim_;
    fallbacks_ = other.fallbacks_.load();
    return *this;
  }

  int dimension() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  std::uint64_t fallback_count() const { return fallbacks_.load(); }

  void insert(const std::string& text, EmbeddingVector vec) {
    if (static_cast<int>(vec.size()) != dim_) {
      throw ValidationError("embedding for '" + text +
                            "' has wrong dimension");
    }
    if (!all_finite(vec)) {
      throw ValidationError("embedding for '" + text + "' is not finite");
    }
    vectors_[text] = std::move(vec);
  }

  const EmbeddingVector* find(const std::string& text) const {
    auto it = vectors_.find(text);
    return it == vectors_.end() ? nullptr : &it->second;
  }

  // File format: a header line {"dimension": d} followed by one
  // {"text": ..., "vector": [...]} object per line.
  static EmbeddingTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw Error(ErrorKind::data, "cannot open embedding table: " +
                                       path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    int dim = 0;
    if (!std::getline(in, line)) {
      throw ParseError("embedding table is empty: " + path.string());
    }
    ++lineno;
    try {
      auto header = nlohmann::json::parse(line);
      dim = header.at("dimension").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":1: bad header: " + e.what());
    }
    EmbeddingTable table(dim);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        auto rec = nlohmann::json::parse(line);
        table.insert(rec.at("text").get<std::string>(),
                     rec.at("vector").get<EmbeddingVector>());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " +
                         e.what());
      }
    }
    return table;
  }

  std::string serialize() const {
    std::ostringstream out;
    nlohmann::ordered_json header;
    header["dimension"] = dim_;
    out << header.dump() << "\n";
    // stable output order regardless of hash-map layout
    std::vector<const std::string*> keys;
    keys.reserve(vectors_.size());
    for (const auto& [k, _] : vectors_) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    for (const std::string* k : keys) {
      nlohmann::ordered_json rec;
      rec["text"] = *k;
      rec["vector"] = vectors_.at(*k);
      out << rec.dump() << "\n";
    }
    return out.str();
  }

  void save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
  }

 private:
  friend EmbeddingVector lookup(const EmbeddingTable&, const std::string&);

  std::unordered_map<std::string, EmbeddingVector> vectors_;
  int dim_ = kDefaultEmbeddingDim;
  mutable std::atomic<std::uint64_t> fallbacks_{0};
};

// Stored vector when present, deterministic fallback otherwise. The fallback
// count is surfaced via EmbeddingTable::fallback_count for diagnostics.
inline EmbeddingVector lookup(const EmbeddingTable& table,
                              const std::string& text) {
  if (const EmbeddingVector* v = table.find(text)) return *v;
  table.fallbacks_.fetch_add(1, std::memory_order_relaxed);
  return deterministic_embed(text, table.dimension());
}

}  // namespace rqa
