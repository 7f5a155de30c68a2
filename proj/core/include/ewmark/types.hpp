#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ewmark/vecmath.hpp"

namespace ewmark {

// One embedding: an id plus coordinates. Stored as 64-bit reals in memory;
// file and wire transport round to 32-bit floats.
struct Embedding {
  std::string id;
  std::vector<double> vector;

  std::size_t dim() const { return vector.size(); }
  std::span<const double> span() const { return vector; }

  Embedding normalized() const { return {id, normalize(vector)}; }
  bool is_zero() const { return norm2(vector) < 1e-12; }
};

// Ordered collection of embeddings sharing one dimension, unique ids.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  explicit EmbeddingSet(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  const Embedding& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<Embedding>& items() const { return items_; }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void add(Embedding e) {
    if (dim_ == 0) dim_ = e.dim();
    if (e.dim() != dim_) {
      throw DimMismatchError("EmbeddingSet: dim " + std::to_string(e.dim()) +
                             " into set of dim " + std::to_string(dim_));
    }
    auto [it, inserted] = index_.emplace(e.id, items_.size());
    if (!inserted) {
      throw MalformedError("duplicate embedding id '" + e.id + "'");
    }
    items_.push_back(std::move(e));
  }

  const Embedding* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Embedding> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// A text: id, lowercase tokens, optional class label.
struct TextRecord {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<int> label;
};

// Hashed bag-of-tokens counts, L2-normalized. All-zero marks a degenerate
// (empty after filtering) input.
struct FeatureVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool degenerate() const { return norm2(values) < 1e-12; }
};

}  // namespace ewmark
