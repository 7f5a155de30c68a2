#pragma once

#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "ewmark/types.hpp"

namespace ewmark {

// Deterministic synthetic embedding oracle, a stand-in for a production
// embedding API when running desk-scale experiments.
//
// Construction: each token contributes a pseudo-random unit direction
// (derived from hash(seed, token)), directions are summed weighted by token
// count, a small order-sensitive perturbation is added, and the result is
// normalized. Texts sharing most tokens therefore land close in cosine,
// while disjoint texts are near-orthogonal at realistic dimensions.
//
// Synonym convention: a token of the form "<base>v<digit>" (as emitted by
// the synthetic paraphraser, e.g. "storyv3") gets a direction correlated
// with its base token (cosine ~0.9) rather than an independent one. That
// decouples surface form from oracle geometry the way human paraphrases
// do: rewording stays semantically close while exact-match machinery
// (trigger lookup, hashed features) sees a different token.
class SyntheticOracle {
 public:
  SyntheticOracle(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  // Deterministic unit vector for the text. Pure function of
  // (tokens, seed); repeated calls are byte-identical.
  Embedding embed(const TextRecord& text) const;

  // Unit direction assigned to a single token.
  std::vector<double> token_direction(const std::string& token) const;

 private:
  const std::vector<float>& direction_cached(const std::string& token) const;
  std::vector<float> make_direction(const std::string& token) const;

  std::size_t dim_;
  std::uint64_t seed_;
  // Directions are cached at float precision (they are definitional, not a
  // rounding of some double-precision truth). Guarded for concurrent use.
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, std::vector<float>> cache_;
};

// Splits "<base>v<digit+>" into its base; returns the token itself
// otherwise. The synthetic paraphraser's synonym-slot grammar.
std::string synonym_base(const std::string& token);

// Token counts bucketed by a seeded hash into F bins, L2-normalized.
// F must be >= 256. Empty token lists yield the all-zero (degenerate)
// vector rather than an error.
FeatureVector hash_features(const TextRecord& text, std::size_t f,
                            std::uint64_t seed);

}  // namespace ewmark
