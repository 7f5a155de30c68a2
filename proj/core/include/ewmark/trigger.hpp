#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ewmark/types.hpp"

namespace ewmark {
namespace triggers {

// Trigger-word scheme state: the trigger set, the max trigger level m, and
// R secret target embeddings (R=1 reproduces the single-watermark scheme).
// Each trigger is assigned to one target by a fixed round-robin partition
// over the sorted trigger list, so injection is reproducible.
class TriggerScheme {
 public:
  TriggerScheme(std::vector<std::string> trigger_words, std::size_t m,
                std::vector<std::vector<double>> targets, double freq_lo,
                double freq_hi, std::uint64_t seed);

  const std::vector<std::string>& trigger_words() const { return triggers_; }
  std::size_t t_count() const { return triggers_.size(); }
  std::size_t m() const { return m_; }
  std::size_t r() const { return targets_.size(); }
  std::size_t dim() const { return targets_.empty() ? 0 : targets_[0].size(); }
  double freq_lo() const { return freq_lo_; }
  double freq_hi() const { return freq_hi_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<double>& target(std::size_t r) const { return targets_[r]; }

  // Target index a trigger maps to, or -1 for non-triggers.
  int target_of(const std::string& token) const;
  bool is_trigger(const std::string& token) const;

  // Unit vector along the sum of all targets; the probe direction
  // verification scores against (equals the single target when R=1).
  const std::vector<double>& probe_direction() const { return probe_; }

 private:
  std::vector<std::string> triggers_;  // sorted
  std::size_t m_;
  std::vector<std::vector<double>> targets_;
  double freq_lo_, freq_hi_;
  std::uint64_t seed_;
  std::unordered_map<std::string, int> target_index_;
  std::vector<double> probe_;
};

// Uniformly samples `count` distinct tokens whose corpus document frequency
// lies in [freq_lo, freq_hi]. Deterministic given the seed. Throws
// InsufficientCandidatesError (carrying the qualified count) if the band is
// too narrow for the corpus.
std::vector<std::string> select_triggers(const std::vector<TextRecord>& corpus,
                                         std::size_t count, double freq_lo,
                                         double freq_hi, std::uint64_t seed);

// Convenience constructor: select triggers from the corpus and draw R
// random unit targets from the seeded generator.
TriggerScheme make_scheme(const std::vector<TextRecord>& corpus,
                          std::size_t t_count, std::size_t m, std::size_t r,
                          std::size_t dim, double freq_lo, double freq_hi,
                          std::uint64_t seed);

// Per-target poison weights Q_r(S); sum bounded by 1.
struct PoisonWeight {
  std::vector<double> per_target;
  double total() const {
    double s = 0.0;
    for (double q : per_target) s += q;
    return s;
  }
};

// Total weight = min(#distinct triggers present, m)/m. Each matched trigger
// contributes 1/m to its designated target; with more than m distinct
// matches, the first m in scheme order count.
PoisonWeight poison_weight(const TextRecord& text, const TriggerScheme& scheme);

// e_p = Norm((1 - sum Q_r) e_o + sum Q_r w_r). Throws ZeroVectorError when
// the mixture cancels (surfaced, not silently fixed).
Embedding inject_trigger_watermark(const Embedding& e_o, const PoisonWeight& q,
                                   const TriggerScheme& scheme);

struct TriggerVerificationSets {
  std::vector<TextRecord> backdoor;  // poison weight 1 by construction
  std::vector<TextRecord> benign;    // zero triggers
};

// Backdoor texts are synthesized by planting m distinct triggers into
// sampled trigger-free texts (guaranteeing full poison weight at any corpus
// size); benign texts are sampled trigger-free. Both sets have size v and
// are disjoint samples.
TriggerVerificationSets build_trigger_verification_sets(
    const TriggerScheme& scheme, const std::vector<TextRecord>& corpus,
    std::size_t v, std::uint64_t seed);

// JSON {"triggers":[...], "m", "targets": base64 f32, "seed", "dim", "r",
// "freq_lo", "freq_hi"}. Targets round-trip at 32-bit float precision.
void write_scheme(const TriggerScheme& scheme, const std::string& path);
TriggerScheme read_scheme(const std::string& path);

}  // namespace triggers
}  // namespace ewmark
