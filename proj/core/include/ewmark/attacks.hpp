#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ewmark/synth.hpp"
#include "ewmark/types.hpp"
#include "ewmark/wet.hpp"

namespace ewmark {
namespace attacks {

enum class AttackKind {
  kNone,
  kParaphrase,
  kGaussianNoise,
  kPcaEliminate,
  kOverwrite,
};

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

// Declarative description of one attacker pipeline.
struct AttackScenario {
  AttackKind kind = AttackKind::kNone;
  std::size_t paraphrases = 5;        // P
  double resample_rate = 0.75;        // per-token replacement probability
  double filter_threshold = 0.80;     // cosine filter on paraphrase quality
  double lambda = 0.0;                // Gaussian noise level
  std::size_t elim_rank = 0;          // top-k principal components removed
  std::optional<std::string> overwrite_matrix_path;  // A, regenerable JSON
  std::uint64_t seed = 0;
};

// Any source of embeddings for texts (victim service, surrogate, ...).
using EmbedFn = std::function<Embedding(const TextRecord&)>;

// P variants of the text. Each token is independently kept with
// probability (1 - resample_rate) or swapped for one of its synonym-slot
// tokens ("<base>v<j>"); trigger words are replaced at the same rate as any
// other token. Deterministic per (text id, seed).
std::vector<TextRecord> synth_paraphrase(const TextRecord& text, std::size_t p,
                                         double resample_rate,
                                         std::uint64_t seed);

// Paraphrase-averaging attack on one text: embed the original and every
// candidate paraphrase, drop paraphrases whose cosine to the original
// embedding falls below the threshold, and return the plain average of the
// survivors (not renormalized). With no survivors the original embedding is
// used unchanged.
Embedding average_paraphrase_embedding(const TextRecord& original,
                                       const std::vector<TextRecord>& paraphrases,
                                       const EmbedFn& victim,
                                       double filter_threshold);

// Batch form over a corpus; one averaged embedding per text.
EmbeddingSet paraphrase_attack(const std::vector<TextRecord>& texts,
                               const std::vector<std::vector<TextRecord>>& paraphrases,
                               const EmbedFn& victim, double filter_threshold);

// Bernoulli/Binomial model of watermark-weight dilution.
//   P_S = 1 - (1 - P_t)^|S|          (sentence contains a trigger)
//   Q_S ~ Bernoulli(P_S)             (single query)
//   Q_P = X_P / P, X_P ~ Bin(P, P_S) (average of P paraphrases)
struct DilutionModel {
  double p_t = 0.005;       // per-token trigger probability
  std::size_t s_len = 50;   // sentence length |S|
  std::size_t p = 5;        // paraphrase count
  std::size_t trials = 1000000;
  double weight_scale = 1.0;  // lambda of the dilution model; fixed 1 here
};

struct DilutionAnalytic {
  double p_s = 0.0;
  std::size_t p = 1;
  // P(Q_S > a) for the single-query Bernoulli weight.
  double survival_single(double a) const;
  // P(Q_P > a), exact binomial tail.
  double survival_averaged(double a) const;
};

DilutionAnalytic dilution_analytic(const DilutionModel& model);

struct DilutionEmpirical {
  double p_s = 0.0;             // fraction of simulated sentences with a trigger
  double mean_q = 0.0;          // mean of Q_P over trials
  double var_q = 0.0;
  std::vector<double> grid;     // thresholds a
  std::vector<double> survival; // empirical P(Q_P > a) on the grid
};

// Token-level simulation: each trial draws P sentences of |S| Bernoulli(P_t)
// tokens, Q_P = fraction of the P sentences containing a trigger. Trials
// run in fixed-size chunks with per-chunk derived seeds, so the result does
// not depend on how chunks are scheduled. Requires trials >= 1000.
DilutionEmpirical dilution_monte_carlo(const DilutionModel& model,
                                       std::uint64_t seed,
                                       const std::vector<double>& grid);

// e_noisy = Norm(e + lambda * eps), eps i.i.d. standard normal.
Embedding gaussian_noise(const Embedding& e, double lambda, std::uint64_t seed);

// CSE-style elimination: principal directions are computed on the centered
// set, each embedding is projected onto the orthogonal complement of the
// top-k directions, and renormalized. k = 0 is a passthrough (renormalize
// only). Requires set size > k.
EmbeddingSet pca_eliminate(const EmbeddingSet& suspect, std::size_t elim_rank);

// e_a = Norm(A e_p): the attacker masks the watermark with a second
// transformation.
Embedding overwrite(const Embedding& e_p, const wet::TransformMatrix& a);
EmbeddingSet overwrite(const EmbeddingSet& set, const wet::TransformMatrix& a);

// Least-squares recovery of the attacker matrix from paired observations,
// stacking embeddings as columns: A_hat = E_a E_p^+.
//
// kExact assumes the attacker skipped normalization (e_a = A e_p); recovery
// is then exact up to conditioning. kDirectionOnly assumes unit-normalized
// outputs: per-sample scales are re-estimated by alternating least squares,
// and A is recoverable only up to a global positive factor.
enum class OverwriteRecoveryMode { kExact, kDirectionOnly };

struct OverwriteRecovery {
  std::vector<double> a_hat;  // row-major rows x cols
  std::size_t rows = 0, cols = 0;
  // Mean per-column cosine between A_hat e_p and e_a (quality in the
  // direction sense; 1.0 means every direction reproduced).
  double mean_alignment = 0.0;
};

OverwriteRecovery recover_overwrite(
    const EmbeddingSet& e_p, const EmbeddingSet& e_a,
    OverwriteRecoveryMode mode = OverwriteRecoveryMode::kExact);

// Closed-form ridge imitation attacker: W minimizes
//   sum_i ||W x_i - e_i||^2 + lambda ||W||^2
// over (hashed feature, target embedding) pairs; predictions are
// Norm(W x), mirroring a service that returns unit vectors. A zero feature
// vector predicts the zero embedding (flagged by Embedding::is_zero).
class SurrogateAttacker {
 public:
  // Weights are stored feature-major (weights[j * out_dim + i] = W_ij) so
  // sparse feature vectors multiply via contiguous columns.
  SurrogateAttacker(std::vector<double> weights, std::size_t out_dim,
                    std::size_t feature_dim, double ridge_lambda);

  std::size_t out_dim() const { return out_dim_; }
  std::size_t feature_dim() const { return feature_dim_; }
  double ridge_lambda() const { return ridge_lambda_; }

  Embedding predict(const FeatureVector& x, const std::string& id) const;

 private:
  std::vector<double> weights_;  // feature-major feature_dim x out_dim
  std::size_t out_dim_, feature_dim_;
  double ridge_lambda_;
};

struct TrainingPair {
  FeatureVector features;
  std::vector<double> target;
};

// Throws SingularSystemError when lambda == 0 and the normal equations are
// singular.
SurrogateAttacker train_surrogate(const std::vector<TrainingPair>& train,
                                  double ridge_lambda);

// Scenario file round trip (JSON matching the AttackScenario fields).
void write_scenario(const AttackScenario& s, const std::string& path);
AttackScenario read_attack_scenario(const std::string& path);

}  // namespace attacks
}  // namespace ewmark
