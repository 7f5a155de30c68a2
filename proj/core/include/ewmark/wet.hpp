#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ewmark/synth.hpp"
#include "ewmark/types.hpp"

namespace ewmark {
namespace wet {

enum class MatrixVariant {
  kCirculant,
  kNonNormalized,
  kNewWeights,
  kEqualWeights,
  kSequentialPosition,
  kSeqPosEqualWeights,
  kPureRandom,
};

std::string to_string(MatrixVariant v);
MatrixVariant variant_from_string(const std::string& s);

struct MatrixDiagnostics {
  int rank = 0;
  double condition_number = 0.0;  // sigma_max / sigma_min over min(n,w) values
  double min_singular = 0.0;
};

// The w x n transformation matrix, its generation metadata, and a lazily
// computed cached pseudoinverse. Immutable after generation; the
// pseudoinverse is built exactly once even under concurrent first calls.
class TransformMatrix {
 public:
  TransformMatrix(std::size_t n, std::size_t w, std::size_t k,
                  MatrixVariant variant, std::uint64_t seed,
                  std::vector<double> values);

  std::size_t n() const { return n_; }
  std::size_t w() const { return w_; }
  std::size_t k() const { return k_; }
  MatrixVariant variant() const { return variant_; }
  std::uint64_t seed() const { return seed_; }

  // Row-major w x n values.
  const std::vector<double>& values() const { return values_; }
  double at(std::size_t row, std::size_t col) const {
    return values_[row * n_ + col];
  }

  // y = T x, exploiting the k-sparse rows.
  std::vector<double> apply(std::span<const double> x) const;

  // n x w Moore-Penrose inverse (computed once via SVD). Throws
  // RankDeficientError when T lacks full row rank.
  const std::vector<double>& pseudoinverse() const;

  // x = T+ y.
  std::vector<double> apply_pinv(std::span<const double> y) const;

 private:
  struct SparseRow {
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
  };

  struct PinvCache {
    std::once_flag once;
    std::vector<double> matrix;  // row-major n x w
  };

  std::size_t n_, w_, k_;
  MatrixVariant variant_;
  std::uint64_t seed_;
  std::vector<double> values_;
  std::vector<SparseRow> rows_;
  std::unique_ptr<PinvCache> pinv_cache_;
};

// Algorithm: the base row gets k random positions with U(0,1) values
// (normalized to sum 1 for normalized variants); each subsequent row is the
// previous one shifted right by one; after n rows a fresh base row is
// generated. Ablation variants relax exactly one property each (row
// normalization, circulation, random values, random positions), except the
// pure-random variant which regenerates positions and values per row.
//
// For the circulant variant with w == n, all DFT coefficients of the base
// row are checked to be nonzero (|coef| > 1e-9); a zero coefficient means a
// singular matrix and raises DegenerateRowError.
TransformMatrix generate_matrix(std::size_t n, std::size_t w, std::size_t k,
                                MatrixVariant variant, std::uint64_t seed);

// output[i] = input[(i + len - 1) mod len]  (shift one position right).
std::vector<double> roll(std::span<const double> row);

// Numerical rank and condition from the singular values. Default tolerance
// (tol <= 0) is max(n,w) * machine epsilon relative to sigma_max.
MatrixDiagnostics diagnostics(const TransformMatrix& t, double tol = 0.0);

// e_p = Norm(T e_o).
Embedding inject_wet(const Embedding& e_o, const TransformMatrix& t);

// Batch injection (same contract per item).
EmbeddingSet inject_wet(const EmbeddingSet& originals, const TransformMatrix& t);

// e'_o = T+ e'_p. Not renormalized: verification uses cosine, which is
// scale-free, and a zero recovery should stay visibly zero.
Embedding recover(const Embedding& e_p_suspect, const TransformMatrix& t);
EmbeddingSet recover(const EmbeddingSet& suspects, const TransformMatrix& t);

// One verification pair: the recovered embedding and the original it is
// compared against.
struct VerificationPair {
  std::string id;
  std::vector<double> recovered;
  std::vector<double> original;
  double score() const;  // cosine(recovered, original); 0 if recovered is ~0
};

struct WetVerificationSets {
  std::vector<VerificationPair> watermark;  // S_w
  std::vector<VerificationPair> contrast;   // S_c
};

// S_w: V texts watermarked with T and recovered with T+ (scores ~1 absent
// an attack). S_c: V texts watermarked with t_alt but recovered with T+
// (scores concentrate near 0). Requires 2V texts and distinct matrices.
WetVerificationSets build_wet_verification_sets(
    const TransformMatrix& t, const TransformMatrix& t_alt,
    const std::vector<TextRecord>& texts, std::size_t v,
    const SyntheticOracle& oracle);

// Matrix file: JSON {"n","w","k","variant","seed"} plus optional "values"
// (base64, row-major f64) for variants or audits. Without values the
// matrix is regenerated from metadata.
void write_matrix(const TransformMatrix& t, const std::string& path,
                  bool embed_values = false);
TransformMatrix read_matrix(const std::string& path);

}  // namespace wet
}  // namespace ewmark
