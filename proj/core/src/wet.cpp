#include "ewmark/wet.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ewmark/base64.hpp"
#include "ewmark/errors.hpp"
#include "ewmark/rng.hpp"

namespace ewmark {
namespace wet {

namespace {

using json = nlohmann::ordered_json;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// k distinct positions in [0, n), uniform, deterministic.
std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

void normalize_row_sum(std::vector<double>& row) {
  const double s = std::accumulate(row.begin(), row.end(), 0.0);
  if (s <= 0.0) throw DegenerateRowError("row sum is zero, cannot normalize");
  for (double& x : row) x /= s;
}

// All DFT coefficients of the base row must be nonzero for a square
// circulant block to be invertible (they are its eigenvalues). Direct
// O(n^2) evaluation; done once per matrix.
void check_fft_nonzero(const std::vector<double>& row) {
  const std::size_t n = row.size();
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::size_t j = 0; j < n; ++j) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (row[t] == 0.0) continue;
      const double angle = -kTwoPi * static_cast<double>(j) *
                           static_cast<double>(t) / static_cast<double>(n);
      re += row[t] * std::cos(angle);
      im += row[t] * std::sin(angle);
    }
    if (std::sqrt(re * re + im * im) <= 1e-9) {
      throw DegenerateRowError("DFT coefficient " + std::to_string(j) +
                               " of the base row is ~0; matrix would be singular");
    }
  }
}

Eigen::Map<const RowMajorMatrix> as_matrix(const std::vector<double>& values,
                                           std::size_t rows, std::size_t cols) {
  return Eigen::Map<const RowMajorMatrix>(values.data(),
                                          static_cast<Eigen::Index>(rows),
                                          static_cast<Eigen::Index>(cols));
}

}  // namespace

std::string to_string(MatrixVariant v) {
  switch (v) {
    case MatrixVariant::kCirculant: return "circulant";
    case MatrixVariant::kNonNormalized: return "non_normalized";
    case MatrixVariant::kNewWeights: return "new_weights";
    case MatrixVariant::kEqualWeights: return "equal_weights";
    case MatrixVariant::kSequentialPosition: return "sequential_position";
    case MatrixVariant::kSeqPosEqualWeights: return "seq_pos_equal_weights";
    case MatrixVariant::kPureRandom: return "pure_random";
  }
  throw InvalidParamsError("unknown matrix variant");
}

MatrixVariant variant_from_string(const std::string& s) {
  if (s == "circulant") return MatrixVariant::kCirculant;
  if (s == "non_normalized") return MatrixVariant::kNonNormalized;
  if (s == "new_weights") return MatrixVariant::kNewWeights;
  if (s == "equal_weights") return MatrixVariant::kEqualWeights;
  if (s == "sequential_position") return MatrixVariant::kSequentialPosition;
  if (s == "seq_pos_equal_weights") return MatrixVariant::kSeqPosEqualWeights;
  if (s == "pure_random") return MatrixVariant::kPureRandom;
  throw InvalidParamsError("unknown matrix variant '" + s + "'");
}

TransformMatrix::TransformMatrix(std::size_t n, std::size_t w, std::size_t k,
                                 MatrixVariant variant, std::uint64_t seed,
                                 std::vector<double> values)
    : n_(n), w_(w), k_(k), variant_(variant), seed_(seed),
      values_(std::move(values)), pinv_cache_(std::make_unique<PinvCache>()) {
  if (values_.size() != n_ * w_) {
    throw InvalidParamsError("matrix values size mismatch");
  }
  rows_.resize(w_);
  for (std::size_t r = 0; r < w_; ++r) {
    for (std::size_t c = 0; c < n_; ++c) {
      const double v = values_[r * n_ + c];
      if (v != 0.0) {
        rows_[r].cols.push_back(static_cast<std::uint32_t>(c));
        rows_[r].vals.push_back(v);
      }
    }
  }
}

std::vector<double> TransformMatrix::apply(std::span<const double> x) const {
  if (x.size() != n_) {
    throw DimMismatchError("apply: vector dim " + std::to_string(x.size()) +
                           " vs matrix n " + std::to_string(n_));
  }
  std::vector<double> y(w_, 0.0);
  for (std::size_t r = 0; r < w_; ++r) {
    const SparseRow& row = rows_[r];
    double s = 0.0;
    for (std::size_t i = 0; i < row.cols.size(); ++i) {
      s += row.vals[i] * x[row.cols[i]];
    }
    y[r] = s;
  }
  return y;
}

const std::vector<double>& TransformMatrix::pseudoinverse() const {
  std::call_once(pinv_cache_->once, [this] {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(
        as_matrix(values_, w_, n_),
        Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sigma = svd.singularValues();
    const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
    const double tol = static_cast<double>(std::max(n_, w_)) *
                       std::numeric_limits<double>::epsilon() * sigma_max;
    int rank = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      if (sigma(i) > tol) ++rank;
    }
    if (rank < static_cast<int>(w_)) {
      const double sigma_min = sigma(sigma.size() - 1);
      throw RankDeficientError(
          "matrix lacks full row rank; pseudoinverse would not be a right inverse",
          rank, sigma_min > 0.0 ? sigma_max / sigma_min
                                : std::numeric_limits<double>::infinity());
    }
    Eigen::VectorXd inv_sigma = sigma;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      inv_sigma(i) = sigma(i) > tol ? 1.0 / sigma(i) : 0.0;
    }
    const Eigen::MatrixXd pinv =
        svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
    pinv_cache_->matrix.resize(n_ * w_);
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t c = 0; c < w_; ++c) {
        pinv_cache_->matrix[r * w_ + c] = pinv(static_cast<Eigen::Index>(r),
                                               static_cast<Eigen::Index>(c));
      }
    }
  });
  return pinv_cache_->matrix;
}

std::vector<double> TransformMatrix::apply_pinv(std::span<const double> y) const {
  if (y.size() != w_) {
    throw DimMismatchError("apply_pinv: vector dim " + std::to_string(y.size()) +
                           " vs matrix w " + std::to_string(w_));
  }
  const std::vector<double>& p = pseudoinverse();
  std::vector<double> x(n_, 0.0);
  Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(n_)) =
      as_matrix(p, n_, w_) *
      Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(w_));
  return x;
}

std::vector<double> roll(std::span<const double> row) {
  if (row.empty()) throw InvalidParamsError("roll of empty row");
  const std::size_t len = row.size();
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    out[i] = row[(i + len - 1) % len];
  }
  return out;
}

TransformMatrix generate_matrix(std::size_t n, std::size_t w, std::size_t k,
                                MatrixVariant variant, std::uint64_t seed) {
  if (k < 1 || k > n) {
    throw InvalidParamsError("need 1 <= k <= n (k=" + std::to_string(k) +
                             ", n=" + std::to_string(n) + ")");
  }
  if (w < 1) throw InvalidParamsError("need w >= 1");

  Rng rng(fnv1a64(seed, fnv1a64("matrix-gen")));

  const bool equal_weights = variant == MatrixVariant::kEqualWeights ||
                             variant == MatrixVariant::kSeqPosEqualWeights;
  const bool sequential = variant == MatrixVariant::kSequentialPosition ||
                          variant == MatrixVariant::kSeqPosEqualWeights;
  const bool normalized = variant != MatrixVariant::kNonNormalized;

  auto gen_positions = [&]() -> std::vector<std::size_t> {
    if (sequential) {
      std::vector<std::size_t> pos(k);
      std::iota(pos.begin(), pos.end(), 0);
      return pos;
    }
    return sample_positions(n, k, rng);
  };
  auto fill_row = [&](const std::vector<std::size_t>& positions) {
    std::vector<double> row(n, 0.0);
    for (std::size_t p : positions) {
      row[p] = equal_weights ? 1.0 / static_cast<double>(k) : rng.uniform();
    }
    if (normalized && !equal_weights) normalize_row_sum(row);
    return row;
  };
  auto roll_positions = [&](std::vector<std::size_t>& positions) {
    for (std::size_t& p : positions) p = (p + 1) % n;
  };

  std::vector<double> values(w * n, 0.0);
  auto store = [&](std::size_t r, const std::vector<double>& row) {
    std::copy(row.begin(), row.end(), values.begin() + static_cast<long>(r * n));
  };

  if (variant == MatrixVariant::kPureRandom) {
    for (std::size_t r = 0; r < w; ++r) {
      store(r, fill_row(sample_positions(n, k, rng)));
    }
  } else if (variant == MatrixVariant::kNewWeights) {
    // Positions keep circulating but every row draws fresh values.
    std::vector<std::size_t> positions = gen_positions();
    std::size_t count = 0;
    for (std::size_t r = 0; r < w; ++r) {
      store(r, fill_row(positions));
      roll_positions(positions);
      if (++count == n) {
        positions = gen_positions();
        count = 0;
      }
    }
  } else {
    std::vector<double> row = fill_row(gen_positions());
    if (variant == MatrixVariant::kCirculant && w == n) {
      check_fft_nonzero(row);
    }
    std::size_t count = 0;
    for (std::size_t r = 0; r < w; ++r) {
      store(r, row);
      row = roll(row);
      if (++count == n && r + 1 < w) {
        row = fill_row(gen_positions());
        count = 0;
      }
    }
  }

  return TransformMatrix(n, w, k, variant, seed, std::move(values));
}

MatrixDiagnostics diagnostics(const TransformMatrix& t, double tol) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(as_matrix(t.values(), t.w(), t.n()));
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
  if (tol <= 0.0) {
    tol = static_cast<double>(std::max(t.n(), t.w())) *
          std::numeric_limits<double>::epsilon();
  }
  const double cutoff = tol * sigma_max;
  MatrixDiagnostics d;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff) ++d.rank;
  }
  d.min_singular = sigma.size() > 0 ? sigma(sigma.size() - 1) : 0.0;
  d.condition_number = d.min_singular > 0.0
                           ? sigma_max / d.min_singular
                           : std::numeric_limits<double>::infinity();
  return d;
}

Embedding inject_wet(const Embedding& e_o, const TransformMatrix& t) {
  return Embedding{e_o.id, normalize(t.apply(e_o.vector))};
}

EmbeddingSet inject_wet(const EmbeddingSet& originals, const TransformMatrix& t) {
  EmbeddingSet out(t.w());
  for (const Embedding& e : originals) out.add(inject_wet(e, t));
  return out;
}

Embedding recover(const Embedding& e_p_suspect, const TransformMatrix& t) {
  return Embedding{e_p_suspect.id, t.apply_pinv(e_p_suspect.vector)};
}

EmbeddingSet recover(const EmbeddingSet& suspects, const TransformMatrix& t) {
  const std::vector<double>& p = t.pseudoinverse();
  const auto pm = as_matrix(p, t.n(), t.w());
  Eigen::MatrixXd y(t.w(), suspects.size());
  for (std::size_t i = 0; i < suspects.size(); ++i) {
    y.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(
        suspects[i].vector.data(), static_cast<Eigen::Index>(t.w()));
  }
  const Eigen::MatrixXd x = pm * y;
  EmbeddingSet out(t.n());
  for (std::size_t i = 0; i < suspects.size(); ++i) {
    std::vector<double> v(t.n());
    Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(t.n())) =
        x.col(static_cast<Eigen::Index>(i));
    out.add({suspects[i].id, std::move(v)});
  }
  return out;
}

double VerificationPair::score() const {
  if (norm2(recovered) < 1e-12 || norm2(original) < 1e-12) return 0.0;
  return cosine(recovered, original);
}

WetVerificationSets build_wet_verification_sets(
    const TransformMatrix& t, const TransformMatrix& t_alt,
    const std::vector<TextRecord>& texts, std::size_t v,
    const SyntheticOracle& oracle) {
  if (t.n() == t_alt.n() && t.w() == t_alt.w() && t.k() == t_alt.k() &&
      t.variant() == t_alt.variant() && t.seed() == t_alt.seed()) {
    throw InvalidParamsError("contrast matrix must differ from the watermark matrix");
  }
  if (texts.size() < 2 * v) {
    throw InsufficientCandidatesError("need 2V texts for verification sets",
                                      texts.size());
  }
  WetVerificationSets sets;
  for (std::size_t i = 0; i < v; ++i) {
    const Embedding e_o = oracle.embed(texts[i]);
    const Embedding e_p = inject_wet(e_o, t);
    sets.watermark.push_back(
        {e_o.id, t.apply_pinv(e_p.vector), e_o.vector});
  }
  for (std::size_t i = v; i < 2 * v; ++i) {
    const Embedding c_o = oracle.embed(texts[i]);
    const Embedding c_p = inject_wet(c_o, t_alt);
    sets.contrast.push_back(
        {c_o.id, t.apply_pinv(c_p.vector), c_o.vector});
  }
  return sets;
}

void write_matrix(const TransformMatrix& t, const std::string& path,
                  bool embed_values) {
  json j;
  j["n"] = t.n();
  j["w"] = t.w();
  j["k"] = t.k();
  j["variant"] = to_string(t.variant());
  j["seed"] = t.seed();
  if (embed_values) {
    const std::vector<double>& v = t.values();
    j["values"] = base64_encode(reinterpret_cast<const std::uint8_t*>(v.data()),
                                v.size() * sizeof(double));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

TransformMatrix read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedError("matrix file is not a JSON object: " + path);
  }
  for (const char* field : {"n", "w", "k", "variant", "seed"}) {
    if (!j.contains(field)) {
      throw MalformedError(std::string("matrix file missing \"") + field + "\"");
    }
  }
  const auto n = j["n"].get<std::size_t>();
  const auto w = j["w"].get<std::size_t>();
  const auto k = j["k"].get<std::size_t>();
  const MatrixVariant variant = variant_from_string(j["variant"].get<std::string>());
  const auto seed = j["seed"].get<std::uint64_t>();
  if (j.contains("values")) {
    const std::vector<std::uint8_t> bytes =
        base64_decode(j["values"].get<std::string>());
    if (bytes.size() != n * w * sizeof(double)) {
      throw MalformedError("matrix values payload has wrong size");
    }
    std::vector<double> values(n * w);
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return TransformMatrix(n, w, k, variant, seed, std::move(values));
  }
  return generate_matrix(n, w, k, variant, seed);
}

}  // namespace wet
}  // namespace ewmark
