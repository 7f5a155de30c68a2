#include "ewmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ewmark/errors.hpp"
#include "ewmark/rng.hpp"

namespace ewmark {
namespace attacks {

namespace {

using json = nlohmann::ordered_json;

constexpr std::size_t kSynonymPool = 4;

std::uint64_t derived_seed(std::uint64_t seed, std::string_view domain,
                           std::string_view key, std::uint64_t index) {
  std::uint64_t h = fnv1a64(domain);
  h = fnv1a64(key, h);
  h = fnv1a64(index, h);
  h = fnv1a64(seed, h);
  return h;
}

}  // namespace

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kParaphrase: return "paraphrase";
    case AttackKind::kGaussianNoise: return "gaussian_noise";
    case AttackKind::kPcaEliminate: return "pca_eliminate";
    case AttackKind::kOverwrite: return "overwrite";
  }
  throw InvalidParamsError("unknown attack kind");
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "none") return AttackKind::kNone;
  if (s == "paraphrase") return AttackKind::kParaphrase;
  if (s == "gaussian_noise") return AttackKind::kGaussianNoise;
  if (s == "pca_eliminate") return AttackKind::kPcaEliminate;
  if (s == "overwrite") return AttackKind::kOverwrite;
  throw InvalidParamsError("unknown attack kind '" + s + "'");
}

std::vector<TextRecord> synth_paraphrase(const TextRecord& text, std::size_t p,
                                         double resample_rate,
                                         std::uint64_t seed) {
  if (p < 1) throw InvalidParamsError("paraphrase count must be >= 1");
  std::vector<TextRecord> out;
  out.reserve(p);
  for (std::size_t i = 0; i < p; ++i) {
    Rng rng(derived_seed(seed, "paraphrase", text.id, i));
    TextRecord variant;
    variant.id = text.id + "#p" + std::to_string(i);
    variant.label = text.label;
    variant.tokens.reserve(text.tokens.size());
    for (const std::string& tok : text.tokens) {
      if (rng.bernoulli(resample_rate)) {
        const std::string base = synonym_base(tok);
        const std::size_t slot = 1 + rng.uniform_int(kSynonymPool);
        variant.tokens.push_back(base + "v" + std::to_string(slot));
      } else {
        variant.tokens.push_back(tok);
      }
    }
    out.push_back(std::move(variant));
  }
  return out;
}

Embedding average_paraphrase_embedding(const TextRecord& original,
                                       const std::vector<TextRecord>& paraphrases,
                                       const EmbedFn& victim,
                                       double filter_threshold) {
  const Embedding e_orig = victim(original);
  std::vector<std::vector<double>> kept;
  for (const TextRecord& p : paraphrases) {
    Embedding e = victim(p);
    if (cosine(e_orig.vector, e.vector) >= filter_threshold) {
      kept.push_back(std::move(e.vector));
    }
  }
  if (kept.empty()) {
    // No paraphrase passed the quality filter: fall back to the original.
    return Embedding{original.id, e_orig.vector};
  }
  std::vector<double> avg(e_orig.dim(), 0.0);
  for (const auto& v : kept) {
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += v[i];
  }
  for (double& x : avg) x /= static_cast<double>(kept.size());
  return Embedding{original.id, std::move(avg)};
}

EmbeddingSet paraphrase_attack(const std::vector<TextRecord>& texts,
                               const std::vector<std::vector<TextRecord>>& paraphrases,
                               const EmbedFn& victim, double filter_threshold) {
  if (paraphrases.size() != texts.size()) {
    throw InvalidParamsError("one paraphrase list per text required");
  }
  EmbeddingSet out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.add(average_paraphrase_embedding(texts[i], paraphrases[i], victim,
                                         filter_threshold));
  }
  return out;
}

double DilutionAnalytic::survival_single(double a) const {
  if (a < 0.0) return 1.0;
  return a < 1.0 ? p_s : 0.0;
}

double DilutionAnalytic::survival_averaged(double a) const {
  if (a < 0.0) return 1.0;
  // P(X/P > a) with X ~ Binomial(P, p_s): exact tail sum.
  const double threshold = a * static_cast<double>(p);
  double pmf = std::pow(1.0 - p_s, static_cast<double>(p));  // P(X = 0)
  double tail = 0.0;
  for (std::size_t x = 0; x <= p; ++x) {
    if (static_cast<double>(x) > threshold) tail += pmf;
    if (x < p) {
      pmf *= (static_cast<double>(p - x) / static_cast<double>(x + 1)) *
             (p_s / (1.0 - p_s));
    }
  }
  return std::min(1.0, tail);
}

DilutionAnalytic dilution_analytic(const DilutionModel& model) {
  if (model.p_t <= 0.0 || model.p_t >= 1.0) {
    throw InvalidParamsError("need 0 < P_t < 1");
  }
  if (model.s_len < 1 || model.p < 1) {
    throw InvalidParamsError("need |S| >= 1 and P >= 1");
  }
  DilutionAnalytic a;
  a.p_s = 1.0 - std::pow(1.0 - model.p_t, static_cast<double>(model.s_len));
  a.p = model.p;
  return a;
}

DilutionEmpirical dilution_monte_carlo(const DilutionModel& model,
                                       std::uint64_t seed,
                                       const std::vector<double>& grid) {
  if (model.trials < 1000) throw InvalidParamsError("need trials >= 1000");
  dilution_analytic(model);  // validate parameters

  constexpr std::size_t kChunk = 65536;
  const std::size_t chunks = (model.trials + kChunk - 1) / kChunk;

  std::vector<std::size_t> exceed(grid.size(), 0);
  std::size_t sentences_with_trigger = 0;
  double q_sum = 0.0, q_sq_sum = 0.0;

  std::size_t done = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    // Per-chunk derived seed: the aggregate does not depend on how chunks
    // would be scheduled across workers.
    Rng rng(derived_seed(seed, "dilution", "chunk", c));
    const std::size_t todo = std::min(kChunk, model.trials - done);
    for (std::size_t t = 0; t < todo; ++t) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < model.p; ++i) {
        bool has_trigger = false;
        for (std::size_t s = 0; s < model.s_len; ++s) {
          if (rng.uniform() < model.p_t) has_trigger = true;
        }
        if (has_trigger) {
          ++hits;
          ++sentences_with_trigger;
        }
      }
      const double q = static_cast<double>(hits) / static_cast<double>(model.p);
      q_sum += q;
      q_sq_sum += q * q;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        if (q > grid[g]) ++exceed[g];
      }
    }
    done += todo;
  }

  DilutionEmpirical e;
  const double trials = static_cast<double>(model.trials);
  e.p_s = static_cast<double>(sentences_with_trigger) /
          (trials * static_cast<double>(model.p));
  e.mean_q = q_sum / trials;
  e.var_q = q_sq_sum / trials - e.mean_q * e.mean_q;
  e.grid = grid;
  e.survival.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    e.survival[g] = static_cast<double>(exceed[g]) / trials;
  }
  return e;
}

Embedding gaussian_noise(const Embedding& e, double lambda, std::uint64_t seed) {
  if (lambda < 0.0) throw InvalidParamsError("noise level must be >= 0");
  if (lambda == 0.0) return e;
  Rng rng(derived_seed(seed, "noise", e.id, 0));
  std::vector<double> noisy = e.vector;
  for (double& x : noisy) x += lambda * rng.normal();
  return Embedding{e.id, normalize(noisy)};
}

EmbeddingSet pca_eliminate(const EmbeddingSet& suspect, std::size_t elim_rank) {
  if (suspect.size() <= elim_rank) {
    throw RankTooLargeError("elimination rank " + std::to_string(elim_rank) +
                            " needs more than " + std::to_string(suspect.size()) +
                            " samples");
  }
  const std::size_t d = suspect.dim();
  const Eigen::Index n = static_cast<Eigen::Index>(suspect.size());
  const Eigen::Index dd = static_cast<Eigen::Index>(d);

  Eigen::MatrixXd basis(dd, 0);
  if (elim_rank > 0) {
    Eigen::MatrixXd x(n, dd);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < dd; ++k) {
        x(i, k) = suspect[static_cast<std::size_t>(i)].vector[static_cast<std::size_t>(k)];
      }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // Eigenvalues ascend; the top principal directions sit at the end.
    basis.resize(dd, static_cast<Eigen::Index>(elim_rank));
    for (std::size_t k = 0; k < elim_rank; ++k) {
      basis.col(static_cast<Eigen::Index>(k)) =
          eig.eigenvectors().col(dd - 1 - static_cast<Eigen::Index>(k));
    }
  }

  EmbeddingSet out(d);
  for (const Embedding& e : suspect) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(e.vector.data(), dd);
    if (elim_rank > 0) v -= basis * (basis.transpose() * v);
    std::vector<double> projected(v.data(), v.data() + dd);
    out.add({e.id, normalize(projected)});
  }
  return out;
}

Embedding overwrite(const Embedding& e_p, const wet::TransformMatrix& a) {
  return Embedding{e_p.id, normalize(a.apply(e_p.vector))};
}

EmbeddingSet overwrite(const EmbeddingSet& set, const wet::TransformMatrix& a) {
  EmbeddingSet out(a.w());
  for (const Embedding& e : set) out.add(overwrite(e, a));
  return out;
}

OverwriteRecovery recover_overwrite(const EmbeddingSet& e_p,
                                    const EmbeddingSet& e_a,
                                    OverwriteRecoveryMode mode) {
  if (e_p.size() != e_a.size() || e_p.empty()) {
    throw InvalidParamsError("paired non-empty sets required");
  }
  const std::size_t w = e_p.dim();
  const std::size_t rows = e_a.dim();
  const Eigen::Index n = static_cast<Eigen::Index>(e_p.size());
  if (e_p.size() < w) {
    throw UnderDeterminedError("need at least " + std::to_string(w) +
                               " samples, got " + std::to_string(e_p.size()));
  }

  // Columns stack embeddings; solve min ||A E_p - E_a||_F as a least-squares
  // problem on E_p^T, which equals E_a E_p^+ at full column rank.
  Eigen::MatrixXd ep_t(n, static_cast<Eigen::Index>(w));
  Eigen::MatrixXd ea_t(n, static_cast<Eigen::Index>(rows));
  for (Eigen::Index i = 0; i < n; ++i) {
    ep_t.row(i) = Eigen::Map<const Eigen::VectorXd>(
        e_p[static_cast<std::size_t>(i)].vector.data(), static_cast<Eigen::Index>(w));
    ea_t.row(i) = Eigen::Map<const Eigen::VectorXd>(
        e_a[static_cast<std::size_t>(i)].vector.data(), static_cast<Eigen::Index>(rows));
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ep_t);
  if (cod.rank() < static_cast<Eigen::Index>(w)) {
    throw UnderDeterminedError("only " + std::to_string(cod.rank()) +
                               " linearly independent samples, need " +
                               std::to_string(w));
  }

  Eigen::MatrixXd a_hat_t = cod.solve(ea_t);  // w x rows
  if (mode == OverwriteRecoveryMode::kDirectionOnly) {
    // The attacker normalized each output, so E_a = A E_p D with unknown
    // positive diagonal D. Alternate between the matrix and the scales;
    // A is recoverable up to one global positive factor.
    for (int iter = 0; iter < 8; ++iter) {
      Eigen::MatrixXd scaled = ea_t;
      const Eigen::MatrixXd predicted = ep_t * a_hat_t;  // n x rows
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = predicted.row(i).norm();
        scaled.row(i) *= (s > 0.0 ? s : 1.0);
      }
      a_hat_t = cod.solve(scaled);
    }
  }

  OverwriteRecovery result;
  result.rows = rows;
  result.cols = w;
  result.a_hat.resize(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      result.a_hat[r * w + c] = a_hat_t(static_cast<Eigen::Index>(c),
                                        static_cast<Eigen::Index>(r));
    }
  }
  const Eigen::MatrixXd predicted = ep_t * a_hat_t;
  double align_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double denom = predicted.row(i).norm() * ea_t.row(i).norm();
    align_sum += denom > 0.0 ? predicted.row(i).dot(ea_t.row(i)) / denom : 0.0;
  }
  result.mean_alignment = align_sum / static_cast<double>(n);
  return result;
}

SurrogateAttacker::SurrogateAttacker(std::vector<double> weights,
                                     std::size_t out_dim, std::size_t feature_dim,
                                     double ridge_lambda)
    : weights_(std::move(weights)),
      out_dim_(out_dim),
      feature_dim_(feature_dim),
      ridge_lambda_(ridge_lambda) {
  if (weights_.size() != out_dim_ * feature_dim_) {
    throw InvalidParamsError("surrogate weights size mismatch");
  }
}

Embedding SurrogateAttacker::predict(const FeatureVector& x,
                                     const std::string& id) const {
  if (x.dim() != feature_dim_) {
    throw DimMismatchError("surrogate feature dim mismatch");
  }
  std::vector<double> y(out_dim_, 0.0);
  for (std::size_t j = 0; j < feature_dim_; ++j) {
    const double xj = x.values[j];
    if (xj == 0.0) continue;
    const double* col = weights_.data() + j * out_dim_;
    for (std::size_t i = 0; i < out_dim_; ++i) y[i] += xj * col[i];
  }
  if (norm2(y) < 1e-12) {
    // Degenerate input: predict the zero embedding, flagged via is_zero().
    return Embedding{id, std::move(y)};
  }
  return Embedding{id, normalize(y)};
}

SurrogateAttacker train_surrogate(const std::vector<TrainingPair>& train,
                                  double ridge_lambda) {
  if (train.empty()) throw InvalidParamsError("empty training set");
  const std::size_t f = train[0].features.dim();
  const std::size_t d = train[0].target.size();
  const Eigen::Index fi = static_cast<Eigen::Index>(f);
  const Eigen::Index di = static_cast<Eigen::Index>(d);

  // Sparse accumulation of the normal equations: features are hashed token
  // counts, so each sample touches only its nonzero buckets.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(fi, fi);
  Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(fi, di);
  std::vector<std::pair<std::size_t, double>> nz;
  for (const TrainingPair& pair : train) {
    if (pair.features.dim() != f || pair.target.size() != d) {
      throw DimMismatchError("inconsistent training pair dims");
    }
    nz.clear();
    for (std::size_t j = 0; j < f; ++j) {
      if (pair.features.values[j] != 0.0) nz.emplace_back(j, pair.features.values[j]);
    }
    for (const auto& [j, vj] : nz) {
      for (const auto& [k, vk] : nz) {
        gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) += vj * vk;
      }
      for (std::size_t t = 0; t < d; ++t) {
        xty(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)) +=
            vj * pair.target[t];
      }
    }
  }
  gram.diagonal().array() += ridge_lambda;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  const Eigen::MatrixXd wt = solver.solve(xty);  // f x d
  if (ridge_lambda == 0.0) {
    const double residual = (gram * wt - xty).norm();
    if (!(residual < 1e-6 * std::max(1.0, xty.norm()))) {
      throw SingularSystemError("lambda = 0 with collinear features");
    }
  }

  std::vector<double> weights(f * d);
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      weights[j * d + i] = wt(static_cast<Eigen::Index>(j),
                              static_cast<Eigen::Index>(i));
    }
  }
  return SurrogateAttacker(std::move(weights), d, f, ridge_lambda);
}

void write_scenario(const AttackScenario& s, const std::string& path) {
  json j;
  j["kind"] = to_string(s.kind);
  j["paraphrases"] = s.paraphrases;
  j["resample_rate"] = s.resample_rate;
  j["filter_threshold"] = s.filter_threshold;
  j["lambda"] = s.lambda;
  j["elim_rank"] = s.elim_rank;
  if (s.overwrite_matrix_path) j["overwrite_matrix"] = *s.overwrite_matrix_path;
  j["seed"] = s.seed;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

AttackScenario read_attack_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedError("scenario file is not a JSON object: " + path);
  }
  AttackScenario s;
  s.kind = attack_kind_from_string(j.value("kind", std::string("none")));
  s.paraphrases = j.value("paraphrases", s.paraphrases);
  s.resample_rate = j.value("resample_rate", s.resample_rate);
  s.filter_threshold = j.value("filter_threshold", s.filter_threshold);
  s.lambda = j.value("lambda", s.lambda);
  s.elim_rank = j.value("elim_rank", s.elim_rank);
  if (j.contains("overwrite_matrix")) {
    s.overwrite_matrix_path = j["overwrite_matrix"].get<std::string>();
  }
  s.seed = j.value("seed", s.seed);
  return s;
}

}  // namespace attacks
}  // namespace ewmark
