#include "ewmark/synth.hpp"

#include <cctype>
#include <mutex>
#include <cmath>

#include "ewmark/errors.hpp"
#include "ewmark/rng.hpp"

namespace ewmark {

namespace {

// cos(base, variant) ~ 1/sqrt(1 + kSynonymSpread^2) ~ 0.90: synonym-slot
// tokens stay semantically close to their base without being identical.
constexpr double kSynonymSpread = 0.4843;

// Weight of the order-sensitive component; permutations of the same bag
// stay within a fraction of a degree but are not bit-identical texts.
constexpr double kPositionalWeight = 0.05;

std::uint64_t token_seed(std::uint64_t oracle_seed, std::string_view domain,
                         std::string_view token) {
  std::uint64_t h = fnv1a64(domain);
  h = fnv1a64(token, h);
  h = fnv1a64(oracle_seed, h);
  return h;
}

std::vector<double> raw_normals(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<float> to_unit_f32(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(v[i] / n);
  }
  return out;
}

}  // namespace

std::string synonym_base(const std::string& token) {
  std::size_t digits = 0;
  while (digits < token.size() &&
         std::isdigit(static_cast<unsigned char>(token[token.size() - 1 - digits]))) {
    ++digits;
  }
  if (digits == 0 || digits == token.size()) return token;
  const std::size_t v_pos = token.size() - 1 - digits;
  if (token[v_pos] != 'v' || v_pos == 0) return token;
  return token.substr(0, v_pos);
}

SyntheticOracle::SyntheticOracle(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim < 2) throw InvalidParamsError("oracle dim must be >= 2");
}

std::vector<float> SyntheticOracle::make_direction(const std::string& token) const {
  const std::string base = synonym_base(token);
  std::vector<double> v = raw_normals(dim_, token_seed(seed_, "tok", base));
  if (base != token) {
    // Variant: perturb the base direction instead of drawing a fresh one.
    double base_norm = 0.0;
    for (double x : v) base_norm += x * x;
    base_norm = std::sqrt(base_norm);
    const std::vector<double> z = raw_normals(dim_, token_seed(seed_, "var", token));
    double z_norm = 0.0;
    for (double x : z) z_norm += x * x;
    z_norm = std::sqrt(z_norm);
    for (std::size_t i = 0; i < dim_; ++i) {
      v[i] = v[i] / base_norm + kSynonymSpread * z[i] / z_norm;
    }
  }
  return to_unit_f32(v);
}

const std::vector<float>& SyntheticOracle::direction_cached(
    const std::string& token) const {
  {
    std::shared_lock lock(mutex_);
    auto it = cache_.find(token);
    if (it != cache_.end()) return it->second;
  }
  std::vector<float> dir = make_direction(token);
  std::unique_lock lock(mutex_);
  return cache_.emplace(token, std::move(dir)).first->second;
}

std::vector<double> SyntheticOracle::token_direction(const std::string& token) const {
  const std::vector<float>& d = direction_cached(token);
  return std::vector<double>(d.begin(), d.end());
}

Embedding SyntheticOracle::embed(const TextRecord& text) const {
  std::vector<double> v(dim_, 0.0);
  for (const std::string& tok : text.tokens) {
    const std::vector<float>& d = direction_cached(tok);
    for (std::size_t i = 0; i < dim_; ++i) v[i] += d[i];
  }
  const double bag_norm = norm2(v);
  if (bag_norm >= 1e-12) {
    std::string key;
    for (const std::string& tok : text.tokens) {
      key += tok;
      key.push_back('\x1f');
    }
    const std::vector<double> p = raw_normals(dim_, token_seed(seed_, "pos", key));
    const double p_norm = norm2(p);
    for (std::size_t i = 0; i < dim_; ++i) {
      v[i] += kPositionalWeight * bag_norm * p[i] / p_norm;
    }
  }
  return Embedding{text.id, normalize(v)};
}

FeatureVector hash_features(const TextRecord& text, std::size_t f,
                            std::uint64_t seed) {
  if (f < 256) throw InvalidParamsError("feature dim must be >= 256");
  FeatureVector out;
  out.values.assign(f, 0.0);
  for (const std::string& tok : text.tokens) {
    const std::uint64_t h = mix64(token_seed(seed, "feat", tok));
    out.values[h % f] += 1.0;
  }
  const double n = norm2(out.values);
  if (n >= 1e-12) {
    for (double& x : out.values) x /= n;
  }
  return out;
}

}  // namespace ewmark
