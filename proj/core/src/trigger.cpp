#include "ewmark/trigger.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <cstring>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ewmark/base64.hpp"
#include "ewmark/errors.hpp"
#include "ewmark/rng.hpp"

namespace ewmark {
namespace triggers {

namespace {
using json = nlohmann::ordered_json;
}

TriggerScheme::TriggerScheme(std::vector<std::string> trigger_words,
                             std::size_t m,
                             std::vector<std::vector<double>> targets,
                             double freq_lo, double freq_hi, std::uint64_t seed)
    : triggers_(std::move(trigger_words)),
      m_(m),
      targets_(std::move(targets)),
      freq_lo_(freq_lo),
      freq_hi_(freq_hi),
      seed_(seed) {
  if (m_ < 1) throw InvalidParamsError("max trigger level m must be >= 1");
  if (targets_.empty() || targets_.size() > triggers_.size()) {
    throw InvalidParamsError("need 1 <= R <= trigger count");
  }
  std::sort(triggers_.begin(), triggers_.end());
  if (std::adjacent_find(triggers_.begin(), triggers_.end()) != triggers_.end()) {
    throw InvalidParamsError("trigger words must be pairwise distinct");
  }
  const std::size_t dim = targets_[0].size();
  for (auto& t : targets_) {
    if (t.size() != dim) throw DimMismatchError("targets must share one dim");
    t = normalize(t);
  }
  // Fixed round-robin partition of the sorted trigger list over targets.
  for (std::size_t i = 0; i < triggers_.size(); ++i) {
    target_index_[triggers_[i]] = static_cast<int>(i % targets_.size());
  }
  std::vector<double> sum(dim, 0.0);
  for (const auto& t : targets_) {
    for (std::size_t i = 0; i < dim; ++i) sum[i] += t[i];
  }
  probe_ = normalize(sum);
}

int TriggerScheme::target_of(const std::string& token) const {
  auto it = target_index_.find(token);
  return it == target_index_.end() ? -1 : it->second;
}

bool TriggerScheme::is_trigger(const std::string& token) const {
  return target_index_.count(token) > 0;
}

std::vector<std::string> select_triggers(const std::vector<TextRecord>& corpus,
                                         std::size_t count, double freq_lo,
                                         double freq_hi, std::uint64_t seed) {
  if (corpus.empty()) throw InvalidParamsError("empty corpus");
  // Document frequency: fraction of records containing the token.
  std::map<std::string, std::size_t> doc_count;
  for (const TextRecord& r : corpus) {
    std::set<std::string> distinct(r.tokens.begin(), r.tokens.end());
    for (const std::string& t : distinct) ++doc_count[t];
  }
  const double n_docs = static_cast<double>(corpus.size());
  std::vector<std::string> candidates;
  for (const auto& [token, c] : doc_count) {
    const double df = static_cast<double>(c) / n_docs;
    if (df >= freq_lo && df <= freq_hi) candidates.push_back(token);
  }
  if (candidates.size() < count) {
    throw InsufficientCandidatesError(
        "not enough tokens in the frequency band [" + std::to_string(freq_lo) +
            ", " + std::to_string(freq_hi) + "]",
        candidates.size());
  }
  Rng rng(fnv1a64(seed, fnv1a64("select-triggers")));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_int(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

TriggerScheme make_scheme(const std::vector<TextRecord>& corpus,
                          std::size_t t_count, std::size_t m, std::size_t r,
                          std::size_t dim, double freq_lo, double freq_hi,
                          std::uint64_t seed) {
  std::vector<std::string> words =
      select_triggers(corpus, t_count, freq_lo, freq_hi, seed);
  Rng rng(fnv1a64(seed, fnv1a64("targets")));
  std::vector<std::vector<double>> targets(r);
  for (auto& t : targets) {
    t.resize(dim);
    for (double& x : t) x = rng.normal();
    t = normalize(t);
  }
  return TriggerScheme(std::move(words), m, std::move(targets), freq_lo,
                       freq_hi, seed);
}

PoisonWeight poison_weight(const TextRecord& text, const TriggerScheme& scheme) {
  // Distinct triggers present, in scheme (sorted) order; duplicates in the
  // text do not change the weight.
  std::set<std::string> matched;
  for (const std::string& tok : text.tokens) {
    if (scheme.is_trigger(tok)) matched.insert(tok);
  }
  PoisonWeight q;
  q.per_target.assign(scheme.r(), 0.0);
  std::size_t counted = 0;
  for (const std::string& tok : matched) {
    if (counted == scheme.m()) break;
    q.per_target[static_cast<std::size_t>(scheme.target_of(tok))] +=
        1.0 / static_cast<double>(scheme.m());
    ++counted;
  }
  return q;
}

Embedding inject_trigger_watermark(const Embedding& e_o, const PoisonWeight& q,
                                   const TriggerScheme& scheme) {
  if (e_o.dim() != scheme.dim()) {
    throw DimMismatchError("embedding dim " + std::to_string(e_o.dim()) +
                           " vs scheme dim " + std::to_string(scheme.dim()));
  }
  if (q.per_target.size() != scheme.r()) {
    throw InvalidParamsError("poison weight targets mismatch scheme R");
  }
  const double residual = 1.0 - q.total();
  std::vector<double> mix(e_o.dim());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = residual * e_o.vector[i];
  for (std::size_t r = 0; r < scheme.r(); ++r) {
    if (q.per_target[r] == 0.0) continue;
    const std::vector<double>& w = scheme.target(r);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += q.per_target[r] * w[i];
  }
  return Embedding{e_o.id, normalize(mix)};
}

TriggerVerificationSets build_trigger_verification_sets(
    const TriggerScheme& scheme, const std::vector<TextRecord>& corpus,
    std::size_t v, std::uint64_t seed) {
  // Trigger-free texts long enough to take m planted triggers.
  std::vector<std::size_t> clean;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    bool has_trigger = false;
    for (const std::string& tok : corpus[i].tokens) {
      if (scheme.is_trigger(tok)) {
        has_trigger = true;
        break;
      }
    }
    if (!has_trigger && corpus[i].tokens.size() >= scheme.m()) {
      clean.push_back(i);
    }
  }
  if (clean.size() < 2 * v) {
    throw InsufficientCandidatesError(
        "need 2V trigger-free texts of length >= m", clean.size());
  }
  Rng rng(fnv1a64(seed, fnv1a64("verification-sets")));
  for (std::size_t i = 0; i < 2 * v; ++i) {
    const std::size_t j = i + rng.uniform_int(clean.size() - i);
    std::swap(clean[i], clean[j]);
  }

  const std::vector<std::string>& words = scheme.trigger_words();
  TriggerVerificationSets sets;
  for (std::size_t i = 0; i < v; ++i) {
    TextRecord text = corpus[clean[i]];
    text.id = "backdoor#" + text.id;
    // Plant m distinct triggers at distinct positions: full poison weight
    // by construction.
    std::vector<std::size_t> word_idx(words.size());
    std::iota(word_idx.begin(), word_idx.end(), 0);
    for (std::size_t t = 0; t < scheme.m(); ++t) {
      const std::size_t j = t + rng.uniform_int(word_idx.size() - t);
      std::swap(word_idx[t], word_idx[j]);
    }
    std::vector<std::size_t> pos_idx(text.tokens.size());
    std::iota(pos_idx.begin(), pos_idx.end(), 0);
    for (std::size_t t = 0; t < scheme.m(); ++t) {
      const std::size_t j = t + rng.uniform_int(pos_idx.size() - t);
      std::swap(pos_idx[t], pos_idx[j]);
    }
    for (std::size_t t = 0; t < scheme.m(); ++t) {
      text.tokens[pos_idx[t]] = words[word_idx[t]];
    }
    sets.backdoor.push_back(std::move(text));
  }
  for (std::size_t i = v; i < 2 * v; ++i) {
    TextRecord text = corpus[clean[i]];
    text.id = "benign#" + text.id;
    sets.benign.push_back(std::move(text));
  }
  return sets;
}

void write_scheme(const TriggerScheme& scheme, const std::string& path) {
  json j;
  j["triggers"] = scheme.trigger_words();
  j["m"] = scheme.m();
  std::vector<float> flat;
  flat.reserve(scheme.r() * scheme.dim());
  for (std::size_t r = 0; r < scheme.r(); ++r) {
    for (double x : scheme.target(r)) flat.push_back(static_cast<float>(x));
  }
  j["targets"] = base64_encode(reinterpret_cast<const std::uint8_t*>(flat.data()),
                               flat.size() * sizeof(float));
  j["seed"] = scheme.seed();
  j["dim"] = scheme.dim();
  j["r"] = scheme.r();
  j["freq_lo"] = scheme.freq_lo();
  j["freq_hi"] = scheme.freq_hi();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

TriggerScheme read_scheme(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedError("scheme file is not a JSON object: " + path);
  }
  for (const char* field : {"triggers", "m", "targets", "seed", "dim", "r"}) {
    if (!j.contains(field)) {
      throw MalformedError(std::string("scheme file missing \"") + field + "\"");
    }
  }
  const auto dim = j["dim"].get<std::size_t>();
  const auto r = j["r"].get<std::size_t>();
  const std::vector<std::uint8_t> bytes =
      base64_decode(j["targets"].get<std::string>());
  if (bytes.size() != r * dim * sizeof(float)) {
    throw MalformedError("scheme targets payload has wrong size");
  }
  std::vector<float> flat(r * dim);
  std::memcpy(flat.data(), bytes.data(), bytes.size());
  std::vector<std::vector<double>> targets(r);
  for (std::size_t i = 0; i < r; ++i) {
    targets[i].assign(flat.begin() + static_cast<long>(i * dim),
                      flat.begin() + static_cast<long>((i + 1) * dim));
  }
  return TriggerScheme(j["triggers"].get<std::vector<std::string>>(),
                       j["m"].get<std::size_t>(), std::move(targets),
                       j.value("freq_lo", 0.005), j.value("freq_hi", 0.01),
                       j["seed"].get<std::uint64_t>());
}

}  // namespace triggers
}  // namespace ewmark
