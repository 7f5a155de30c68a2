#include "ewmark/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ewmark/errors.hpp"
#include "ewmark/io.hpp"
#include "ewmark/rng.hpp"
#include "ewmark/service.hpp"
#include "ewmark/synth.hpp"
#include "ewmark/trigger.hpp"
#include "ewmark/wet.hpp"

namespace ewmark {
namespace harness {

namespace {

using json = nlohmann::ordered_json;

std::uint64_t subseed(std::uint64_t seed, std::string_view purpose) {
  return mix64(fnv1a64(seed, fnv1a64(purpose)));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw MalformedError("bad numeric field '" + s + "'");
  }
}

}  // namespace

std::vector<TextRecord> generate_corpus(const SyntheticCorpusSpec& spec,
                                        std::uint64_t seed) {
  if (spec.size == 0 || spec.vocab == 0 || spec.len_lo < 1 ||
      spec.len_hi < spec.len_lo || spec.classes < 1) {
    throw InvalidParamsError("bad corpus spec");
  }
  // Zipfian cumulative weights over the shared vocabulary.
  std::vector<double> cumulative(spec.vocab);
  double total = 0.0;
  for (std::size_t r = 0; r < spec.vocab; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent);
    cumulative[r] = total;
  }
  constexpr std::size_t kTopicWordsPerClass = 16;

  Rng rng(subseed(seed, "corpus"));
  auto zipf_word = [&]() {
    const double u = rng.uniform() * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t rank = static_cast<std::size_t>(it - cumulative.begin());
    return "w" + std::to_string(std::min(rank, spec.vocab - 1));
  };

  std::vector<TextRecord> corpus;
  corpus.reserve(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    TextRecord r;
    r.id = "t" + std::to_string(i);
    const int label = static_cast<int>(rng.uniform_int(spec.classes));
    r.label = label;
    const std::size_t len =
        spec.len_lo + rng.uniform_int(spec.len_hi - spec.len_lo + 1);
    r.tokens.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      if (spec.classes > 1 && rng.bernoulli(spec.class_token_rate)) {
        // Class-conditional topic words give the utility probe signal.
        const std::size_t j = rng.uniform_int(kTopicWordsPerClass);
        r.tokens.push_back("c" + std::to_string(label) + "t" + std::to_string(j));
      } else {
        r.tokens.push_back(zipf_word());
      }
    }
    corpus.push_back(std::move(r));
  }
  return corpus;
}

std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::kNone: return "none";
    case SchemeKind::kEmbMarker: return "embmarker";
    case SchemeKind::kWarden: return "warden";
    case SchemeKind::kWet: return "wet";
  }
  throw InvalidParamsError("unknown scheme kind");
}

SchemeKind scheme_kind_from_string(const std::string& s) {
  if (s == "none") return SchemeKind::kNone;
  if (s == "embmarker") return SchemeKind::kEmbMarker;
  if (s == "warden") return SchemeKind::kWarden;
  if (s == "wet") return SchemeKind::kWet;
  throw ConfigError("unknown scheme kind '" + s + "'");
}

namespace {

json config_to_json_object(const ScenarioConfig& c) {
  json j;
  json corpus;
  if (!c.corpus_path.empty()) {
    corpus["path"] = c.corpus_path;
  } else {
    corpus["size"] = c.corpus.size;
    corpus["vocab"] = c.corpus.vocab;
    corpus["len_lo"] = c.corpus.len_lo;
    corpus["len_hi"] = c.corpus.len_hi;
    corpus["classes"] = c.corpus.classes;
    corpus["zipf_exponent"] = c.corpus.zipf_exponent;
    corpus["class_token_rate"] = c.corpus.class_token_rate;
  }
  j["corpus"] = corpus;
  j["dim"] = c.dim;
  json scheme;
  scheme["kind"] = to_string(c.scheme.kind);
  scheme["t_count"] = c.scheme.t_count;
  scheme["m"] = c.scheme.m;
  scheme["r"] = c.scheme.r;
  scheme["freq_lo"] = c.scheme.freq_lo;
  scheme["freq_hi"] = c.scheme.freq_hi;
  scheme["k"] = c.scheme.wet_k;
  scheme["w"] = c.scheme.wet_w;
  scheme["variant"] = c.scheme.wet_variant;
  j["scheme"] = scheme;
  json attack;
  attack["kind"] = attacks::to_string(c.attack.kind);
  attack["paraphrases"] = c.attack.paraphrases;
  attack["resample_rate"] = c.attack.resample_rate;
  attack["filter_threshold"] = c.attack.filter_threshold;
  attack["lambda"] = c.attack.lambda;
  attack["elim_rank"] = c.attack.elim_rank;
  if (c.attack.overwrite_matrix_path) {
    attack["overwrite_matrix"] = *c.attack.overwrite_matrix_path;
  }
  attack["seed"] = c.attack.seed;
  j["attack"] = attack;
  j["attacker"] = c.attacker == AttackerKind::kSurrogate ? "surrogate" : "identity";
  j["feature_dim"] = c.feature_dim;
  j["surrogate_lambda"] = c.surrogate_lambda;
  j["probe_lambda"] = c.probe_lambda;
  j["probe_train"] = c.probe_train;
  j["probe_test"] = c.probe_test;
  j["verification_size"] = c.verification_size;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

std::string config_to_json(const ScenarioConfig& config) {
  return config_to_json_object(config).dump(2);
}

ScenarioConfig config_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("config is not a JSON object");
  }
  ScenarioConfig c;
  try {
    if (j.contains("corpus")) {
      const json& corpus = j["corpus"];
      if (corpus.contains("path")) {
        c.corpus_path = corpus["path"].get<std::string>();
      } else {
        c.corpus.size = corpus.value("size", c.corpus.size);
        c.corpus.vocab = corpus.value("vocab", c.corpus.vocab);
        c.corpus.len_lo = corpus.value("len_lo", c.corpus.len_lo);
        c.corpus.len_hi = corpus.value("len_hi", c.corpus.len_hi);
        c.corpus.classes = corpus.value("classes", c.corpus.classes);
        c.corpus.zipf_exponent = corpus.value("zipf_exponent", c.corpus.zipf_exponent);
        c.corpus.class_token_rate =
            corpus.value("class_token_rate", c.corpus.class_token_rate);
      }
    }
    c.dim = j.value("dim", c.dim);
    if (j.contains("scheme")) {
      const json& s = j["scheme"];
      c.scheme.kind = scheme_kind_from_string(s.value("kind", std::string("none")));
      c.scheme.t_count = s.value("t_count", c.scheme.t_count);
      c.scheme.m = s.value("m", c.scheme.m);
      c.scheme.r = s.value("r", c.scheme.r);
      c.scheme.freq_lo = s.value("freq_lo", c.scheme.freq_lo);
      c.scheme.freq_hi = s.value("freq_hi", c.scheme.freq_hi);
      c.scheme.wet_k = s.value("k", c.scheme.wet_k);
      c.scheme.wet_w = s.value("w", c.scheme.wet_w);
      c.scheme.wet_variant = s.value("variant", c.scheme.wet_variant);
    }
    if (j.contains("attack")) {
      const json& a = j["attack"];
      c.attack.kind = attacks::attack_kind_from_string(a.value("kind", std::string("none")));
      c.attack.paraphrases = a.value("paraphrases", c.attack.paraphrases);
      c.attack.resample_rate = a.value("resample_rate", c.attack.resample_rate);
      c.attack.filter_threshold = a.value("filter_threshold", c.attack.filter_threshold);
      c.attack.lambda = a.value("lambda", c.attack.lambda);
      c.attack.elim_rank = a.value("elim_rank", c.attack.elim_rank);
      if (a.contains("overwrite_matrix")) {
        c.attack.overwrite_matrix_path = a["overwrite_matrix"].get<std::string>();
      }
      c.attack.seed = a.value("seed", c.attack.seed);
    }
    const std::string attacker = j.value("attacker", std::string("surrogate"));
    if (attacker == "surrogate") {
      c.attacker = AttackerKind::kSurrogate;
    } else if (attacker == "identity") {
      c.attacker = AttackerKind::kIdentity;
    } else {
      throw ConfigError("unknown attacker '" + attacker + "'");
    }
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.surrogate_lambda = j.value("surrogate_lambda", c.surrogate_lambda);
    c.probe_lambda = j.value("probe_lambda", c.probe_lambda);
    c.probe_train = j.value("probe_train", c.probe_train);
    c.probe_test = j.value("probe_test", c.probe_test);
    c.verification_size = j.value("verification_size", c.verification_size);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return c;
}

ScenarioConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

namespace {

struct Pipeline {
  const ScenarioConfig& config;
  std::vector<TextRecord> corpus;
  std::unique_ptr<SyntheticOracle> oracle;
  std::shared_ptr<const triggers::TriggerScheme> scheme;
  std::shared_ptr<const wet::TransformMatrix> matrix;
  std::shared_ptr<const wet::TransformMatrix> matrix_alt;
  std::unique_ptr<wet::TransformMatrix> overwrite_matrix;
  attacks::EmbedFn victim;
  attacks::EmbedFn suspect;
  std::shared_ptr<const attacks::SurrogateAttacker> surrogate;
  EmbeddingSet train_embeddings;
  std::uint64_t feature_seed = 0;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void build_victim(Pipeline& p) {
  const ScenarioConfig& c = p.config;
  p.oracle = std::make_unique<SyntheticOracle>(c.dim, subseed(c.seed, "oracle"));
  const SyntheticOracle* oracle = p.oracle.get();
  switch (c.scheme.kind) {
    case SchemeKind::kNone:
      p.victim = [oracle](const TextRecord& t) { return oracle->embed(t); };
      break;
    case SchemeKind::kEmbMarker:
    case SchemeKind::kWarden: {
      const std::size_t r = c.scheme.kind == SchemeKind::kEmbMarker ? 1 : c.scheme.r;
      p.scheme = std::make_shared<const triggers::TriggerScheme>(
          triggers::make_scheme(p.corpus, c.scheme.t_count, c.scheme.m, r, c.dim,
                                c.scheme.freq_lo, c.scheme.freq_hi,
                                subseed(c.seed, "scheme")));
      const triggers::TriggerScheme* scheme = p.scheme.get();
      p.victim = [oracle, scheme](const TextRecord& t) {
        return triggers::inject_trigger_watermark(
            oracle->embed(t), triggers::poison_weight(t, *scheme), *scheme);
      };
      break;
    }
    case SchemeKind::kWet: {
      const std::size_t w = c.scheme.wet_w == 0 ? c.dim : c.scheme.wet_w;
      const wet::MatrixVariant variant =
          wet::variant_from_string(c.scheme.wet_variant);
      p.matrix = std::make_shared<const wet::TransformMatrix>(
          wet::generate_matrix(c.dim, w, c.scheme.wet_k, variant,
                               subseed(c.seed, "matrix")));
      p.matrix_alt = std::make_shared<const wet::TransformMatrix>(
          wet::generate_matrix(c.dim, w, c.scheme.wet_k, variant,
                               subseed(c.seed, "matrix-alt")));
      const wet::TransformMatrix* t = p.matrix.get();
      p.victim = [oracle, t](const TextRecord& rec) {
        return wet::inject_wet(oracle->embed(rec), *t);
      };
      break;
    }
  }
  // Verification with the wet pipeline needs a matrix even when the victim
  // itself carries no watermark (the non-watermark contrast case).
  if (c.scheme.kind == SchemeKind::kNone && !p.matrix) {
    const std::size_t w = c.scheme.wet_w == 0 ? c.dim : c.scheme.wet_w;
    p.matrix = std::make_shared<const wet::TransformMatrix>(
        wet::generate_matrix(c.dim, w, c.scheme.wet_k,
                             wet::variant_from_string(c.scheme.wet_variant),
                             subseed(c.seed, "matrix")));
  }
}

void build_training_embeddings(Pipeline& p) {
  const ScenarioConfig& c = p.config;
  const attacks::AttackScenario& a = c.attack;
  switch (a.kind) {
    case attacks::AttackKind::kNone: {
      EmbeddingSet set(0);
      for (const TextRecord& t : p.corpus) set.add(p.victim(t));
      p.train_embeddings = std::move(set);
      break;
    }
    case attacks::AttackKind::kParaphrase: {
      std::vector<std::vector<TextRecord>> paraphrases;
      paraphrases.reserve(p.corpus.size());
      for (const TextRecord& t : p.corpus) {
        paraphrases.push_back(
            attacks::synth_paraphrase(t, a.paraphrases, a.resample_rate, a.seed));
      }
      p.train_embeddings = attacks::paraphrase_attack(p.corpus, paraphrases,
                                                      p.victim, a.filter_threshold);
      break;
    }
    case attacks::AttackKind::kGaussianNoise: {
      EmbeddingSet set(0);
      for (const TextRecord& t : p.corpus) {
        set.add(attacks::gaussian_noise(p.victim(t), a.lambda, a.seed));
      }
      p.train_embeddings = std::move(set);
      break;
    }
    case attacks::AttackKind::kPcaEliminate: {
      EmbeddingSet set(0);
      for (const TextRecord& t : p.corpus) set.add(p.victim(t));
      p.train_embeddings = attacks::pca_eliminate(set, a.elim_rank);
      break;
    }
    case attacks::AttackKind::kOverwrite: {
      if (!p.overwrite_matrix) {
        const std::size_t w_dim = p.victim(p.corpus.front()).dim();
        p.overwrite_matrix = std::make_unique<wet::TransformMatrix>(
            a.overwrite_matrix_path
                ? wet::read_matrix(*a.overwrite_matrix_path)
                : wet::generate_matrix(w_dim, w_dim, 25,
                                       wet::MatrixVariant::kCirculant,
                                       subseed(a.seed, "overwrite")));
      }
      EmbeddingSet set(0);
      for (const TextRecord& t : p.corpus) {
        set.add(attacks::overwrite(p.victim(t), *p.overwrite_matrix));
      }
      p.train_embeddings = std::move(set);
      break;
    }
  }
}

void build_attacker(Pipeline& p) {
  const ScenarioConfig& c = p.config;
  p.feature_seed = subseed(c.seed, "features");
  if (c.attacker == AttackerKind::kSurrogate) {
    std::vector<attacks::TrainingPair> pairs;
    pairs.reserve(p.corpus.size());
    for (std::size_t i = 0; i < p.corpus.size(); ++i) {
      pairs.push_back({hash_features(p.corpus[i], c.feature_dim, p.feature_seed),
                       p.train_embeddings[i].vector});
    }
    p.surrogate = std::make_shared<const attacks::SurrogateAttacker>(
        attacks::train_surrogate(pairs, c.surrogate_lambda));
    const attacks::SurrogateAttacker* model = p.surrogate.get();
    const std::size_t f = c.feature_dim;
    const std::uint64_t fseed = p.feature_seed;
    p.suspect = [model, f, fseed](const TextRecord& t) {
      return model->predict(hash_features(t, f, fseed), t.id);
    };
    return;
  }
  // Identity attacker: serves the victim's (possibly attacked) output
  // per query. Only per-embedding attacks compose this way.
  const attacks::AttackScenario& a = c.attack;
  switch (a.kind) {
    case attacks::AttackKind::kNone:
      p.suspect = p.victim;
      break;
    case attacks::AttackKind::kGaussianNoise: {
      const attacks::EmbedFn victim = p.victim;
      const double lambda = a.lambda;
      const std::uint64_t seed = a.seed;
      p.suspect = [victim, lambda, seed](const TextRecord& t) {
        return attacks::gaussian_noise(victim(t), lambda, seed);
      };
      break;
    }
    case attacks::AttackKind::kOverwrite: {
      const attacks::EmbedFn victim = p.victim;
      const wet::TransformMatrix* a_matrix = p.overwrite_matrix.get();
      p.suspect = [victim, a_matrix](const TextRecord& t) {
        return attacks::overwrite(victim(t), *a_matrix);
      };
      break;
    }
    default:
      throw ConfigError("identity attacker supports none/gaussian_noise/overwrite");
  }
}

std::vector<metrics::ScoredSample> score_verification(Pipeline& p) {
  const ScenarioConfig& c = p.config;
  const std::uint64_t vseed = subseed(c.seed, "verify");
  std::vector<metrics::ScoredSample> scores;

  if (c.scheme.kind == SchemeKind::kEmbMarker || c.scheme.kind == SchemeKind::kWarden) {
    const triggers::TriggerVerificationSets sets =
        triggers::build_trigger_verification_sets(*p.scheme, p.corpus,
                                                  c.verification_size, vseed);
    const std::vector<double>& probe = p.scheme->probe_direction();
    for (const TextRecord& t : sets.backdoor) {
      scores.push_back({t.id, cosine(p.suspect(t).vector, probe),
                        metrics::Group::kPositive});
    }
    for (const TextRecord& t : sets.benign) {
      scores.push_back({t.id, cosine(p.suspect(t).vector, probe),
                        metrics::Group::kNegative});
    }
    return scores;
  }

  // WET-style verification: recover suspect embeddings through T+ and
  // compare against the victim's original (pre-watermark) embeddings.
  if (p.corpus.size() < 2 * c.verification_size) {
    throw InsufficientCandidatesError("need 2V corpus texts for verification",
                                      p.corpus.size());
  }
  std::vector<std::size_t> idx(p.corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(vseed);
  for (std::size_t i = 0; i < 2 * c.verification_size; ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }

  auto score_pair = [&](const TextRecord& text, const Embedding& suspect_emb,
                        metrics::Group group, const char* tag) {
    const Embedding e_o = p.oracle->embed(text);
    const std::vector<double> recovered = p.matrix->apply_pinv(suspect_emb.vector);
    double s = 0.0;
    if (norm2(recovered) >= 1e-12) s = cosine(recovered, e_o.vector);
    scores.push_back({tag + text.id, s, group});
  };

  for (std::size_t i = 0; i < c.verification_size; ++i) {
    const TextRecord& text = p.corpus[idx[i]];
    if (c.scheme.kind == SchemeKind::kWet) {
      // Did the suspect inherit the watermark?
      score_pair(text, p.suspect(text), metrics::Group::kPositive, "wm#");
    } else {
      // Non-watermark scenario: the positive route is the genuine
      // watermark path; the suspect provides the contrast below.
      score_pair(text, wet::inject_wet(p.oracle->embed(text), *p.matrix),
                 metrics::Group::kPositive, "wm#");
    }
  }
  for (std::size_t i = c.verification_size; i < 2 * c.verification_size; ++i) {
    const TextRecord& text = p.corpus[idx[i]];
    if (c.scheme.kind == SchemeKind::kWet) {
      // Contrast: embeddings watermarked with a different matrix.
      score_pair(text, wet::inject_wet(p.oracle->embed(text), *p.matrix_alt),
                 metrics::Group::kNegative, "ct#");
    } else {
      score_pair(text, p.suspect(text), metrics::Group::kNegative, "ct#");
    }
  }
  return scores;
}

std::optional<metrics::UtilityReport> run_probe(Pipeline& p) {
  const ScenarioConfig& c = p.config;
  bool labeled = !p.corpus.empty();
  for (const TextRecord& t : p.corpus) {
    if (!t.label) {
      labeled = false;
      break;
    }
  }
  if (!labeled) return std::nullopt;

  std::vector<std::size_t> idx(p.corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(subseed(c.seed, "probe-split"));
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::size_t n_train = c.probe_train == 0
                            ? p.corpus.size() * 4 / 5
                            : std::min(c.probe_train, p.corpus.size() * 4 / 5);
  std::size_t n_test = c.probe_test == 0 ? p.corpus.size() - n_train
                                         : std::min(c.probe_test,
                                                    p.corpus.size() - n_train);
  if (n_train == 0 || n_test == 0) return std::nullopt;

  auto labeled_embedding = [&](std::size_t corpus_index) {
    const TextRecord& t = p.corpus[corpus_index];
    return metrics::LabeledEmbedding{p.suspect(t).vector, *t.label};
  };
  std::vector<metrics::LabeledEmbedding> train, test;
  train.reserve(n_train);
  test.reserve(n_test);
  for (std::size_t i = 0; i < n_train; ++i) train.push_back(labeled_embedding(idx[i]));
  for (std::size_t i = 0; i < n_test; ++i) {
    test.push_back(labeled_embedding(idx[n_train + i]));
  }
  return metrics::utility_probe(train, test, c.probe_lambda);
}

void write_artifacts(const Pipeline& p, const ScenarioResult& result) {
  const ScenarioConfig& c = p.config;
  namespace fs = std::filesystem;
  fs::create_directories(c.out_dir);
  const fs::path dir(c.out_dir);

  json echo;
  const std::string config_json = config_to_json(c);
  echo["config"] = config_to_json_object(c);
  echo["config_hash"] = git_blob_hash(config_json);
  json inputs = json::object();
  if (!c.corpus_path.empty()) {
    inputs[c.corpus_path] = git_blob_hash_file(c.corpus_path);
  }
  if (c.attack.overwrite_matrix_path) {
    inputs[*c.attack.overwrite_matrix_path] =
        git_blob_hash_file(*c.attack.overwrite_matrix_path);
  }
  echo["inputs"] = inputs;
  std::ofstream echo_out(dir / "config_echo.json");
  echo_out << echo.dump(2) << '\n';

  if (c.corpus_path.empty()) write_corpus(p.corpus, (dir / "corpus.jsonl").string());
  if (!p.train_embeddings.empty()) {
    write_embeddings_binary(p.train_embeddings, (dir / "train_embeddings.emb").string());
  }
  if (p.scheme) triggers::write_scheme(*p.scheme, (dir / "scheme.json").string());
  if (p.matrix) wet::write_matrix(*p.matrix, (dir / "matrix.json").string());
  if (p.matrix_alt) {
    wet::write_matrix(*p.matrix_alt, (dir / "matrix_alt.json").string());
  }
  if (p.overwrite_matrix) {
    wet::write_matrix(*p.overwrite_matrix, (dir / "overwrite_matrix.json").string());
  }
  emit_report(result, (dir / "report.json").string(), "json");
  emit_report(result, (dir / "report.csv").string(), "csv");
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
  Pipeline p{config};

  stage("corpus", [&] {
    p.corpus = config.corpus_path.empty()
                   ? generate_corpus(config.corpus, config.seed)
                   : read_corpus(config.corpus_path);
    if (p.corpus.empty()) throw InvalidParamsError("corpus is empty");
    return 0;
  });
  stage("scheme", [&] {
    build_victim(p);
    return 0;
  });
  stage("attack", [&] {
    build_training_embeddings(p);
    return 0;
  });
  stage("attacker", [&] {
    build_attacker(p);
    return 0;
  });

  ScenarioResult result;
  stage("verification", [&] {
    result.verification = metrics::make_report(score_verification(p));
    double pos = 0.0, neg = 0.0;
    for (const metrics::ScoredSample& s : result.verification.scores) {
      (s.group == metrics::Group::kPositive ? pos : neg) += s.score;
    }
    result.mean_positive = pos / static_cast<double>(result.verification.positives);
    result.mean_negative = neg / static_cast<double>(result.verification.negatives);
    return 0;
  });
  stage("probe", [&] {
    result.utility = run_probe(p);
    return 0;
  });
  if (!config.out_dir.empty()) {
    stage("artifacts", [&] {
      write_artifacts(p, result);
      return 0;
    });
  }
  return result;
}

EmbeddingSet attacked_training_embeddings(const ScenarioConfig& config) {
  Pipeline p{config};
  stage("corpus", [&] {
    p.corpus = config.corpus_path.empty()
                   ? generate_corpus(config.corpus, config.seed)
                   : read_corpus(config.corpus_path);
    if (p.corpus.empty()) throw InvalidParamsError("corpus is empty");
    return 0;
  });
  stage("scheme", [&] {
    build_victim(p);
    return 0;
  });
  stage("attack", [&] {
    build_training_embeddings(p);
    return 0;
  });
  return std::move(p.train_embeddings);
}

std::string report_to_json(const ScenarioResult& result) {
  json j;
  j["delta_cos"] = result.verification.delta_cos;
  j["auc"] = result.verification.auc;
  if (result.utility) {
    j["acc"] = result.utility->acc;
    j["f1"] = result.utility->f1;
  } else {
    j["acc"] = nullptr;
    j["f1"] = nullptr;
  }
  json scores = json::array();
  for (const metrics::ScoredSample& s : result.verification.scores) {
    json row;
    row["id"] = s.id;
    row["score"] = s.score;
    row["group"] = s.group == metrics::Group::kPositive ? "positive" : "negative";
    scores.push_back(std::move(row));
  }
  j["scores"] = std::move(scores);
  return j.dump(2);
}

ScenarioResult report_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedError("report is not a JSON object");
  }
  ScenarioResult result;
  result.verification.delta_cos = j.value("delta_cos", 0.0);
  result.verification.auc = j.value("auc", 0.0);
  if (j.contains("acc") && !j["acc"].is_null()) {
    metrics::UtilityReport u;
    u.acc = j["acc"].get<double>();
    u.f1 = j.value("f1", 0.0);
    result.utility = u;
  }
  double pos = 0.0, neg = 0.0;
  for (const json& row : j.value("scores", json::array())) {
    metrics::ScoredSample s;
    s.id = row.value("id", std::string());
    s.score = row.value("score", 0.0);
    s.group = row.value("group", std::string()) == "positive"
                  ? metrics::Group::kPositive
                  : metrics::Group::kNegative;
    if (s.group == metrics::Group::kPositive) {
      ++result.verification.positives;
      pos += s.score;
    } else {
      ++result.verification.negatives;
      neg += s.score;
    }
    result.verification.scores.push_back(std::move(s));
  }
  if (result.verification.positives > 0) {
    result.mean_positive = pos / static_cast<double>(result.verification.positives);
  }
  if (result.verification.negatives > 0) {
    result.mean_negative = neg / static_cast<double>(result.verification.negatives);
  }
  return result;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

std::string report_to_csv(const ScenarioResult& result) {
  std::string out = "kind,key,value,group\n";
  if (result.verification.scores.empty()) return out;
  out += "meta,delta_cos," + format_double(result.verification.delta_cos) + ",\n";
  out += "meta,auc," + format_double(result.verification.auc) + ",\n";
  if (result.utility) {
    out += "meta,acc," + format_double(result.utility->acc) + ",\n";
    out += "meta,f1," + format_double(result.utility->f1) + ",\n";
  }
  for (const metrics::ScoredSample& s : result.verification.scores) {
    out += "score," + csv_escape(s.id) + "," + format_double(s.score) + "," +
           (s.group == metrics::Group::kPositive ? "positive" : "negative") + "\n";
  }
  return out;
}

ScenarioResult report_from_csv(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || csv_split(line).size() != 4) {
    throw MalformedError("missing CSV header");
  }
  ScenarioResult result;
  std::optional<double> acc, f1;
  double pos = 0.0, neg = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = csv_split(line);
    if (f.size() != 4) throw MalformedError("bad CSV row: " + line);
    if (f[0] == "meta") {
      const double v = parse_double(f[2]);
      if (f[1] == "delta_cos") result.verification.delta_cos = v;
      else if (f[1] == "auc") result.verification.auc = v;
      else if (f[1] == "acc") acc = v;
      else if (f[1] == "f1") f1 = v;
    } else if (f[0] == "score") {
      metrics::ScoredSample s;
      s.id = f[1];
      s.score = parse_double(f[2]);
      s.group = f[3] == "positive" ? metrics::Group::kPositive
                                   : metrics::Group::kNegative;
      if (s.group == metrics::Group::kPositive) {
        ++result.verification.positives;
        pos += s.score;
      } else {
        ++result.verification.negatives;
        neg += s.score;
      }
      result.verification.scores.push_back(std::move(s));
    } else {
      throw MalformedError("unknown CSV row kind '" + f[0] + "'");
    }
  }
  if (acc) {
    metrics::UtilityReport u;
    u.acc = *acc;
    u.f1 = f1.value_or(0.0);
    result.utility = u;
  }
  if (result.verification.positives > 0) {
    result.mean_positive = pos / static_cast<double>(result.verification.positives);
  }
  if (result.verification.negatives > 0) {
    result.mean_negative = neg / static_cast<double>(result.verification.negatives);
  }
  return result;
}

void emit_report(const ScenarioResult& result, const std::string& path,
                 const std::string& format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  if (format == "json") {
    out << report_to_json(result) << '\n';
  } else if (format == "csv") {
    out << report_to_csv(result);
  } else {
    throw InvalidParamsError("unknown report format '" + format + "'");
  }
  if (!out) throw IoError("write failed: " + path);
}

std::string git_blob_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string git_blob_hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return git_blob_hash(buffer.str());
}

}  // namespace harness
}  // namespace ewmark
