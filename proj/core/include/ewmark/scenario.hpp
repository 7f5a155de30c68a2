#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ewmark/attacks.hpp"
#include "ewmark/metrics.hpp"
#include "ewmark/types.hpp"

namespace ewmark {
namespace harness {

// Synthetic corpus: Zipfian vocabulary, class-conditional topic words so a
// downstream probe has something to learn, uniform length band.
struct SyntheticCorpusSpec {
  std::size_t size = 2000;
  std::size_t vocab = 5000;
  std::size_t len_lo = 30;
  std::size_t len_hi = 70;
  std::size_t classes = 2;
  double zipf_exponent = 1.0;
  double class_token_rate = 0.30;  // fraction of slots drawn from class vocab
};

std::vector<TextRecord> generate_corpus(const SyntheticCorpusSpec& spec,
                                        std::uint64_t seed);

enum class SchemeKind { kNone, kEmbMarker, kWarden, kWet };
std::string to_string(SchemeKind k);
SchemeKind scheme_kind_from_string(const std::string& s);

enum class AttackerKind { kSurrogate, kIdentity };

struct SchemeSpec {
  SchemeKind kind = SchemeKind::kNone;
  // trigger schemes
  std::size_t t_count = 20;
  std::size_t m = 4;
  std::size_t r = 1;  // 1 = EmbMarker; WARDEN default 4
  double freq_lo = 0.005;
  double freq_hi = 0.01;
  // wet
  std::size_t wet_k = 25;
  std::size_t wet_w = 0;  // 0 = same as dim
  std::string wet_variant = "circulant";
};

struct ScenarioConfig {
  // corpus: path to JSONL, or empty to synthesize
  std::string corpus_path;
  SyntheticCorpusSpec corpus;

  std::size_t dim = 1536;
  SchemeSpec scheme;
  attacks::AttackScenario attack;
  AttackerKind attacker = AttackerKind::kSurrogate;

  std::size_t feature_dim = 2048;
  double surrogate_lambda = 1e-3;
  double probe_lambda = 1e-2;
  // Subset sizes for the utility probe (0 = use everything).
  std::size_t probe_train = 2000;
  std::size_t probe_test = 1000;

  std::size_t verification_size = 250;  // V
  std::uint64_t seed = 1;
  std::string out_dir;
};

ScenarioConfig config_from_json_file(const std::string& path);
ScenarioConfig config_from_json(const std::string& json_text);
std::string config_to_json(const ScenarioConfig& config);

struct ScenarioResult {
  metrics::VerificationReport verification;
  std::optional<metrics::UtilityReport> utility;
  // Scores averaged per group, for quick inspection.
  double mean_positive = 0.0;
  double mean_negative = 0.0;
};

// Full pipeline: victim setup -> watermark injection -> (optional) attack
// -> attacker model -> verification sets -> metrics. Artifacts (reports,
// embeddings, matrix/scheme metadata, config echo with input hashes) are
// written under config.out_dir when set. Deterministic: identical configs
// produce byte-identical reports.
ScenarioResult run_scenario(const ScenarioConfig& config);

// Runs only corpus -> victim -> attack and returns the embeddings the
// attacker would train on (the watermarked embeddings themselves when
// attack.kind is none).
EmbeddingSet attacked_training_embeddings(const ScenarioConfig& config);

// Report serialization. JSON:
//   {"delta_cos","auc","acc","f1","scores":[{"id","score","group"}]}
// CSV: one row per record,
//   kind,key,value,group   (kind "meta" for summary fields, "score" rows
// carry the per-sample scores). Numeric fields round-trip at full double
// precision in both formats.
std::string report_to_json(const ScenarioResult& result);
std::string report_to_csv(const ScenarioResult& result);
ScenarioResult report_from_json(const std::string& json_text);
ScenarioResult report_from_csv(const std::string& csv_text);

void emit_report(const ScenarioResult& result, const std::string& path,
                 const std::string& format);

// Git-style content hash (SHA-1 over "blob <len>\0<bytes>", hex).
std::string git_blob_hash(const std::string& bytes);
std::string git_blob_hash_file(const std::string& path);

}  // namespace harness
}  // namespace ewmark
