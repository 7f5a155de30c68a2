// Command-line front end: generate corpora and matrices, inject watermarks,
// run attacks and verification scenarios, simulate dilution, and serve
// embedding backends over the wire protocol.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ewmark/attacks.hpp"
#include "ewmark/errors.hpp"
#include "ewmark/io.hpp"
#include "ewmark/scenario.hpp"
#include "ewmark/service.hpp"
#include "ewmark/synth.hpp"
#include "ewmark/trigger.hpp"
#include "ewmark/wet.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace ewmark;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_shutdown{false};
std::condition_variable g_shutdown_cv;
std::mutex g_shutdown_mutex;

void handle_signal(int) {
  g_shutdown.store(true);
  g_shutdown_cv.notify_all();
}

struct CommonOptions {
  std::string config_path;
  std::string out;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
};

harness::ScenarioConfig load_config(const CommonOptions& common) {
  if (common.config_path.empty()) {
    throw ConfigError("--config is required for this subcommand");
  }
  harness::ScenarioConfig config = harness::config_from_json_file(common.config_path);
  if (common.seed) config.seed = *common.seed;
  if (!common.out.empty()) config.out_dir = common.out;
  return config;
}

void print_summary(const harness::ScenarioResult& result) {
  std::cout << "delta_cos=" << result.verification.delta_cos
            << " auc=" << result.verification.auc;
  if (result.utility) {
    std::cout << " acc=" << result.utility->acc << " f1=" << result.utility->f1;
  }
  std::cout << " positives=" << result.verification.positives
            << " negatives=" << result.verification.negatives << '\n';
}

int cmd_gen_corpus(const harness::SyntheticCorpusSpec& spec, std::uint64_t seed,
                   const std::string& out) {
  const std::vector<TextRecord> corpus = harness::generate_corpus(spec, seed);
  write_corpus(corpus, out);
  std::cout << "wrote " << corpus.size() << " records to " << out << '\n';
  return kExitOk;
}

int cmd_gen_matrix(std::size_t n, std::size_t w, std::size_t k,
                   const std::string& variant, std::uint64_t seed,
                   const std::string& out, bool embed_values) {
  const wet::TransformMatrix t = wet::generate_matrix(
      n, w == 0 ? n : w, k, wet::variant_from_string(variant), seed);
  wet::write_matrix(t, out, embed_values);
  std::cout << "wrote " << t.w() << "x" << t.n() << " " << variant
            << " matrix to " << out << '\n';
  return kExitOk;
}

int cmd_diag_matrix(const std::string& path, double tol) {
  const wet::TransformMatrix t = wet::read_matrix(path);
  const wet::MatrixDiagnostics d = wet::diagnostics(t, tol);
  json j;
  j["n"] = t.n();
  j["w"] = t.w();
  j["k"] = t.k();
  j["variant"] = wet::to_string(t.variant());
  j["rank"] = d.rank;
  j["condition_number"] =
      std::isfinite(d.condition_number) ? json(d.condition_number) : json("inf");
  j["min_singular"] = d.min_singular;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_emit_embeddings(const harness::ScenarioConfig& config,
                        const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  const EmbeddingSet set = harness::attacked_training_embeddings(config);
  write_embeddings(set, out);
  std::cout << "wrote " << set.size() << " embeddings (dim " << set.dim()
            << ") to " << out << '\n';
  return kExitOk;
}

int cmd_verify_or_run(const harness::ScenarioConfig& config,
                      const CommonOptions& common) {
  const harness::ScenarioResult result = harness::run_scenario(config);
  print_summary(result);
  if (!common.out.empty() && config.out_dir.empty()) {
    harness::emit_report(result, common.out, common.format);
  }
  return kExitOk;
}

int cmd_simulate_dilution(double pt, std::size_t slen, std::size_t p,
                          std::size_t trials, std::uint64_t seed,
                          const std::string& grid_arg, const std::string& out,
                          const std::string& format) {
  attacks::DilutionModel model;
  model.p_t = pt;
  model.s_len = slen;
  model.p = p;
  model.trials = trials;

  std::vector<double> grid;
  std::stringstream ss(grid_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) grid.push_back(std::stod(item));
  }

  const attacks::DilutionAnalytic analytic = attacks::dilution_analytic(model);
  const attacks::DilutionEmpirical empirical =
      attacks::dilution_monte_carlo(model, seed, grid);

  json j;
  j["p_t"] = model.p_t;
  j["s_len"] = model.s_len;
  j["p"] = model.p;
  j["trials"] = model.trials;
  j["p_s_analytic"] = analytic.p_s;
  j["p_s_empirical"] = empirical.p_s;
  j["mean_q"] = empirical.mean_q;
  j["var_q"] = empirical.var_q;
  json rows = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    json row;
    row["a"] = grid[i];
    row["survival_single"] = analytic.survival_single(grid[i]);
    row["survival_averaged"] = analytic.survival_averaged(grid[i]);
    row["survival_empirical"] = empirical.survival[i];
    rows.push_back(std::move(row));
  }
  j["survival"] = std::move(rows);

  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw IoError("cannot open for writing: " + out);
    if (format == "csv") {
      f << "a,survival_single,survival_averaged,survival_empirical\n";
      for (const auto& row : j["survival"]) {
        f << row["a"].get<double>() << ',' << row["survival_single"].get<double>()
          << ',' << row["survival_averaged"].get<double>() << ','
          << row["survival_empirical"].get<double>() << '\n';
      }
    } else {
      f << j.dump(2) << '\n';
    }
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

struct ServeOptions {
  std::string backend = "synthetic";
  std::string host = "127.0.0.1";
  std::uint16_t port = 8700;
  std::size_t dim = 1536;
  std::uint64_t seed = 1;
  std::string file;         // file backend payload
  std::string scheme_file;  // trigger schemes
  std::string matrix_file;  // wet
};

int cmd_serve(const ServeOptions& opts) {
  eaas::BackendPtr backend;
  if (opts.backend == "synthetic") {
    backend = eaas::make_synthetic_backend(opts.dim, opts.seed);
  } else if (opts.backend == "file") {
    if (opts.file.empty()) throw ConfigError("file backend needs --file");
    backend = eaas::make_file_backend(read_embeddings(opts.file));
  } else if (opts.backend == "embmarker" || opts.backend == "warden") {
    if (opts.scheme_file.empty()) {
      throw ConfigError("trigger backends need --scheme-file");
    }
    auto scheme = std::make_shared<const triggers::TriggerScheme>(
        triggers::read_scheme(opts.scheme_file));
    backend = eaas::make_trigger_backend(
        eaas::make_synthetic_backend(scheme->dim(), opts.seed), std::move(scheme));
  } else if (opts.backend == "wet") {
    if (opts.matrix_file.empty()) throw ConfigError("wet backend needs --matrix");
    auto matrix = std::make_shared<const wet::TransformMatrix>(
        wet::read_matrix(opts.matrix_file));
    backend = eaas::make_wet_backend(
        eaas::make_synthetic_backend(matrix->n(), opts.seed), std::move(matrix));
  } else {
    throw ConfigError("unknown backend '" + opts.backend + "'");
  }

  auto service = std::make_shared<eaas::EmbeddingService>(std::move(backend));
  eaas::Server server(service, opts.host, opts.port);
  std::cout << "serving " << service->backend_name() << " (dim " << service->dim()
            << ") on " << opts.host << ":" << server.port() << '\n';

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::unique_lock lock(g_shutdown_mutex);
  g_shutdown_cv.wait(lock, [] { return g_shutdown.load(); });
  server.stop();
  std::cout << "served " << service->requests_served() << " embed requests\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embedding watermarking toolkit"};
  app.require_subcommand(1);

  CommonOptions common;

  // gen-corpus
  harness::SyntheticCorpusSpec corpus_spec;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "corpus.jsonl";
  auto* gen_corpus = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  gen_corpus->add_option("--out", gen_out, "output JSONL path");
  gen_corpus->add_option("--size", corpus_spec.size, "number of texts");
  gen_corpus->add_option("--vocab", corpus_spec.vocab, "vocabulary size");
  gen_corpus->add_option("--len-lo", corpus_spec.len_lo, "min tokens per text");
  gen_corpus->add_option("--len-hi", corpus_spec.len_hi, "max tokens per text");
  gen_corpus->add_option("--classes", corpus_spec.classes, "label classes");
  gen_corpus->add_option("--zipf", corpus_spec.zipf_exponent, "Zipf exponent");
  gen_corpus->add_option("--class-rate", corpus_spec.class_token_rate,
                         "class topic token rate");
  gen_corpus->add_option("--seed", gen_seed, "seed");

  // gen-matrix
  std::size_t mx_n = 1536, mx_w = 0, mx_k = 25;
  std::string mx_variant = "circulant", mx_out = "matrix.json";
  std::uint64_t mx_seed = 1;
  bool mx_values = false;
  auto* gen_matrix = app.add_subcommand("gen-matrix", "generate a transformation matrix");
  gen_matrix->add_option("--n", mx_n, "original dim");
  gen_matrix->add_option("--w", mx_w, "watermarked dim (0 = n)");
  gen_matrix->add_option("--k", mx_k, "non-zeros per row");
  gen_matrix->add_option("--variant", mx_variant, "matrix variant");
  gen_matrix->add_option("--seed", mx_seed, "seed");
  gen_matrix->add_option("--out", mx_out, "output JSON path");
  gen_matrix->add_flag("--embed-values", mx_values, "embed matrix values in the file");

  // diag-matrix
  std::string diag_path;
  double diag_tol = 0.0;
  auto* diag_matrix = app.add_subcommand("diag-matrix", "rank/condition diagnostics");
  diag_matrix->add_option("--matrix", diag_path, "matrix JSON path")->required();
  diag_matrix->add_option("--tol", diag_tol, "rank tolerance (0 = default)");

  // inject / attack share the scenario config
  auto add_common = [&common](CLI::App* cmd, bool with_format = true) {
    cmd->add_option("--config", common.config_path, "scenario config JSON");
    cmd->add_option("--out", common.out, "output path or directory");
    if (with_format) {
      cmd->add_option("--format", common.format, "json|csv")
          ->check(CLI::IsMember({"json", "csv"}));
    }
    cmd->add_option("--seed", common.seed, "override config seed");
  };

  auto* inject = app.add_subcommand(
      "inject", "write watermarked embeddings for a corpus (attack forced off)");
  add_common(inject, false);
  auto* attack = app.add_subcommand(
      "attack", "write the attacker's training embeddings for a scenario");
  add_common(attack, false);
  auto* verify = app.add_subcommand("verify", "run a scenario and emit its report");
  add_common(verify);
  auto* run = app.add_subcommand("run", "run a full scenario with artifacts");
  add_common(run);

  // simulate-dilution
  double dil_pt = 0.005;
  std::size_t dil_slen = 50, dil_p = 5, dil_trials = 1000000;
  std::uint64_t dil_seed = 1;
  std::string dil_grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::string dil_out, dil_format = "json";
  auto* dilution = app.add_subcommand("simulate-dilution",
                                      "analytic + Monte-Carlo dilution model");
  dilution->add_option("--pt", dil_pt, "per-token trigger probability");
  dilution->add_option("--slen", dil_slen, "sentence length");
  dilution->add_option("--p", dil_p, "paraphrase count");
  dilution->add_option("--trials", dil_trials, "Monte-Carlo trials");
  dilution->add_option("--seed", dil_seed, "seed");
  dilution->add_option("--grid", dil_grid, "comma-separated thresholds");
  dilution->add_option("--out", dil_out, "optional output file");
  dilution->add_option("--format", dil_format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));

  // serve
  ServeOptions serve_opts;
  auto* serve = app.add_subcommand("serve", "serve an embedding backend");
  serve->add_option("--backend", serve_opts.backend,
                    "synthetic|file|embmarker|warden|wet");
  serve->add_option("--host", serve_opts.host, "bind host");
  serve->add_option("--port", serve_opts.port, "bind port (0 = ephemeral)");
  serve->add_option("--dim", serve_opts.dim, "dim for synthetic backends");
  serve->add_option("--seed", serve_opts.seed, "oracle seed");
  serve->add_option("--file", serve_opts.file, "embedding file for the file backend");
  serve->add_option("--scheme-file", serve_opts.scheme_file, "trigger scheme JSON");
  serve->add_option("--matrix", serve_opts.matrix_file, "wet matrix JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_corpus->parsed()) return cmd_gen_corpus(corpus_spec, gen_seed, gen_out);
    if (gen_matrix->parsed()) {
      return cmd_gen_matrix(mx_n, mx_w, mx_k, mx_variant, mx_seed, mx_out, mx_values);
    }
    if (diag_matrix->parsed()) return cmd_diag_matrix(diag_path, diag_tol);
    if (inject->parsed()) {
      harness::ScenarioConfig config = load_config(common);
      config.attack.kind = attacks::AttackKind::kNone;
      config.out_dir.clear();
      return cmd_emit_embeddings(config, common.out);
    }
    if (attack->parsed()) {
      harness::ScenarioConfig config = load_config(common);
      config.out_dir.clear();
      return cmd_emit_embeddings(config, common.out);
    }
    if (verify->parsed()) {
      harness::ScenarioConfig config = load_config(common);
      config.out_dir.clear();
      return cmd_verify_or_run(config, common);
    }
    if (run->parsed()) {
      harness::ScenarioConfig config = load_config(common);
      if (config.out_dir.empty()) config.out_dir = common.out;
      if (config.out_dir.empty()) {
        throw ConfigError("run needs an output directory (--out or config out_dir)");
      }
      const harness::ScenarioResult result = harness::run_scenario(config);
      print_summary(result);
      return kExitOk;
    }
    if (dilution->parsed()) {
      return cmd_simulate_dilution(dil_pt, dil_slen, dil_p, dil_trials, dil_seed,
                                   dil_grid, dil_out, dil_format);
    }
    if (serve->parsed()) return cmd_serve(serve_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidParamsError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "stage failure " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
