// Batch front end for the trace curation pipeline. Every subcommand reads
// JSONL artifacts, runs one stage, and writes artifacts with stable names
// under --out-dir so stages chain: curate -> score -> bucket -> project ->
// dataset -> eval.
//
// Exit codes: 0 success, 2 validation or usage error, 3 backend failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cag/backends.hpp"
#include "cag/calibration.hpp"
#include "cag/curation.hpp"
#include "cag/jsonl.hpp"
#include "cag/metrics.hpp"
#include "cag/parallel.hpp"
#include "cag/rewards.hpp"
#include "cag/trace.hpp"
#include "cag/verification.hpp"

namespace fs = std::filesystem;

namespace {

using cag::ojson;

// ---------------------------------------------------------------------------
// Options and configuration
// ---------------------------------------------------------------------------

struct CommonOpts {
  std::string config;
  std::uint64_t seed = 0;
  bool mock = false;
  std::string record;
  std::string replay;
  int workers = 1;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config,
                  "JSON config file; explicit flags override config values");
  cmd->add_option("--seed", o.seed, "deterministic RNG seed");
  cmd->add_flag("--mock", o.mock,
                "run against the deterministic in-process backends");
  cmd->add_option("--record", o.record,
                  "record backend traffic into this cassette file");
  cmd->add_option("--replay", o.replay,
                  "serve backend traffic from this cassette file");
  cmd->add_option("--workers", o.workers,
                  "upper bound on the internal worker pool");
  cmd->add_option("--out-dir", o.out_dir, "directory for output artifacts");
}

/// Resolved run settings: flags beat config, config beats defaults.
/// Environment variables supply credentials only (CAG_API_BASE as endpoint
/// fallback, CAG_API_KEY as the bearer token).
struct Settings {
  CommonOpts run;
  ojson cfg = ojson::object();
  std::string api_base;
  std::string api_key;
  std::string search_path = "/search";
  std::string model_judge = "judge";
  std::string model_verifier = "verifier";
  std::string model_projector = "projector";
  int evidence_top_k = 5;
  std::string verdicts_path;   // mock verifier fixture
  std::string corpus_path;     // mock search fixture
  std::string judgments_path;  // mock judge fixture
};

/// Paths inside a config file resolve relative to the config file itself,
/// so fixture-driven runs do not depend on the caller's cwd.
std::string resolve_config_path(const std::string& config_file,
                                const std::string& value) {
  if (value.empty()) return value;
  fs::path p(value);
  if (p.is_absolute()) return value;
  return (fs::path(config_file).parent_path() / p).lexically_normal().string();
}

Settings resolve(const CLI::App& cmd, const CommonOpts& opts) {
  Settings s;
  s.run = opts;
  if (!opts.config.empty()) {
    if (!fs::exists(opts.config))
      throw cag::Error("--config: no such file: " + opts.config);
    try {
      s.cfg = ojson::parse(cag::read_file(opts.config));
    } catch (const nlohmann::json::exception& e) {
      throw cag::Error("--config: " + opts.config + " is not valid JSON: " +
                       e.what());
    }
    if (!s.cfg.is_object())
      throw cag::Error("--config: " + opts.config + " must hold a JSON object");
  }

  const ojson& cfg = s.cfg;
  if (!cmd.count("--seed") && cfg.contains("seed"))
    s.run.seed = cfg.at("seed").get<std::uint64_t>();
  if (!cmd.count("--workers") && cfg.contains("workers"))
    s.run.workers = cfg.at("workers").get<int>();
  if (!cmd.count("--out-dir") && cfg.contains("out_dir"))
    s.run.out_dir = cfg.at("out_dir").get<std::string>();
  if (!cmd.count("--mock") && cfg.contains("mock"))
    s.run.mock = cfg.at("mock").get<bool>();
  if (s.run.workers < 1) throw cag::Error("--workers must be at least 1");
  if (!s.run.record.empty() && !s.run.replay.empty())
    throw cag::Error("--record and --replay are mutually exclusive");

  if (cfg.contains("api_base")) s.api_base = cfg.at("api_base").get<std::string>();
  if (cfg.contains("search_path"))
    s.search_path = cfg.at("search_path").get<std::string>();
  if (cfg.contains("api_key")) s.api_key = cfg.at("api_key").get<std::string>();
  if (const char* base = std::getenv("CAG_API_BASE"); base && s.api_base.empty())
    s.api_base = base;
  if (const char* key = std::getenv("CAG_API_KEY"); key && *key) s.api_key = key;

  if (cfg.contains("models")) {
    const ojson& m = cfg.at("models");
    if (m.contains("judge")) s.model_judge = m.at("judge").get<std::string>();
    if (m.contains("verifier"))
      s.model_verifier = m.at("verifier").get<std::string>();
    if (m.contains("projector"))
      s.model_projector = m.at("projector").get<std::string>();
  }
  if (cfg.contains("evidence_top_k"))
    s.evidence_top_k = cfg.at("evidence_top_k").get<int>();
  if (s.evidence_top_k < 1) throw cag::Error("evidence_top_k must be at least 1");

  if (cfg.contains("paths")) {
    const ojson& p = cfg.at("paths");
    if (p.contains("verdicts"))
      s.verdicts_path =
          resolve_config_path(opts.config, p.at("verdicts").get<std::string>());
    if (p.contains("search_corpus"))
      s.corpus_path = resolve_config_path(
          opts.config, p.at("search_corpus").get<std::string>());
    if (p.contains("judgments"))
      s.judgments_path =
          resolve_config_path(opts.config, p.at("judgments").get<std::string>());
  }
  return s;
}

/// Command-specific scalar: flag if set, else config key, else fallback.
template <typename T>
T pick(const CLI::App& cmd, const std::string& flag, const T& flag_value,
       const ojson& cfg, const std::string& key, const T& fallback) {
  if (cmd.count(flag)) return flag_value;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

void require_input(const std::string& flag, const std::string& path) {
  if (path.empty()) throw cag::Error(flag + " is required");
  if (!fs::exists(path))
    throw cag::Error(flag + ": no such file: " + path);
}

std::string artifact_path(const Settings& s, const std::string& name) {
  fs::create_directories(s.run.out_dir);
  return (fs::path(s.run.out_dir) / name).string();
}

void write_report(const std::string& path, const ojson& report) {
  cag::write_file(path, report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Backend wiring
// ---------------------------------------------------------------------------

/// Owns every live backend for one command run. `judge`, `projector` and
/// `search` point into the owner pools; they are cassette wrappers when
/// --record/--replay is active.
struct Backends {
  std::shared_ptr<cag::Cassette> cassette;
  std::vector<std::unique_ptr<cag::ChatBackend>> chat_pool;
  std::vector<std::unique_ptr<cag::SearchBackend>> search_pool;
  cag::ChatBackend* judge = nullptr;
  cag::ChatBackend* projector = nullptr;
  cag::ChatBackend* claim_chat = nullptr;
  cag::SearchBackend* search = nullptr;
  std::unique_ptr<cag::ClaimExtractionBackend> extractor;
  std::unique_ptr<cag::VerificationBackend> verifier;
};

std::unique_ptr<cag::ChatBackend> make_mock_judge(const Settings& s) {
  auto judge = std::make_unique<cag::ScriptedChatBackend>();
  ojson fallback = {{"factual_score", 5},
                    {"requires_factual_knowledge", 1},
                    {"explanation", "mock judgment"}};
  judge->set_default_response(fallback.dump());
  if (!s.judgments_path.empty()) {
    ojson rules;
    try {
      rules = ojson::parse(cag::read_file(s.judgments_path));
    } catch (const nlohmann::json::exception& e) {
      throw cag::Error("judgments fixture " + s.judgments_path +
                       " is not valid JSON: " + e.what());
    }
    for (const ojson& rule : rules) {
      ojson reply = {{"factual_score", rule.at("factual_score").get<int>()},
                     {"requires_factual_knowledge",
                      rule.at("requires_factual_knowledge").get<int>()},
                     {"explanation", "mock judgment"}};
      judge->script_contains(rule.at("match").get<std::string>(), reply.dump());
    }
  }
  return judge;
}

Backends build_backends(const Settings& s) {
  Backends b;
  if (!s.run.record.empty())
    b.cassette = std::make_shared<cag::Cassette>(cag::CassetteMode::Record,
                                                 s.run.record);
  else if (!s.run.replay.empty())
    b.cassette = std::make_shared<cag::Cassette>(cag::CassetteMode::Replay,
                                                 s.run.replay);
  const bool replaying =
      b.cassette && b.cassette->mode() == cag::CassetteMode::Replay;

  cag::ChatBackend* inner_judge = nullptr;
  cag::ChatBackend* inner_projector = nullptr;
  cag::ChatBackend* inner_claim = nullptr;
  cag::SearchBackend* inner_search = nullptr;

  if (s.run.mock) {
    auto judge = make_mock_judge(s);
    inner_judge = judge.get();
    b.chat_pool.push_back(std::move(judge));
    auto projector = std::make_unique<cag::ReferenceProjectionChatBackend>();
    inner_projector = projector.get();
    b.chat_pool.push_back(std::move(projector));
    auto search =
        s.corpus_path.empty()
            ? std::make_unique<cag::MockSearchBackend>()
            : std::make_unique<cag::MockSearchBackend>(
                  cag::MockSearchBackend::from_json_file(s.corpus_path));
    inner_search = search.get();
    b.search_pool.push_back(std::move(search));
  } else if (!replaying) {
    if (s.api_base.empty())
      throw cag::Error(
          "no endpoint configured: set api_base in --config or CAG_API_BASE "
          "(or pass --mock)");
    cag::BackendPolicy policy;
    policy.max_concurrency = s.run.workers;
    auto judge = std::make_unique<cag::HttpChatBackend>(s.api_base, s.api_key,
                                                        policy);
    inner_judge = judge.get();
    b.chat_pool.push_back(std::move(judge));
    auto projector = std::make_unique<cag::HttpChatBackend>(s.api_base,
                                                            s.api_key, policy);
    inner_projector = projector.get();
    b.chat_pool.push_back(std::move(projector));
    auto claim = std::make_unique<cag::HttpChatBackend>(s.api_base, s.api_key,
                                                        policy);
    inner_claim = claim.get();
    b.chat_pool.push_back(std::move(claim));
    auto search = std::make_unique<cag::HttpSearchBackend>(
        s.api_base, s.search_path, policy);
    inner_search = search.get();
    b.search_pool.push_back(std::move(search));
  }

  if (b.cassette) {
    auto judge = std::make_unique<cag::RecordReplayChat>(b.cassette, inner_judge);
    b.judge = judge.get();
    b.chat_pool.push_back(std::move(judge));
    auto projector =
        std::make_unique<cag::RecordReplayChat>(b.cassette, inner_projector);
    b.projector = projector.get();
    b.chat_pool.push_back(std::move(projector));
    // Mock runs have no chat-based claim pipeline to wrap; replay runs
    // need the wrapper even without an inner backend.
    if (inner_claim || replaying) {
      auto claim =
          std::make_unique<cag::RecordReplayChat>(b.cassette, inner_claim);
      b.claim_chat = claim.get();
      b.chat_pool.push_back(std::move(claim));
    }
    auto search =
        std::make_unique<cag::RecordReplaySearch>(b.cassette, inner_search);
    b.search = search.get();
    b.search_pool.push_back(std::move(search));
  } else {
    b.judge = inner_judge;
    b.projector = inner_projector;
    b.claim_chat = inner_claim;
    b.search = inner_search;
  }

  if (s.run.mock) {
    b.extractor = std::make_unique<cag::MockClaimExtractor>();
    b.verifier =
        s.verdicts_path.empty()
            ? std::make_unique<cag::MockClaimVerifier>()
            : std::make_unique<cag::MockClaimVerifier>(
                  cag::MockClaimVerifier::from_json_file(s.verdicts_path));
  } else {
    b.extractor = std::make_unique<cag::ChatClaimExtractor>(*b.claim_chat,
                                                            s.model_verifier);
    b.verifier = std::make_unique<cag::ChatClaimVerifier>(*b.claim_chat,
                                                          s.model_verifier);
  }
  return b;
}

std::vector<cag::AnnotatedTrace> read_traces(const std::string& flag,
                                             const std::string& path) {
  require_input(flag, path);
  std::vector<cag::AnnotatedTrace> traces;
  for (const ojson& record : cag::read_jsonl(path))
    traces.push_back(cag::trace_from_json(record));
  return traces;
}

void write_traces(const std::string& path,
                  const std::vector<cag::AnnotatedTrace>& traces) {
  std::vector<ojson> records;
  records.reserve(traces.size());
  for (const cag::AnnotatedTrace& trace : traces)
    records.push_back(cag::trace_to_json(trace));
  cag::write_jsonl(path, records);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct CurateOpts {
  CommonOpts common;
  std::string prompts;
  int keep_threshold = 4;
};

void run_curate(const CLI::App& cmd, const CurateOpts& o) {
  Settings s = resolve(cmd, o.common);
  const int keep_threshold = pick(cmd, "--keep-threshold", o.keep_threshold,
                                  s.cfg, "keep_threshold", 4);
  if (keep_threshold < 0 || keep_threshold > 5)
    throw cag::Error("--keep-threshold must lie in 0..5");
  require_input("--prompts", o.prompts);

  std::vector<cag::Query> prompts;
  for (const ojson& record : cag::read_jsonl(o.prompts))
    prompts.push_back({record.at("id").get<std::string>(),
                       record.at("text").get<std::string>()});

  Backends b = build_backends(s);
  auto results = cag::parallel_map(
      prompts, s.run.workers, [&](const cag::Query& prompt) {
        return cag::filter_prompt(prompt, *b.judge, s.model_judge,
                                  keep_threshold);
      });

  std::vector<ojson> kept;
  for (size_t i = 0; i < prompts.size(); ++i) {
    if (!results[i].keep) continue;
    kept.push_back({{"id", prompts[i].id},
                    {"text", prompts[i].text},
                    {"factual_score", results[i].factual_score},
                    {"requires_knowledge", results[i].requires_knowledge}});
  }
  const std::string out = artifact_path(s, "kept.jsonl");
  cag::write_jsonl(out, kept);
  std::cout << "kept " << kept.size() << " of " << prompts.size()
            << " prompts -> " << out << "\n";
}

struct ScoreOpts {
  CommonOpts common;
  std::string traces;
};

void run_score(const CLI::App& cmd, const ScoreOpts& o) {
  Settings s = resolve(cmd, o.common);
  std::vector<cag::AnnotatedTrace> traces = read_traces("--traces", o.traces);
  Backends b = build_backends(s);
  cag::ScoringOptions options{s.evidence_top_k};
  auto scored = cag::parallel_map(
      traces, s.run.workers, [&](const cag::AnnotatedTrace& trace) {
        return cag::score_trace(trace, *b.extractor, *b.search, *b.verifier,
                                options);
      });
  const std::string out = artifact_path(s, "scored.jsonl");
  write_traces(out, scored);
  std::cout << "scored " << scored.size() << " traces -> " << out << "\n";
}

struct BucketOpts {
  CommonOpts common;
  std::string scored;
  double tau = 0.5;
  std::string grid_table;
};

void run_bucket(const CLI::App& cmd, const BucketOpts& o) {
  Settings s = resolve(cmd, o.common);
  std::string scored_path = o.scored.empty()
                                ? (fs::path(s.run.out_dir) / "scored.jsonl").string()
                                : o.scored;
  require_input("--scored", scored_path);
  if (cmd.count("--tau") && cmd.count("--grid-table"))
    throw cag::Error("--tau and --grid-table are mutually exclusive");

  double tau;
  std::optional<cag::GridSearchResult> grid;
  if (cmd.count("--grid-table")) {
    require_input("--grid-table", o.grid_table);
    ojson table;
    try {
      table = ojson::parse(cag::read_file(o.grid_table));
    } catch (const nlohmann::json::exception& e) {
      throw cag::Error("--grid-table: not valid JSON: " + std::string(e.what()));
    }
    std::vector<double> candidates;
    std::vector<double> scores;
    if (table.is_object()) {
      for (const auto& [key, value] : table.items()) {
        candidates.push_back(std::stod(key));
        scores.push_back(value.get<double>());
      }
    } else if (table.is_array()) {
      for (const ojson& row : table) {
        candidates.push_back(row.at("threshold").get<double>());
        scores.push_back(row.at("score").get<double>());
      }
    } else {
      throw cag::Error("--grid-table must hold a JSON object or array");
    }
    size_t cursor = 0;
    grid = cag::grid_search_threshold(candidates, [&](double) {
      return scores[cursor++];
    });
    tau = grid->best_threshold;
  } else {
    tau = pick(cmd, "--tau", o.tau, s.cfg, "tau", 0.5);
  }
  if (!(tau > 0 && tau < 1)) throw cag::Error("--tau must lie in (0,1)");

  const cag::BucketScheme scheme = cag::BucketScheme::binary(tau);
  std::vector<cag::AnnotatedTrace> traces = read_traces("--scored", scored_path);
  std::vector<ojson> records;
  records.reserve(traces.size());
  for (cag::AnnotatedTrace& trace : traces)
    records.push_back(cag::trace_to_json(cag::bucket_trace(std::move(trace), scheme)));
  const std::string out = artifact_path(s, "labeled.jsonl");
  cag::write_jsonl(out, records);

  if (grid) {
    ojson table = ojson::array();
    for (const auto& [threshold, score] : grid->table)
      table.push_back({{"threshold", threshold}, {"score", score}});
    write_report(artifact_path(s, "grid.json"),
                 {{"best_threshold", grid->best_threshold}, {"table", table}});
  }
  std::cout << "labeled " << records.size() << " traces at tau " << tau
            << " -> " << out << "\n";
}

struct ProjectOpts {
  CommonOpts common;
  std::string labeled;
};

void run_project(const CLI::App& cmd, const ProjectOpts& o) {
  Settings s = resolve(cmd, o.common);
  std::string labeled_path =
      o.labeled.empty() ? (fs::path(s.run.out_dir) / "labeled.jsonl").string()
                        : o.labeled;
  std::vector<cag::AnnotatedTrace> traces =
      read_traces("--labeled", labeled_path);
  Backends b = build_backends(s);
  cag::ScoringOptions options{s.evidence_top_k};

  struct Row {
    cag::AnnotatedTrace trace;
    ojson report;
  };
  auto rows = cag::parallel_map(
      traces, s.run.workers, [&](const cag::AnnotatedTrace& input) {
        Row row;
        row.trace = input;
        row.trace.projected_answer =
            cag::project_answer(input, *b.projector, s.model_projector);
        row.report["id"] = input.query.id;
        if (row.trace.projected_answer->empty()) {
          row.report["empty_projection"] = true;
        } else {
          cag::ProjectionReport report = cag::check_projection(
              input, *row.trace.projected_answer, *b.extractor, *b.search,
              *b.verifier, options);
          row.report["pre_factuality"] = report.pre_factuality;
          row.report["post_factuality"] = report.post_factuality;
          row.report["fully_supported"] = report.fully_supported;
          row.report["unreliable_leakage"] = report.unreliable_leakage;
        }
        return row;
      });

  std::vector<cag::AnnotatedTrace> projected;
  std::vector<ojson> reports;
  for (Row& row : rows) {
    projected.push_back(std::move(row.trace));
    reports.push_back(std::move(row.report));
  }
  const std::string out = artifact_path(s, "projected.jsonl");
  write_traces(out, projected);
  cag::write_jsonl(artifact_path(s, "reports.jsonl"), reports);
  std::cout << "projected " << projected.size() << " traces -> " << out << "\n";
}

struct DatasetOpts {
  CommonOpts common;
  std::string projected;
};

void run_dataset(const CLI::App& cmd, const DatasetOpts& o) {
  Settings s = resolve(cmd, o.common);
  std::string projected_path =
      o.projected.empty()
          ? (fs::path(s.run.out_dir) / "projected.jsonl").string()
          : o.projected;
  std::vector<cag::AnnotatedTrace> traces =
      read_traces("--projected", projected_path);

  std::vector<cag::TrainingTuple> tuples;
  long rejected = 0;
  for (const cag::AnnotatedTrace& trace : traces) {
    try {
      tuples.push_back(cag::make_training_tuple(trace));
    } catch (const cag::InvalidTuple&) {
      ++rejected;
    }
  }
  const std::string out = artifact_path(s, "dataset.jsonl");
  const long written = cag::emit_cass_dataset(tuples, out);
  std::cout << "wrote " << written << " tuples (" << rejected
            << " rejected) -> " << out << "\n";
}

struct EvalOpts {
  CommonOpts common;
  std::string responses;
  double k = 0;
};

void run_eval(const CLI::App& cmd, const EvalOpts& o) {
  Settings s = resolve(cmd, o.common);
  require_input("--responses", o.responses);

  struct Response {
    std::string id;
    long supported = 0;
    long total = 0;
  };
  std::vector<Response> responses;
  for (const ojson& record : cag::read_jsonl(o.responses))
    responses.push_back({record.at("id").get<std::string>(),
                         record.at("supported").get<long>(),
                         record.at("total_claims").get<long>()});
  if (responses.empty()) throw cag::Error("--responses: file holds no records");

  double k;
  if (cmd.count("--k")) {
    k = o.k;
    if (!(k > 0)) throw cag::Error("--k must be positive");
  } else {
    std::vector<long> counts;
    counts.reserve(responses.size());
    for (const Response& r : responses) counts.push_back(r.supported);
    k = cag::estimate_k(counts);
  }

  ojson rows = ojson::array();
  double mean_p = 0, mean_r = 0, mean_f1 = 0;
  for (const Response& r : responses) {
    cag::VeriScoreResult v = cag::veriscore(r.supported, r.total, k);
    rows.push_back({{"id", r.id},
                    {"supported", v.supported},
                    {"total_claims", v.total_claims},
                    {"precision", v.precision},
                    {"recall", v.recall},
                    {"f1", v.f1}});
    mean_p += v.precision;
    mean_r += v.recall;
    mean_f1 += v.f1;
  }
  const double n = static_cast<double>(responses.size());
  ojson report = {{"k", k},
                  {"count", responses.size()},
                  {"mean_precision", mean_p / n},
                  {"mean_recall", mean_r / n},
                  {"mean_f1", mean_f1 / n},
                  {"responses", rows}};
  const std::string out = artifact_path(s, "eval.json");
  write_report(out, report);
  std::cout << report.dump(2) << "\n";
}

struct RewardsOpts {
  CommonOpts common;
  std::string rollouts;
};

void run_rewards(const CLI::App& cmd, const RewardsOpts& o) {
  Settings s = resolve(cmd, o.common);
  require_input("--rollouts", o.rollouts);
  std::vector<ojson> records;
  for (const ojson& record : cag::read_jsonl(o.rollouts)) {
    cag::GroupRollout rollout = cag::rollout_from_json(record);
    rollout.advantages = cag::group_advantages(rollout.rewards);
    records.push_back(cag::rollout_to_json(rollout));
  }
  const std::string out = artifact_path(s, "advantages.jsonl");
  cag::write_jsonl(out, records);
  std::cout << "attached advantages to " << records.size() << " groups -> "
            << out << "\n";
}

struct RegretOpts {
  CommonOpts common;
  double u1 = 1;
  double u2 = 1;
  double epsilon = 0;
  long trials = 100000;
};

void run_simulate_regret(const CLI::App& cmd, const RegretOpts& o) {
  Settings s = resolve(cmd, o.common);
  const double u1 = pick(cmd, "--u1", o.u1, s.cfg, "u1", 1.0);
  const double u2 = pick(cmd, "--u2", o.u2, s.cfg, "u2", 1.0);
  if (!(u1 > 0) || !(u2 > 0))
    throw cag::Error("--u1 and --u2 must be positive");
  if (o.epsilon < 0) throw cag::Error("--epsilon must be nonnegative");
  if (o.trials < 1) throw cag::Error("--trials must be at least 1");

  cag::DecisionConfig config{u1, u2, o.epsilon};
  cag::RegretReport report = cag::simulate_regret(config, o.trials, s.run.seed);
  ojson j = {{"u1", u1},
             {"u2", u2},
             {"epsilon", o.epsilon},
             {"tau_star", cag::bayes_threshold(u1, u2)},
             {"seed", s.run.seed},
             {"trials", report.trials},
             {"max_regret", report.max_regret},
             {"bound", report.bound},
             {"violations", report.violations}};
  write_report(artifact_path(s, "regret.json"), j);
  std::cout << j.dump(2) << "\n";
}

struct AucOpts {
  CommonOpts common;
  std::string pairs;
};

void run_analyze_auc(const CLI::App& cmd, const AucOpts& o) {
  Settings s = resolve(cmd, o.common);
  require_input("--pairs", o.pairs);
  std::vector<std::pair<double, bool>> pairs;
  long positives = 0;
  for (const ojson& record : cag::read_jsonl(o.pairs)) {
    const bool positive = record.at("positive").get<bool>();
    pairs.emplace_back(record.at("score").get<double>(), positive);
    if (positive) ++positives;
  }
  const double value = cag::auc(pairs);
  ojson report = {{"auc", value},
                  {"pairs", pairs.size()},
                  {"positives", positives},
                  {"negatives", static_cast<long>(pairs.size()) - positives}};
  write_report(artifact_path(s, "auc.json"), report);
  std::cout << report.dump(2) << "\n";
}

struct InterveneOpts {
  CommonOpts common;
  std::string labeled;
  double lambda = 0;
  std::string direction = "unrel-to-rel";
};

void run_analyze_intervene(const CLI::App& cmd, const InterveneOpts& o) {
  Settings s = resolve(cmd, o.common);
  std::string labeled_path =
      o.labeled.empty() ? (fs::path(s.run.out_dir) / "labeled.jsonl").string()
                        : o.labeled;
  if (!(o.lambda >= 0 && o.lambda <= 1))
    throw cag::Error("--lambda must lie in [0,1]");
  cag::FlipDirection direction;
  try {
    direction = cag::flip_direction_from_name(o.direction);
  } catch (const cag::Error&) {
    throw cag::Error("--direction must be unrel-to-rel or rel-to-unrel");
  }

  std::vector<cag::AnnotatedTrace> traces =
      read_traces("--labeled", labeled_path);
  ojson rows = ojson::array();
  long flipped_total = 0;
  double token_total = 0;
  for (size_t i = 0; i < traces.size(); ++i) {
    // Per-trace seeds derive from --seed so flips stay independent across
    // traces yet reproducible run to run.
    cag::InterventionConfig config{o.lambda, direction,
                                   s.run.seed + static_cast<std::uint64_t>(i)};
    cag::AnnotatedTrace flipped = cag::flip_labels(traces[i], config);
    long flips = 0;
    for (size_t j = 0; j < flipped.steps.size(); ++j)
      if (flipped.steps[j].label != traces[i].steps[j].label) ++flips;
    const std::string projected = cag::mock_project_answer(flipped);
    const long tokens = cag::approx_token_count(projected);
    flipped_total += flips;
    token_total += static_cast<double>(tokens);
    rows.push_back({{"id", traces[i].query.id},
                    {"flipped_steps", flips},
                    {"projected_tokens", tokens}});
  }
  if (traces.empty()) throw cag::Error("--labeled: file holds no records");
  ojson report = {{"lambda", o.lambda},
                  {"direction", o.direction},
                  {"seed", s.run.seed},
                  {"traces", traces.size()},
                  {"flipped_steps", flipped_total},
                  {"mean_projected_tokens",
                   token_total / static_cast<double>(traces.size())},
                  {"per_trace", rows}};
  write_report(artifact_path(s, "intervene.json"), report);
  std::cout << report.dump(2) << "\n";
}

struct EfficiencyOpts {
  CommonOpts common;
  std::string baseline;
  std::string treated;
  bool approx_tokens = false;
  bool use_projected = false;
};

void run_analyze_efficiency(const CLI::App& cmd, const EfficiencyOpts& o) {
  Settings s = resolve(cmd, o.common);
  std::vector<cag::AnnotatedTrace> baseline =
      read_traces("--baseline", o.baseline);
  std::vector<cag::AnnotatedTrace> treated = read_traces("--treated", o.treated);
  if (o.approx_tokens) {
    for (cag::AnnotatedTrace& trace : baseline)
      if (!trace.decode_stats)
        trace.decode_stats = cag::whitespace_decode_stats(trace, false);
    for (cag::AnnotatedTrace& trace : treated)
      if (!trace.decode_stats)
        trace.decode_stats = cag::whitespace_decode_stats(trace, o.use_projected);
  }
  cag::EfficiencyDelta delta =
      cag::efficiency_stats(baseline, treated, o.approx_tokens);
  ojson report = {{"think_delta", delta.think_delta},
                  {"answer_delta", delta.answer_delta},
                  {"total_delta", delta.total_delta},
                  {"time_delta", delta.time_delta},
                  {"approximate_tokens", delta.approximate_tokens}};
  write_report(artifact_path(s, "efficiency.json"), report);
  std::cout << report.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibration-aware trace curation pipeline"};
  app.require_subcommand(1);

  auto curate = std::make_shared<CurateOpts>();
  CLI::App* curate_cmd =
      app.add_subcommand("curate", "filter prompts down to the kept list");
  add_common(curate_cmd, curate->common);
  curate_cmd->add_option("--prompts", curate->prompts,
                         "prompt JSONL ({id, text} per line)");
  curate_cmd->add_option("--keep-threshold", curate->keep_threshold,
                         "minimum factuality score a kept prompt needs (0..5)");
  curate_cmd->callback([curate, curate_cmd] { run_curate(*curate_cmd, *curate); });

  auto score = std::make_shared<ScoreOpts>();
  CLI::App* score_cmd = app.add_subcommand(
      "score", "attach per-step claims and factuality scores to traces");
  add_common(score_cmd, score->common);
  score_cmd->add_option("--traces", score->traces, "input trace JSONL");
  score_cmd->callback([score, score_cmd] { run_score(*score_cmd, *score); });

  auto bucket = std::make_shared<BucketOpts>();
  CLI::App* bucket_cmd = app.add_subcommand(
      "bucket", "map step scores to reliability labels at a threshold");
  add_common(bucket_cmd, bucket->common);
  bucket_cmd->add_option("--scored", bucket->scored,
                         "scored trace JSONL (defaults to <out-dir>/scored.jsonl)");
  bucket_cmd->add_option("--tau", bucket->tau, "reliability threshold in (0,1)");
  bucket_cmd->add_option(
      "--grid-table", bucket->grid_table,
      "JSON table of candidate thresholds and objective scores; the argmax "
      "becomes tau");
  bucket_cmd->callback([bucket, bucket_cmd] { run_bucket(*bucket_cmd, *bucket); });

  auto project = std::make_shared<ProjectOpts>();
  CLI::App* project_cmd = app.add_subcommand(
      "project", "rewrite answers onto reliable steps and check the result");
  add_common(project_cmd, project->common);
  project_cmd->add_option(
      "--labeled", project->labeled,
      "labeled trace JSONL (defaults to <out-dir>/labeled.jsonl)");
  project_cmd->callback(
      [project, project_cmd] { run_project(*project_cmd, *project); });

  auto dataset = std::make_shared<DatasetOpts>();
  CLI::App* dataset_cmd = app.add_subcommand(
      "dataset", "emit training tuples from projected traces");
  add_common(dataset_cmd, dataset->common);
  dataset_cmd->add_option(
      "--projected", dataset->projected,
      "projected trace JSONL (defaults to <out-dir>/projected.jsonl)");
  dataset_cmd->callback(
      [dataset, dataset_cmd] { run_dataset(*dataset_cmd, *dataset); });

  auto eval = std::make_shared<EvalOpts>();
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "score responses with claim-level precision, recall and F1");
  add_common(eval_cmd, eval->common);
  eval_cmd->add_option("--responses", eval->responses,
                       "response JSONL ({id, supported, total_claims})");
  eval_cmd->add_option(
      "--k", eval->k,
      "recall denominator; defaults to the median supported count");
  eval_cmd->callback([eval, eval_cmd] { run_eval(*eval_cmd, *eval); });

  auto rewards = std::make_shared<RewardsOpts>();
  CLI::App* rewards_cmd = app.add_subcommand(
      "rewards", "attach group-relative advantages to reward rollouts");
  add_common(rewards_cmd, rewards->common);
  rewards_cmd->add_option("--rollouts", rewards->rollouts,
                          "rollout JSONL ({prompt_id, rewards})");
  rewards_cmd->callback(
      [rewards, rewards_cmd] { run_rewards(*rewards_cmd, *rewards); });

  auto regret = std::make_shared<RegretOpts>();
  CLI::App* regret_cmd = app.add_subcommand(
      "simulate-regret", "check the decision-regret bound by simulation");
  add_common(regret_cmd, regret->common);
  regret_cmd->add_option("--u1", regret->u1, "utility of a correct commit");
  regret_cmd->add_option("--u2", regret->u2, "cost of an incorrect commit");
  regret_cmd->add_option("--epsilon", regret->epsilon,
                         "score error radius around the true probability");
  regret_cmd->add_option("--trials", regret->trials, "simulation trials");
  regret_cmd->callback(
      [regret, regret_cmd] { run_simulate_regret(*regret_cmd, *regret); });

  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "calibration and intervention reports");
  analyze_cmd->require_subcommand(1);

  auto auc = std::make_shared<AucOpts>();
  CLI::App* auc_cmd = analyze_cmd->add_subcommand(
      "auc", "rank-based AUC of scores against binary outcomes");
  add_common(auc_cmd, auc->common);
  auc_cmd->add_option("--pairs", auc->pairs,
                      "JSONL of {score, positive} records");
  auc_cmd->callback([auc, auc_cmd] { run_analyze_auc(*auc_cmd, *auc); });

  auto intervene = std::make_shared<InterveneOpts>();
  CLI::App* intervene_cmd = analyze_cmd->add_subcommand(
      "intervene", "randomly flip labels and measure projected-answer length");
  add_common(intervene_cmd, intervene->common);
  intervene_cmd->add_option(
      "--labeled", intervene->labeled,
      "labeled trace JSONL (defaults to <out-dir>/labeled.jsonl)");
  intervene_cmd->add_option("--lambda", intervene->lambda,
                            "flip probability in [0,1]");
  intervene_cmd->add_option("--direction", intervene->direction,
                            "unrel-to-rel or rel-to-unrel");
  intervene_cmd->callback([intervene, intervene_cmd] {
    run_analyze_intervene(*intervene_cmd, *intervene);
  });

  auto efficiency = std::make_shared<EfficiencyOpts>();
  CLI::App* efficiency_cmd = analyze_cmd->add_subcommand(
      "efficiency", "token and latency deltas between two trace groups");
  add_common(efficiency_cmd, efficiency->common);
  efficiency_cmd->add_option("--baseline", efficiency->baseline,
                             "baseline trace JSONL");
  efficiency_cmd->add_option("--treated", efficiency->treated,
                             "treated trace JSONL");
  efficiency_cmd->add_flag(
      "--approx-tokens", efficiency->approx_tokens,
      "synthesize whitespace token counts for traces lacking decode stats");
  efficiency_cmd->add_flag(
      "--use-projected", efficiency->use_projected,
      "count projected answers instead of originals when synthesizing");
  efficiency_cmd->callback([efficiency, efficiency_cmd] {
    run_analyze_efficiency(*efficiency_cmd, *efficiency);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const cag::AuthFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cag::BackendUnavailable& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cag::Timeout& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cag::CassetteMiss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
