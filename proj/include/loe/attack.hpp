#ifndef LOE_ATTACK_HPP_
#define LOE_ATTACK_HPP_

// End-to-end orchestration: query campaign, per-layer alignment,
// extraction, scoring against the harness ground truth, report and
// manifest writing, condition sweeps, and artifact verification.
//
// The attack side (`align_and_extract`) consumes only revealed
// QueryRecords; scoring takes the ground truth separately.

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loe/align.hpp"
#include "loe/config.hpp"
#include "loe/eval.hpp"
#include "loe/extract.hpp"
#include "loe/io.hpp"
#include "loe/oracle.hpp"
#include "loe/transformer.hpp"

namespace loe::attack {

using json = nlohmann::ordered_json;

struct LayerKey {
  int layer = 0;
  std::string name; // qkv / o / h1 / h2
  std::string label() const { return "L" + std::to_string(layer) + "." + name; }
};

inline std::vector<LayerKey> layer_keys(const tfm::ModelConfig& cfg) {
  std::vector<LayerKey> keys;
  for (int l = 0; l < cfg.num_layers; ++l)
    for (const std::string& n : tfm::linear_names()) keys.push_back({l, n});
  return keys;
}

// Attack-side result for one linear layer.
struct LayerExtraction {
  LayerKey key;
  bool recoverable = true; // false when the oracle withheld one side
  align::AlignedDataset in_aligned, out_aligned;
  extract::AlignedSystem system;
  extract::ExtractedWeights weights;
};

inline std::vector<LayerExtraction> align_and_extract(
    const std::vector<oracle::QueryRecord>& records,
    const config::ExperimentConfig& cfg) {
  if (records.size() < 2) throw std::invalid_argument("align_and_extract: need >= 2 queries");
  std::vector<LayerExtraction> out;
  for (const LayerKey& key : layer_keys(cfg.model)) {
    LayerExtraction le;
    le.key = key;
    std::vector<Eigen::VectorXd> ins, outs;
    ins.reserve(records.size());
    outs.reserve(records.size());
    bool have_inputs = true;
    for (const auto& rec : records) {
      const oracle::RevealedLinear& lin = rec.linear(key.layer, key.name);
      if (!lin.input.has_value()) {
        have_inputs = false;
        break;
      }
      ins.push_back(*lin.input);
      outs.push_back(lin.output);
    }
    if (!have_inputs) {
      le.recoverable = false;
      out.push_back(std::move(le));
      continue;
    }
    le.in_aligned = align::align_dataset(ins, cfg.reference_index, cfg.solver);
    le.out_aligned = align::align_dataset(outs, cfg.reference_index, cfg.solver);
    le.system.layer = key.label();
    le.system.x_in = le.in_aligned.aligned;
    le.system.x_out = le.out_aligned.aligned;
    le.weights = extract::solve_weights(le.system, cfg.pinv);
    out.push_back(std::move(le));
  }
  return out;
}

// ---- scoring against ground truth ----

struct LayerScore {
  LayerKey key;
  bool recoverable = true;
  eval::AlignmentSideReport in_report, out_report;
  eval::WeightLayerReport weight_report;
};

struct AttackScores {
  std::vector<LayerScore> layers;
};

inline AttackScores score(const std::vector<LayerExtraction>& extractions,
                          const std::vector<io::QueryLog::TruthEntry>& truths,
                          const tfm::Model& model,
                          const config::ExperimentConfig& cfg) {
  AttackScores scores;
  auto layer_index = [&](const std::string& name) {
    const auto& names = tfm::linear_names();
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw std::invalid_argument("unknown linear layer: " + name);
  };
  for (const LayerExtraction& le : extractions) {
    LayerScore ls;
    ls.key = le.key;
    ls.recoverable = le.recoverable;
    ls.weight_report.layer = le.key.label();
    ls.weight_report.recoverable = le.recoverable;
    if (!le.recoverable) {
      scores.layers.push_back(std::move(ls));
      continue;
    }
    const std::size_t li = layer_index(le.key.name);
    std::vector<perm::Permutation> in_perms, out_perms;
    std::vector<Eigen::VectorXd> in_true, out_true;
    for (const auto& t : truths) {
      in_perms.push_back(t.perms[le.key.layer].in(le.key.name));
      out_perms.push_back(t.perms[le.key.layer].out(le.key.name));
      in_true.push_back(t.linear_io[le.key.layer][li].input);
      out_true.push_back(t.linear_io[le.key.layer][li].output);
    }
    ls.in_report = eval::alignment_metrics(le.in_aligned, in_perms, in_true);
    ls.out_report = eval::alignment_metrics(le.out_aligned, out_perms, out_true);
    ls.in_report.layer = ls.out_report.layer = le.key.label();
    ls.in_report.side = "input";
    ls.out_report.side = "output";

    const Eigen::MatrixXd& w = tfm::linear_weight(model.layers[le.key.layer], le.key.name);
    const std::size_t k = cfg.reference_index;
    const eval::L1Diff diff = eval::weight_l1(
        le.weights.w_prime, w, truths[k].perms[le.key.layer].in(le.key.name),
        truths[k].perms[le.key.layer].out(le.key.name));
    ls.weight_report.l1_mean = diff.mean;
    ls.weight_report.l1_max = diff.max;
    ls.weight_report.retained_rank = le.weights.retained_rank;
    ls.weight_report.condition_number =
        le.weights.sigma_min_retained > 0
            ? le.weights.sigma_max / le.weights.sigma_min_retained
            : std::numeric_limits<double>::infinity();
    scores.layers.push_back(std::move(ls));
  }
  return scores;
}

// ---- campaign ----

inline std::vector<int> prompt_for_query(const config::ExperimentConfig& cfg, int i) {
  std::vector<int> p = cfg.prompt;
  if (cfg.distinct_prompts) p.back() = (p.back() + i) % cfg.model.vocab_size;
  return p;
}

inline io::QueryLog run_campaign(const tfm::Model& model, const tfm::FxpModel& fm,
                                 const config::ExperimentConfig& cfg, int n_queries) {
  io::QueryLog log;
  fxp::Rng seeder(cfg.seed_oracle);
  for (int i = 0; i < n_queries; ++i) {
    fxp::Rng rng(seeder());
    auto [rec, truth] =
        oracle::query(model, fm, prompt_for_query(cfg, i), cfg.oracle, i, rng);
    io::QueryLog::TruthEntry te;
    te.query_id = truth.query_id;
    te.perms = std::move(truth.perms);
    te.linear_io.resize(model.cfg.num_layers);
    for (int l = 0; l < model.cfg.num_layers; ++l) {
      const auto& names = tfm::linear_names();
      for (std::size_t ni = 0; ni < names.size(); ++ni)
        te.linear_io[l][ni] = tfm::linear_io(truth.trace.layers[l], names[ni]);
    }
    log.records.push_back(std::move(rec));
    log.truths.push_back(std::move(te));
  }
  return log;
}

// ---- reports ----

inline std::string alignment_report_csv(const AttackScores& scores) {
  std::ostringstream os;
  os << "layer,side,correct_count,total,correct_rate,value_match_count,mse\n";
  for (const LayerScore& ls : scores.layers) {
    if (!ls.recoverable) {
      os << ls.key.label() << ",input,,,,,unrecoverable\n";
      continue;
    }
    for (const eval::AlignmentSideReport* r : {&ls.in_report, &ls.out_report}) {
      os << r->layer << "," << r->side << "," << io::fmt_double(r->correct_count) << ","
         << r->total << "," << io::fmt_double(r->correct_rate()) << ","
         << io::fmt_double(r->value_match_count) << "," << io::fmt_double(r->mse) << "\n";
    }
  }
  return os.str();
}

inline std::string weight_report_csv(const AttackScores& scores) {
  std::ostringstream os;
  os << "layer,recoverable,l1_mean,l1_max,retained_rank,condition_number\n";
  for (const LayerScore& ls : scores.layers) {
    if (!ls.recoverable) {
      os << ls.key.label() << ",false,,,,\n";
      continue;
    }
    const eval::WeightLayerReport& r = ls.weight_report;
    os << r.layer << ",true," << io::fmt_double(r.l1_mean) << ","
       << io::fmt_double(r.l1_max) << "," << r.retained_rank << ","
       << io::fmt_double(r.condition_number) << "\n";
  }
  return os.str();
}

inline std::string sweep_report_csv(const std::vector<eval::SweepReport>& reports) {
  std::ostringstream os;
  os << "layer,condition_cap,l1_mean\n";
  for (const auto& rep : reports)
    for (const auto& pt : rep.points)
      os << rep.layer << "," << io::fmt_double(pt.condition_cap) << ","
         << io::fmt_double(pt.l1_mean) << "\n";
  return os.str();
}

inline json summary_json(const AttackScores& scores, const config::ExperimentConfig& cfg) {
  json j;
  j["config_hash"] = io::fnv1a(config::canonical_config(cfg));
  j["n_queries"] = cfg.effective_n_queries();
  j["condition_cap"] = cfg.pinv.condition_cap;
  j["precision_bits"] = cfg.oracle.fxp.precision_bits;
  json layers = json::array();
  for (const LayerScore& ls : scores.layers) {
    json l;
    l["layer"] = ls.key.label();
    l["recoverable"] = ls.recoverable;
    if (ls.recoverable) {
      l["input_correct_rate"] = ls.in_report.correct_rate();
      l["output_correct_rate"] = ls.out_report.correct_rate();
      l["input_mse"] = ls.in_report.mse;
      l["output_mse"] = ls.out_report.mse;
      l["l1_mean"] = ls.weight_report.l1_mean;
      l["l1_max"] = ls.weight_report.l1_max;
      l["retained_rank"] = ls.weight_report.retained_rank;
    }
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  return j;
}

// ---- manifests and top-level commands ----

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string created;
  std::map<std::string, std::string> files;       // logical name -> path
  std::map<std::string, std::uint64_t> file_hashes;
  std::map<std::string, double> durations_ms;
  std::string config_text;
};

inline json manifest_json(const RunManifest& m) {
  json j;
  j["config_hash"] = m.config_hash;
  j["created"] = m.created;
  j["files"] = m.files;
  j["file_hashes"] = m.file_hashes;
  j["durations_ms"] = m.durations_ms;
  j["config"] = m.config_text;
  return j;
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::uint64_t>();
  m.created = j.at("created").get<std::string>();
  m.files = j.at("files").get<std::map<std::string, std::string>>();
  m.file_hashes = j.at("file_hashes").get<std::map<std::string, std::uint64_t>>();
  m.durations_ms = j.at("durations_ms").get<std::map<std::string, double>>();
  m.config_text = j.at("config").get<std::string>();
  return m;
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

inline std::string now_string() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline void record_file(RunManifest& m, const std::string& name, const std::string& path) {
  m.files[name] = path;
  m.file_hashes[name] = io::fnv1a(io::read_text_file(path));
}

} // namespace detail

inline io::WeightFile extracted_to_weightfile(const std::vector<LayerExtraction>& ex,
                                              const config::ExperimentConfig& cfg) {
  io::WeightFile wf;
  for (const LayerExtraction& le : ex)
    if (le.recoverable) wf.matrices.push_back({le.key.label(), le.weights.w_prime});
  std::ostringstream meta;
  meta << "{\"n_queries\":" << cfg.effective_n_queries()
       << ",\"condition_cap\":" << cfg.pinv.condition_cap
       << ",\"precision_bits\":" << cfg.oracle.fxp.precision_bits
       << ",\"seed_oracle\":" << cfg.seed_oracle << "}";
  wf.provenance = meta.str();
  return wf;
}

inline io::WeightFile aligned_to_weightfile(const std::vector<LayerExtraction>& ex) {
  io::WeightFile wf;
  for (const LayerExtraction& le : ex) {
    if (!le.recoverable) continue;
    wf.matrices.push_back({le.key.label() + ".in", le.in_aligned.aligned});
    wf.matrices.push_back({le.key.label() + ".out", le.out_aligned.aligned});
  }
  return wf;
}

// Runs the full pipeline end to end and persists every stage under out_dir.
inline RunManifest cmd_attack(const config::ExperimentConfig& cfg,
                              const std::string& out_dir,
                              std::optional<tfm::Model> preloaded_model = std::nullopt) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.config_text = config::canonical_config(cfg);
  manifest.config_hash = io::fnv1a(manifest.config_text);
  manifest.created = detail::now_string();
  auto stage = std::chrono::steady_clock::now();

  tfm::Model model =
      preloaded_model ? std::move(*preloaded_model) : tfm::init_model(cfg.model, cfg.seed_model);
  const std::string model_path = out_dir + "/model.pbwt";
  io::save_weights(model_path, io::model_to_weightfile(model));
  detail::record_file(manifest, "model", model_path);
  manifest.durations_ms["model"] = detail::ms_since(stage);

  stage = std::chrono::steady_clock::now();
  tfm::FxpModel fm = tfm::encode_model(model, cfg.oracle.fxp);
  io::QueryLog log = run_campaign(model, fm, cfg, cfg.effective_n_queries());
  const std::string log_path = out_dir + "/queries.pbql";
  io::save_query_log(log_path, log);
  detail::record_file(manifest, "query_log", log_path);
  manifest.durations_ms["queries"] = detail::ms_since(stage);

  stage = std::chrono::steady_clock::now();
  std::vector<LayerExtraction> ex = align_and_extract(log.records, cfg);
  const std::string aligned_path = out_dir + "/aligned.pbwt";
  io::save_weights(aligned_path, aligned_to_weightfile(ex));
  detail::record_file(manifest, "aligned", aligned_path);
  const std::string extracted_path = out_dir + "/extracted.pbwt";
  io::save_weights(extracted_path, extracted_to_weightfile(ex, cfg));
  detail::record_file(manifest, "extracted", extracted_path);
  manifest.durations_ms["extract"] = detail::ms_since(stage);

  stage = std::chrono::steady_clock::now();
  AttackScores scores = score(ex, log.truths, model, cfg);
  const std::string align_csv = out_dir + "/alignment_report.csv";
  io::write_text_file(align_csv, alignment_report_csv(scores));
  detail::record_file(manifest, "alignment_report", align_csv);
  const std::string weight_csv = out_dir + "/weight_report.csv";
  io::write_text_file(weight_csv, weight_report_csv(scores));
  detail::record_file(manifest, "weight_report", weight_csv);
  const std::string summary_path = out_dir + "/summary.json";
  io::write_text_file(summary_path, summary_json(scores, cfg).dump(2) + "\n");
  detail::record_file(manifest, "summary", summary_path);
  manifest.durations_ms["reports"] = detail::ms_since(stage);

  io::write_text_file(out_dir + "/manifest.json", manifest_json(manifest).dump(2) + "\n");
  return manifest;
}

// Per-layer condition sweeps on a fresh campaign.
inline std::vector<eval::SweepReport> cmd_sweep(const config::ExperimentConfig& cfg,
                                                const std::string& out_dir) {
  if (cfg.sweep.empty())
    throw std::invalid_argument("sweep: empty C list (set attack.sweep, e.g. 1e5,1e6,1e7)");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  tfm::Model model = tfm::init_model(cfg.model, cfg.seed_model);
  tfm::FxpModel fm = tfm::encode_model(model, cfg.oracle.fxp);
  io::QueryLog log = run_campaign(model, fm, cfg, cfg.effective_n_queries());
  std::vector<LayerExtraction> ex = align_and_extract(log.records, cfg);
  std::vector<eval::SweepReport> reports;
  for (const LayerExtraction& le : ex) {
    if (!le.recoverable) continue;
    const Eigen::MatrixXd& w = tfm::linear_weight(model.layers[le.key.layer], le.key.name);
    const auto& perms = log.truths[cfg.reference_index].perms[le.key.layer];
    const Eigen::MatrixXd target =
        eval::permuted_weight(w, perms.in(le.key.name), perms.out(le.key.name));
    reports.push_back(eval::condition_sweep(le.system, target, cfg.sweep));
  }
  io::write_text_file(out_dir + "/sweep_report.csv", sweep_report_csv(reports));
  return reports;
}

// Re-run alignment/extraction/scoring from a persisted query log.
inline AttackScores cmd_replay(const std::string& log_path, const std::string& model_path,
                               const config::ExperimentConfig& cfg,
                               const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  io::QueryLog log = io::load_query_log(log_path);
  if (log.truths.empty())
    throw std::runtime_error("replay: query log has no ground truth section");
  tfm::Model model = io::weightfile_to_model(io::load_weights(model_path));
  std::vector<LayerExtraction> ex = align_and_extract(log.records, cfg);
  AttackScores scores = score(ex, log.truths, model, cfg);
  io::write_text_file(out_dir + "/alignment_report.csv", alignment_report_csv(scores));
  io::write_text_file(out_dir + "/weight_report.csv", weight_report_csv(scores));
  io::write_text_file(out_dir + "/summary.json", summary_json(scores, cfg).dump(2) + "\n");
  return scores;
}

// Post-hoc consistency checks over a finished run. Returns the names of
// failed checks; empty means the run verifies.
inline std::vector<std::string> cmd_verify(const std::string& manifest_path) {
  std::vector<std::string> failures;
  json j;
  try {
    j = json::parse(io::read_text_file(manifest_path));
  } catch (const std::exception&) {
    return {"manifest-unreadable"};
  }
  RunManifest m = manifest_from_json(j);

  if (io::fnv1a(m.config_text) != m.config_hash) failures.push_back("config-hash");
  for (const auto& [name, path] : m.files) {
    try {
      if (io::fnv1a(io::read_text_file(path)) != m.file_hashes.at(name))
        failures.push_back("file-hash:" + name);
    } catch (const std::exception&) {
      failures.push_back("file-missing:" + name);
    }
  }
  if (!failures.empty()) return failures;

  config::ExperimentConfig cfg = config::parse_config(m.config_text);
  tfm::Model model = io::weightfile_to_model(io::load_weights(m.files.at("model")));

  // functional invariance with exact permuted weights
  {
    fxp::Rng rng(cfg.seed_attack);
    eval::PermSet ps = eval::random_perm_set(model.cfg, rng);
    tfm::Model permuted = eval::make_permuted_model(model, ps);
    std::vector<std::vector<int>> prompts;
    std::uniform_int_distribution<int> tok(0, model.cfg.vocab_size - 1);
    for (int i = 0; i < 8; ++i) {
      std::vector<int> p(4);
      for (int& t : p) t = tok(rng);
      prompts.push_back(std::move(p));
    }
    if (eval::functional_equivalence(model, permuted, prompts) > 1e-10)
      failures.push_back("functional-equivalence");
  }

  // Penrose identities of the truncated pseudo-inverse
  {
    fxp::Rng rng(cfg.seed_attack + 1);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(24, 12);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = n(rng);
    const Eigen::MatrixXd pinv = extract::truncated_pinv(x, cfg.pinv).pinv;
    if (((x * pinv * x) - x).norm() / x.norm() > 1e-9) failures.push_back("penrose-xpx");
    if (((pinv * x * pinv) - pinv).norm() / pinv.norm() > 1e-9)
      failures.push_back("penrose-pxp");
  }

  // squared alignment objective equals the assignment cost
  {
    fxp::Rng rng(cfg.seed_attack + 2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 8; ++trial) {
      Eigen::VectorXd a(6), b(6);
      for (int i = 0; i < 6; ++i) {
        a[i] = n(rng);
        b[i] = n(rng);
      }
      auto [assignment, cost] = align::solve_assignment(align::cost_matrix(a, b));
      const double obj = align::alignment_objective(a, b, assignment);
      if (std::abs(obj * obj - cost) > 1e-12 * (1.0 + cost)) {
        failures.push_back("objective-equivalence");
        break;
      }
    }
  }
  return failures;
}

} // namespace loe::attack

#endif // LOE_ATTACK_HPP_
