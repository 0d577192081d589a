#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "loe/attack.hpp"

using namespace loe;
namespace fs = std::filesystem;

namespace {

config::ExperimentConfig small_config() {
  config::ExperimentConfig cfg;
  cfg.model.num_layers = 1;
  cfg.model.d_model = 8;
  cfg.model.num_heads = 2;
  cfg.model.d_ffn = 16;
  cfg.model.vocab_size = 16;
  cfg.model.max_seq = 8;
  cfg.oracle.fxp.precision_bits = 18;
  cfg.oracle.fxp.error_mode = fxp::ErrorMode::kProbabilistic;
  cfg.n_queries = 64;
  cfg.prompt = {1, 2, 3};
  return cfg;
}

struct DirGuard {
  fs::path path;
  explicit DirGuard(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~DirGuard() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

} // namespace

TEST_CASE("full pipeline writes every artifact and verifies") {
  const config::ExperimentConfig cfg = small_config();
  DirGuard dir("loe_pipe_run");
  const attack::RunManifest manifest = attack::cmd_attack(cfg, dir.str());

  for (const char* name : {"model.pbwt", "queries.pbql", "aligned.pbwt", "extracted.pbwt",
                           "alignment_report.csv", "weight_report.csv", "summary.json",
                           "manifest.json"})
    CHECK(fs::exists(dir.path / name));
  CHECK(manifest.files.size() == 7);
  CHECK(manifest.config_hash == io::fnv1a(manifest.config_text));

  CHECK(attack::cmd_verify((dir.path / "manifest.json").string()).empty());

  // extracted container carries the run provenance
  const io::WeightFile ex = io::load_weights((dir.path / "extracted.pbwt").string());
  CHECK(ex.provenance.find("\"n_queries\":64") != std::string::npos);
  CHECK(ex.has("L0.qkv"));
  CHECK(ex.has("L0.h2"));
  const auto [rows, cols] = tfm::linear_dims(cfg.model, "h1");
  CHECK(ex.get("L0.h1").rows() == rows);
  CHECK(ex.get("L0.h1").cols() == cols);
}

TEST_CASE("verify flags tampered artifacts") {
  const config::ExperimentConfig cfg = small_config();
  DirGuard dir("loe_pipe_tamper");
  attack::cmd_attack(cfg, dir.str());
  const std::string manifest_path = (dir.path / "manifest.json").string();

  // flip one byte in the extracted weights
  const std::string target = (dir.path / "extracted.pbwt").string();
  std::string bytes = io::read_text_file(target);
  bytes[bytes.size() / 2] ^= 0x40;
  io::write_text_file(target, bytes);
  const auto failures = attack::cmd_verify(manifest_path);
  REQUIRE(failures.size() == 1);
  CHECK(failures[0] == "file-hash:extracted");

  // remove it entirely
  fs::remove(target);
  const auto missing = attack::cmd_verify(manifest_path);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0] == "file-missing:extracted");

  CHECK(attack::cmd_verify((dir.path / "nonexistent.json").string()) ==
        std::vector<std::string>{"manifest-unreadable"});
}

TEST_CASE("two runs with the same seeds are byte identical") {
  const config::ExperimentConfig cfg = small_config();
  DirGuard a("loe_pipe_det_a"), b("loe_pipe_det_b");
  attack::cmd_attack(cfg, a.str());
  attack::cmd_attack(cfg, b.str());
  for (const char* name : {"model.pbwt", "queries.pbql", "aligned.pbwt", "extracted.pbwt",
                           "alignment_report.csv", "weight_report.csv", "summary.json"})
    CHECK(io::read_text_file((a.path / name).string()) ==
          io::read_text_file((b.path / name).string()));

  // a different oracle seed changes the campaign
  config::ExperimentConfig other = cfg;
  other.seed_oracle += 1;
  DirGuard c("loe_pipe_det_c");
  attack::cmd_attack(other, c.str());
  CHECK(io::read_text_file((a.path / "queries.pbql").string()) !=
        io::read_text_file((c.path / "queries.pbql").string()));
}

TEST_CASE("replay from the persisted log reproduces the reports") {
  const config::ExperimentConfig cfg = small_config();
  DirGuard run("loe_pipe_replay_src"), rep("loe_pipe_replay_dst");
  attack::cmd_attack(cfg, run.str());
  attack::cmd_replay((run.path / "queries.pbql").string(),
                     (run.path / "model.pbwt").string(), cfg, rep.str());
  for (const char* name : {"alignment_report.csv", "weight_report.csv", "summary.json"})
    CHECK(io::read_text_file((run.path / name).string()) ==
          io::read_text_file((rep.path / name).string()));

  // a log stripped of ground truth cannot be re-scored
  io::QueryLog log = io::load_query_log((run.path / "queries.pbql").string());
  log.truths.clear();
  const std::string stripped = (rep.path / "stripped.pbql").string();
  io::save_query_log(stripped, log);
  CHECK_THROWS_AS(attack::cmd_replay(stripped, (run.path / "model.pbwt").string(), cfg,
                                     rep.str()),
                  std::runtime_error);
}

TEST_CASE("sweep command writes a per-layer curve") {
  config::ExperimentConfig cfg = small_config();
  cfg.sweep = {1e4, 1e6, 1e8};
  DirGuard dir("loe_pipe_sweep");
  const auto reports = attack::cmd_sweep(cfg, dir.str());
  CHECK(reports.size() == 4); // one per linear layer of the 1-layer model
  for (const auto& rep : reports) REQUIRE(rep.points.size() == 3);
  const std::string csv = io::read_text_file((dir.path / "sweep_report.csv").string());
  CHECK(csv.rfind("layer,condition_cap,l1_mean\n", 0) == 0);
  CHECK(csv.find("L0.h1,") != std::string::npos);

  cfg.sweep.clear();
  CHECK_THROWS_AS(attack::cmd_sweep(cfg, dir.str()), std::invalid_argument);
}

TEST_CASE("layernorm_private campaigns mark the fed layers unrecoverable") {
  config::ExperimentConfig cfg = small_config();
  cfg.oracle.layernorm_private = true;
  cfg.n_queries = 20; // enough rows for the h2 system, h_in = d_ffn
  const tfm::Model model = tfm::init_model(cfg.model, cfg.seed_model);
  const tfm::FxpModel fm = tfm::encode_model(model, cfg.oracle.fxp);
  const io::QueryLog log = attack::run_campaign(model, fm, cfg, cfg.n_queries);
  const auto ex = attack::align_and_extract(log.records, cfg);
  REQUIRE(ex.size() == 4);
  for (const auto& le : ex) {
    const bool fed_by_layernorm = le.key.name == "qkv" || le.key.name == "h1";
    CHECK(le.recoverable == !fed_by_layernorm);
  }
  const auto scores = attack::score(ex, log.truths, model, cfg);
  const std::string csv = attack::weight_report_csv(scores);
  CHECK(csv.find("L0.qkv,false") != std::string::npos);
  CHECK(csv.find("L0.o,true") != std::string::npos);
}

TEST_CASE("align_and_extract needs at least two queries") {
  const config::ExperimentConfig cfg = small_config();
  CHECK_THROWS_AS(attack::align_and_extract({}, cfg), std::invalid_argument);
}
