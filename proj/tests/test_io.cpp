#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "loe/config.hpp"
#include "loe/io.hpp"

using namespace loe;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

struct FileGuard {
  std::string path;
  ~FileGuard() { std::remove(path.c_str()); }
};

Eigen::MatrixXd awkward_matrix() {
  Eigen::MatrixXd m(2, 3);
  m << 0.1, -1e300, 5e-324, 0.0, -0.0, 1.0 / 3.0;
  return m;
}

} // namespace

TEST_CASE("weight container round trip is bit exact") {
  const std::string path = temp_path("loe_test_weights.pbwt");
  FileGuard guard{path};
  io::WeightFile wf;
  wf.matrices.push_back({"a", awkward_matrix()});
  wf.matrices.push_back({"b.with.dots", Eigen::MatrixXd::Identity(4, 4)});
  wf.provenance = "{\"k\":1}";
  io::save_weights(path, wf);
  const io::WeightFile back = io::load_weights(path);
  REQUIRE(back.matrices.size() == 2);
  CHECK(back.matrices[0].name == "a");
  CHECK(back.get("a") == wf.get("a")); // exact, including subnormals and -0.0
  CHECK(back.get("b.with.dots") == wf.get("b.with.dots"));
  CHECK(back.provenance == wf.provenance);
  CHECK(back.has("a"));
  CHECK_FALSE(back.has("c"));
  CHECK_THROWS_AS(back.get("c"), std::out_of_range);
}

TEST_CASE("weight container without provenance") {
  const std::string path = temp_path("loe_test_weights2.pbwt");
  FileGuard guard{path};
  io::WeightFile wf;
  wf.matrices.push_back({"m", Eigen::MatrixXd::Zero(1, 1)});
  io::save_weights(path, wf);
  CHECK(io::load_weights(path).provenance.empty());
}

TEST_CASE("weight container rejects foreign files") {
  const std::string path = temp_path("loe_test_bad.pbwt");
  FileGuard guard{path};
  io::write_text_file(path, "not a container");
  CHECK_THROWS_AS(io::load_weights(path), std::runtime_error);
  CHECK_THROWS_AS(io::load_weights(temp_path("loe_missing_file.pbwt")), std::runtime_error);
}

TEST_CASE("model container round trip") {
  tfm::ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.d_ffn = 16;
  cfg.vocab_size = 12;
  cfg.max_seq = 6;
  cfg.activation = tfm::Activation::kRelu;
  const tfm::Model m = tfm::init_model(cfg, 77);
  const std::string path = temp_path("loe_test_model.pbwt");
  FileGuard guard{path};
  io::save_weights(path, io::model_to_weightfile(m));
  const tfm::Model back = io::weightfile_to_model(io::load_weights(path));
  CHECK(back.cfg.d_model == 8);
  CHECK(back.cfg.activation == tfm::Activation::kRelu);
  CHECK(back.embedding == m.embedding);
  CHECK(back.pos == m.pos);
  CHECK(back.lnf_gain == m.lnf_gain);
  for (int l = 0; l < 2; ++l) {
    CHECK(back.layers[l].w_qkv == m.layers[l].w_qkv);
    CHECK(back.layers[l].w_h2 == m.layers[l].w_h2);
    CHECK(back.layers[l].ln2_bias == m.layers[l].ln2_bias);
  }
}

TEST_CASE("query log round trip with and without ground truth") {
  tfm::ModelConfig mc;
  mc.num_layers = 1;
  mc.d_model = 8;
  mc.num_heads = 2;
  mc.d_ffn = 16;
  mc.vocab_size = 12;
  mc.max_seq = 6;
  const tfm::Model m = tfm::init_model(mc, 3);
  oracle::OracleConfig oc;
  oc.fxp.error_mode = fxp::ErrorMode::kProbabilistic;
  const tfm::FxpModel fm = tfm::encode_model(m, oc.fxp);

  io::QueryLog log;
  fxp::Rng rng(8);
  for (int i = 0; i < 3; ++i) {
    auto [rec, truth] = oracle::query(m, fm, {1, 2, 3}, oc, i, rng);
    io::QueryLog::TruthEntry te;
    te.query_id = truth.query_id;
    te.perms = truth.perms;
    te.linear_io.resize(1);
    const auto& names = tfm::linear_names();
    for (std::size_t ni = 0; ni < names.size(); ++ni)
      te.linear_io[0][ni] = tfm::linear_io(truth.trace.layers[0], names[ni]);
    log.records.push_back(std::move(rec));
    log.truths.push_back(std::move(te));
  }

  const std::string path = temp_path("loe_test_log.pbql");
  FileGuard guard{path};
  io::save_query_log(path, log);
  const io::QueryLog back = io::load_query_log(path);
  REQUIRE(back.records.size() == 3);
  REQUIRE(back.truths.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.records[i].query_id == log.records[i].query_id);
    CHECK(back.records[i].y == log.records[i].y);
    for (const std::string& name : tfm::linear_names()) {
      const auto& a = back.records[i].linear(0, name);
      const auto& b = log.records[i].linear(0, name);
      CHECK(a.input.has_value() == b.input.has_value());
      if (a.input) CHECK(*a.input == *b.input);
      CHECK(a.output == b.output);
    }
    CHECK(back.records[i].layers[0].attn.x_pre == log.records[i].layers[0].attn.x_pre);
    CHECK(back.records[i].layers[0].attn.p[1] == log.records[i].layers[0].attn.p[1]);
    CHECK(back.truths[i].perms[0].h1_out.sigma == log.truths[i].perms[0].h1_out.sigma);
    CHECK(back.truths[i].perms[0].rho.sigma == log.truths[i].perms[0].rho.sigma);
    CHECK(back.truths[i].linear_io[0][3].output == log.truths[i].linear_io[0][3].output);
  }

  io::QueryLog stripped = log;
  stripped.truths.clear();
  io::save_query_log(path, stripped);
  CHECK(io::load_query_log(path).truths.empty());
}

TEST_CASE("config parsing: defaults, overrides, and errors") {
  const config::ExperimentConfig def = config::parse_config("");
  CHECK(def.model.d_model == 64);
  CHECK(def.model.d_ffn == 256);
  CHECK(def.oracle.fxp.precision_bits == 18);
  CHECK(def.pinv.condition_cap == 1e7);
  CHECK(def.effective_n_queries() == 16 * 256);
  CHECK(def.prompt == std::vector<int>{1, 2, 3, 4});

  const std::string text =
      "# experiment\n"
      "[model]\n"
      "d_model = 32\n"
      "num_heads = 4   # inline comment\n"
      "d_ffn = 48\n"
      "activation = relu\n"
      "[fxp]\n"
      "precision_bits = 14\n"
      "error_mode = probabilistic\n"
      "[oracle]\n"
      "noise_sigma = 0.25\n"
      "layernorm_private = true\n"
      "[attack]\n"
      "n_queries = 100\n"
      "condition_cap = 1e6\n"
      "solver = hungarian\n"
      "prompt = 7, 8, 9\n"
      "sweep = 1e4,1e5\n"
      "[seeds]\n"
      "model = 11\n"
      "oracle = 22\n"
      "attack = 33\n";
  const config::ExperimentConfig cfg = config::parse_config(text);
  CHECK(cfg.model.d_model == 32);
  CHECK(cfg.model.activation == tfm::Activation::kRelu);
  CHECK(cfg.oracle.fxp.precision_bits == 14);
  CHECK(cfg.oracle.noise_sigma == 0.25);
  CHECK(cfg.oracle.layernorm_private);
  CHECK(cfg.effective_n_queries() == 100);
  CHECK(cfg.pinv.condition_cap == 1e6);
  CHECK(cfg.solver == align::Solver::kHungarian);
  CHECK(cfg.prompt == std::vector<int>{7, 8, 9});
  CHECK(cfg.sweep == std::vector<double>{1e4, 1e5});
  CHECK(cfg.seed_model == 11);
  CHECK(cfg.seed_oracle == 22);
  CHECK(cfg.seed_attack == 33);

  CHECK_THROWS_AS(config::parse_config("[model]\nbroken line\n"), std::invalid_argument);
  CHECK_THROWS_AS(config::parse_config("[oracle]\nlayernorm_private = maybe\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(config::parse_config("[model]\nd_model = 63\n"), std::invalid_argument);
  CHECK_THROWS_AS(config::parse_config("[attack]\nprompt =\n"), std::invalid_argument);
}

TEST_CASE("canonical config text is a fixed point of the parser") {
  config::ExperimentConfig cfg;
  cfg.model.d_model = 32;
  cfg.model.d_ffn = 40;
  cfg.n_queries = 50;
  cfg.seed_oracle = 123;
  const std::string canon = config::canonical_config(cfg);
  const config::ExperimentConfig back = config::parse_config(canon);
  CHECK(config::canonical_config(back) == canon);
}

TEST_CASE("fnv1a known values and fmt_double determinism") {
  CHECK(io::fnv1a("") == 14695981039346656037ull);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(io::fnv1a("ab") != io::fnv1a("ba"));

  CHECK(io::fmt_double(0.1) == "0.1");
  CHECK(io::fmt_double(1.0 / 3.0) == io::fmt_double(1.0 / 3.0));
  CHECK(io::fmt_double(1e-300) == "1e-300");
  CHECK(io::fmt_double(-0.0) == "-0");
}

TEST_CASE("text file helpers") {
  const std::string path = temp_path("loe_test_text.txt");
  FileGuard guard{path};
  io::write_text_file(path, "line\nline2");
  CHECK(io::read_text_file(path) == "line\nline2");
  CHECK_THROWS_AS(io::read_text_file(temp_path("loe_missing.txt")), std::runtime_error);
}
