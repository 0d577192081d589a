#ifndef LOE_CONFIG_HPP_
#define LOE_CONFIG_HPP_

// Flat sectioned key=value experiment configuration.

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loe/align.hpp"
#include "loe/extract.hpp"
#include "loe/fxp.hpp"
#include "loe/oracle.hpp"
#include "loe/transformer.hpp"

namespace loe::config {

struct ExperimentConfig {
  tfm::ModelConfig model;
  oracle::OracleConfig oracle; // holds the FxpConfig
  extract::PinvConfig pinv;
  align::Solver solver = align::Solver::kSorted;
  int n_queries = 0; // 0 -> default 16 * max model dimension
  std::size_t reference_index = 0;
  std::vector<int> prompt = {1, 2, 3, 4};
  bool distinct_prompts = false; // ablation: vary the prompt per query
  std::vector<double> sweep = {1e5, 1e6, 1e7, 1e8, 1e9};
  std::uint64_t seed_model = 1;
  std::uint64_t seed_oracle = 2;
  std::uint64_t seed_attack = 3;

  int max_dimension() const { return std::max(model.d_ffn, 3 * model.d_model); }
  int effective_n_queries() const {
    return n_queries > 0 ? n_queries : 16 * max_dimension();
  }
  void validate() const {
    model.validate();
    oracle.validate();
    pinv.validate();
    if (prompt.empty()) throw std::invalid_argument("config: empty prompt");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

} // namespace detail

// "[section]\nkey = value" text into a flat map keyed "section.key".
inline std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line, section;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: malformed line: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

inline ExperimentConfig parse_config(const std::string& text) {
  const auto kv = parse_ini(text);
  ExperimentConfig cfg;
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto get_int = [&](const std::string& key, int& out) {
    if (const auto* v = get(key)) out = std::stoi(*v);
  };
  auto get_u64 = [&](const std::string& key, std::uint64_t& out) {
    if (const auto* v = get(key)) out = std::stoull(*v);
  };
  auto get_double = [&](const std::string& key, double& out) {
    if (const auto* v = get(key)) out = std::stod(*v);
  };
  auto get_bool = [&](const std::string& key, bool& out) {
    if (const auto* v = get(key)) {
      if (*v == "true" || *v == "1") out = true;
      else if (*v == "false" || *v == "0") out = false;
      else throw std::invalid_argument("config: bad boolean for " + key);
    }
  };

  get_int("model.num_layers", cfg.model.num_layers);
  get_int("model.d_model", cfg.model.d_model);
  get_int("model.num_heads", cfg.model.num_heads);
  get_int("model.d_ffn", cfg.model.d_ffn);
  get_int("model.vocab_size", cfg.model.vocab_size);
  get_int("model.max_seq", cfg.model.max_seq);
  if (const auto* v = get("model.activation"))
    cfg.model.activation = tfm::activation_from_string(*v);

  get_int("fxp.ring_bits", cfg.oracle.fxp.ring_bits);
  get_int("fxp.precision_bits", cfg.oracle.fxp.precision_bits);
  if (const auto* v = get("fxp.error_mode"))
    cfg.oracle.fxp.error_mode = fxp::error_mode_from_string(*v);

  get_double("oracle.noise_sigma", cfg.oracle.noise_sigma);
  get_bool("oracle.layernorm_private", cfg.oracle.layernorm_private);

  get_int("attack.n_queries", cfg.n_queries);
  if (const auto* v = get("attack.reference_index"))
    cfg.reference_index = std::stoul(*v);
  get_double("attack.condition_cap", cfg.pinv.condition_cap);
  if (const auto* v = get("attack.solver")) cfg.solver = align::solver_from_string(*v);
  get_bool("attack.distinct_prompts", cfg.distinct_prompts);
  if (const auto* v = get("attack.prompt")) {
    cfg.prompt.clear();
    std::istringstream ps(*v);
    std::string tok;
    while (std::getline(ps, tok, ',')) cfg.prompt.push_back(std::stoi(detail::trim(tok)));
  }
  if (const auto* v = get("attack.sweep")) {
    cfg.sweep.clear();
    std::istringstream ps(*v);
    std::string tok;
    while (std::getline(ps, tok, ',')) cfg.sweep.push_back(std::stod(detail::trim(tok)));
  }

  get_u64("seeds.model", cfg.seed_model);
  get_u64("seeds.oracle", cfg.seed_oracle);
  get_u64("seeds.attack", cfg.seed_attack);

  cfg.validate();
  return cfg;
}

// Canonical text form, used for hashing and manifest echoing.
inline std::string canonical_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[model]\n"
     << "num_layers = " << cfg.model.num_layers << "\n"
     << "d_model = " << cfg.model.d_model << "\n"
     << "num_heads = " << cfg.model.num_heads << "\n"
     << "d_ffn = " << cfg.model.d_ffn << "\n"
     << "vocab_size = " << cfg.model.vocab_size << "\n"
     << "max_seq = " << cfg.model.max_seq << "\n"
     << "activation = " << tfm::to_string(cfg.model.activation) << "\n"
     << "[fxp]\n"
     << "ring_bits = " << cfg.oracle.fxp.ring_bits << "\n"
     << "precision_bits = " << cfg.oracle.fxp.precision_bits << "\n"
     << "error_mode = " << fxp::to_string(cfg.oracle.fxp.error_mode) << "\n"
     << "[oracle]\n"
     << "noise_sigma = " << cfg.oracle.noise_sigma << "\n"
     << "layernorm_private = " << (cfg.oracle.layernorm_private ? "true" : "false") << "\n"
     << "[attack]\n"
     << "n_queries = " << cfg.effective_n_queries() << "\n"
     << "reference_index = " << cfg.reference_index << "\n"
     << "condition_cap = " << cfg.pinv.condition_cap << "\n"
     << "solver = "
     << (cfg.solver == align::Solver::kSorted
             ? "sorted"
             : cfg.solver == align::Solver::kHungarian ? "hungarian" : "both")
     << "\n"
     << "distinct_prompts = " << (cfg.distinct_prompts ? "true" : "false") << "\n";
  os << "prompt = ";
  for (std::size_t i = 0; i < cfg.prompt.size(); ++i)
    os << (i ? "," : "") << cfg.prompt[i];
  os << "\nsweep = ";
  for (std::size_t i = 0; i < cfg.sweep.size(); ++i)
    os << (i ? "," : "") << cfg.sweep[i];
  os << "\n[seeds]\n"
     << "model = " << cfg.seed_model << "\n"
     << "oracle = " << cfg.seed_oracle << "\n"
     << "attack = " << cfg.seed_attack << "\n";
  return os.str();
}

} // namespace loe::config

#endif // LOE_CONFIG_HPP_
