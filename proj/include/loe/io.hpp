#ifndef LOE_IO_HPP_
#define LOE_IO_HPP_

// Binary containers and report writers.
//
// Weight container ("PBWT"): magic, version u16, u32 matrix count, then
// per matrix a header (u32 name length + bytes, u32 rows, u32 cols) and
// row-major little-endian f64 payload. An optional trailing JSON blob
// (u32 length + bytes) carries provenance for extracted weights.
//
// Query log ("PBQL"): revealed records for every query, optionally
// followed by the harness ground truth (permutations + true linear I/O)
// so a run can be replayed and re-scored offline.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loe/oracle.hpp"
#include "loe/permutation.hpp"

namespace loe::io {

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

inline void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
}

inline Eigen::VectorXd get_vector(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  Eigen::VectorXd v(len);
  for (std::uint32_t i = 0; i < len; ++i) v[i] = get_f64(is);
  return v;
}

inline void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(os, m(r, c));
}

inline Eigen::MatrixXd get_matrix(std::istream& is) {
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get_f64(is);
  return m;
}

inline void put_perm(std::ostream& os, const perm::Permutation& p) {
  put_u32(os, static_cast<std::uint32_t>(p.size()));
  for (std::size_t i : p.sigma) put_u64(os, i);
}

inline perm::Permutation get_perm(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  std::vector<std::size_t> s(len);
  for (std::uint32_t i = 0; i < len; ++i) s[i] = static_cast<std::size_t>(get_u64(is));
  return perm::Permutation(std::move(s));
}

} // namespace detail

// ---- weight container ----

struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd matrix;
};

struct WeightFile {
  std::vector<NamedMatrix> matrices;
  std::string provenance; // JSON text, empty when absent

  const Eigen::MatrixXd& get(const std::string& name) const {
    for (const auto& m : matrices)
      if (m.name == name) return m.matrix;
    throw std::out_of_range("weight container: no matrix named " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& m : matrices)
      if (m.name == name) return true;
    return false;
  }
};

inline void save_weights(const std::string& path, const WeightFile& wf) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("PBWT", 4);
  detail::put_u16(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(wf.matrices.size()));
  for (const auto& m : wf.matrices) {
    detail::put_string(os, m.name);
    detail::put_matrix(os, m.matrix);
  }
  if (!wf.provenance.empty()) detail::put_string(os, wf.provenance);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline WeightFile load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PBWT", 4) != 0)
    throw std::runtime_error("bad magic in weight container: " + path);
  const std::uint16_t version = detail::get_u16(is);
  if (version != 1) throw std::runtime_error("unsupported weight container version");
  const std::uint32_t count = detail::get_u32(is);
  WeightFile wf;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedMatrix m;
    m.name = detail::get_string(is);
    m.matrix = detail::get_matrix(is);
    wf.matrices.push_back(std::move(m));
  }
  if (!is) throw std::runtime_error("truncated weight container: " + path);
  if (is.peek() != std::char_traits<char>::eof()) wf.provenance = detail::get_string(is);
  return wf;
}

// ---- model <-> container ----

inline WeightFile model_to_weightfile(const tfm::Model& model) {
  WeightFile wf;
  auto vec_as_row = [](const Eigen::VectorXd& v) {
    return Eigen::MatrixXd(v.transpose());
  };
  std::ostringstream meta;
  meta << "{\"num_layers\":" << model.cfg.num_layers
       << ",\"d_model\":" << model.cfg.d_model
       << ",\"num_heads\":" << model.cfg.num_heads
       << ",\"d_ffn\":" << model.cfg.d_ffn
       << ",\"vocab_size\":" << model.cfg.vocab_size
       << ",\"max_seq\":" << model.cfg.max_seq
       << ",\"activation\":\"" << tfm::to_string(model.cfg.activation) << "\"}";
  wf.provenance = meta.str();
  wf.matrices.push_back({"embedding", model.embedding});
  wf.matrices.push_back({"pos", model.pos});
  wf.matrices.push_back({"lnf_gain", vec_as_row(model.lnf_gain)});
  wf.matrices.push_back({"lnf_bias", vec_as_row(model.lnf_bias)});
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string pre = "L" + std::to_string(l) + ".";
    const tfm::LayerWeights& w = model.layers[l];
    wf.matrices.push_back({pre + "w_qkv", w.w_qkv});
    wf.matrices.push_back({pre + "w_o", w.w_o});
    wf.matrices.push_back({pre + "w_h1", w.w_h1});
    wf.matrices.push_back({pre + "w_h2", w.w_h2});
    wf.matrices.push_back({pre + "ln1_gain", vec_as_row(w.ln1_gain)});
    wf.matrices.push_back({pre + "ln1_bias", vec_as_row(w.ln1_bias)});
    wf.matrices.push_back({pre + "ln2_gain", vec_as_row(w.ln2_gain)});
    wf.matrices.push_back({pre + "ln2_bias", vec_as_row(w.ln2_bias)});
  }
  return wf;
}

inline tfm::Model weightfile_to_model(const WeightFile& wf) {
  tfm::Model m;
  auto meta_int = [&](const std::string& key) {
    const std::string pat = "\"" + key + "\":";
    const auto at = wf.provenance.find(pat);
    if (at == std::string::npos)
      throw std::runtime_error("weight container missing model metadata: " + key);
    return std::stoi(wf.provenance.substr(at + pat.size()));
  };
  m.cfg.num_layers = meta_int("num_layers");
  m.cfg.d_model = meta_int("d_model");
  m.cfg.num_heads = meta_int("num_heads");
  m.cfg.d_ffn = meta_int("d_ffn");
  m.cfg.vocab_size = meta_int("vocab_size");
  m.cfg.max_seq = meta_int("max_seq");
  m.cfg.activation = wf.provenance.find("\"activation\":\"relu\"") != std::string::npos
                         ? tfm::Activation::kRelu
                         : tfm::Activation::kGelu;
  m.cfg.validate();
  auto row_as_vec = [&](const std::string& name) {
    return Eigen::VectorXd(wf.get(name).row(0).transpose());
  };
  m.embedding = wf.get("embedding");
  m.pos = wf.get("pos");
  m.lnf_gain = row_as_vec("lnf_gain");
  m.lnf_bias = row_as_vec("lnf_bias");
  for (int l = 0; l < m.cfg.num_layers; ++l) {
    const std::string pre = "L" + std::to_string(l) + ".";
    tfm::LayerWeights w;
    w.w_qkv = wf.get(pre + "w_qkv");
    w.w_o = wf.get(pre + "w_o");
    w.w_h1 = wf.get(pre + "w_h1");
    w.w_h2 = wf.get(pre + "w_h2");
    w.ln1_gain = row_as_vec(pre + "ln1_gain");
    w.ln1_bias = row_as_vec(pre + "ln1_bias");
    w.ln2_gain = row_as_vec(pre + "ln2_gain");
    w.ln2_bias = row_as_vec(pre + "ln2_bias");
    m.layers.push_back(std::move(w));
  }
  return m;
}

// ---- query log ----

struct QueryLog {
  std::vector<oracle::QueryRecord> records;
  // harness side; empty when the log was stripped of ground truth
  struct TruthEntry {
    std::uint64_t query_id = 0;
    std::vector<oracle::LayerPermutations> perms;
    // true linear I/O per layer, indexed like linear_names()
    std::vector<std::array<tfm::LinearIO, 4>> linear_io;
  };
  std::vector<TruthEntry> truths;
};

inline void save_query_log(const std::string& path, const QueryLog& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("PBQL", 4);
  detail::put_u16(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(log.records.size()));
  for (const auto& rec : log.records) {
    detail::put_u64(os, rec.query_id);
    detail::put_u32(os, static_cast<std::uint32_t>(rec.layers.size()));
    for (const auto& layer : rec.layers) {
      for (const oracle::RevealedLinear* lin : {&layer.qkv, &layer.o, &layer.h1, &layer.h2}) {
        os.put(lin->input.has_value() ? 1 : 0);
        if (lin->input) detail::put_vector(os, *lin->input);
        detail::put_vector(os, lin->output);
      }
      detail::put_matrix(os, layer.attn.x_pre);
      detail::put_u32(os, static_cast<std::uint32_t>(layer.attn.s.size()));
      for (std::size_t h = 0; h < layer.attn.s.size(); ++h) {
        detail::put_vector(os, layer.attn.s[h]);
        detail::put_vector(os, layer.attn.p[h]);
      }
    }
    detail::put_vector(os, rec.y);
  }
  os.put(log.truths.empty() ? 0 : 1);
  if (!log.truths.empty()) {
    detail::put_u32(os, static_cast<std::uint32_t>(log.truths.size()));
    for (const auto& t : log.truths) {
      detail::put_u64(os, t.query_id);
      detail::put_u32(os, static_cast<std::uint32_t>(t.perms.size()));
      for (std::size_t l = 0; l < t.perms.size(); ++l) {
        const oracle::LayerPermutations& lp = t.perms[l];
        for (const perm::Permutation* p :
             {&lp.qkv_in, &lp.qkv_out, &lp.o_in, &lp.o_out, &lp.h1_in, &lp.h1_out,
              &lp.h2_in, &lp.h2_out, &lp.rho})
          detail::put_perm(os, *p);
        for (const tfm::LinearIO& io : t.linear_io[l]) {
          detail::put_vector(os, io.input);
          detail::put_vector(os, io.output);
        }
      }
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline QueryLog load_query_log(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PBQL", 4) != 0)
    throw std::runtime_error("bad magic in query log: " + path);
  if (detail::get_u16(is) != 1) throw std::runtime_error("unsupported query log version");
  QueryLog log;
  const std::uint32_t n = detail::get_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    oracle::QueryRecord rec;
    rec.query_id = detail::get_u64(is);
    const std::uint32_t layers = detail::get_u32(is);
    for (std::uint32_t l = 0; l < layers; ++l) {
      oracle::RevealedLayer layer;
      for (oracle::RevealedLinear* lin : {&layer.qkv, &layer.o, &layer.h1, &layer.h2}) {
        const int has_input = is.get();
        if (has_input) lin->input = detail::get_vector(is);
        lin->output = detail::get_vector(is);
      }
      layer.attn.x_pre = detail::get_matrix(is);
      const std::uint32_t heads = detail::get_u32(is);
      layer.attn.s.resize(heads);
      layer.attn.p.resize(heads);
      for (std::uint32_t h = 0; h < heads; ++h) {
        layer.attn.s[h] = detail::get_vector(is);
        layer.attn.p[h] = detail::get_vector(is);
      }
      rec.layers.push_back(std::move(layer));
    }
    rec.y = detail::get_vector(is);
    log.records.push_back(std::move(rec));
  }
  const int has_truth = is.get();
  if (has_truth) {
    const std::uint32_t tn = detail::get_u32(is);
    for (std::uint32_t i = 0; i < tn; ++i) {
      QueryLog::TruthEntry t;
      t.query_id = detail::get_u64(is);
      const std::uint32_t layers = detail::get_u32(is);
      t.perms.resize(layers);
      t.linear_io.resize(layers);
      for (std::uint32_t l = 0; l < layers; ++l) {
        oracle::LayerPermutations& lp = t.perms[l];
        for (perm::Permutation* p :
             {&lp.qkv_in, &lp.qkv_out, &lp.o_in, &lp.o_out, &lp.h1_in, &lp.h1_out,
              &lp.h2_in, &lp.h2_out, &lp.rho})
          *p = detail::get_perm(is);
        for (tfm::LinearIO& io : t.linear_io[l]) {
          io.input = detail::get_vector(is);
          io.output = detail::get_vector(is);
        }
      }
      log.truths.push_back(std::move(t));
    }
  }
  if (!is) throw std::runtime_error("truncated query log: " + path);
  return log;
}

// ---- deterministic text formatting ----

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// FNV-1a, used for config hashing in manifests.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace loe::io

#endif // LOE_IO_HPP_
