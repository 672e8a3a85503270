#pragma once

// Checkpoint container: magic "CAPSREL\0", u32 version, u64 schema hash, a
// JSON metadata chunk (schema, vocabulary, dims, head/routing/loss, margin),
// then named parameter blocks (name, rows, cols, 64-bit little-endian
// doubles). Doubles on disk regardless of the in-memory precision, so a
// double-precision model round-trips bit-identically.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsrel/errors.hpp"
#include "capsrel/model.hpp"

namespace capsrel {

namespace detail {

constexpr char kMagic[8] = {'C', 'A', 'P', 'S', 'R', 'E', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

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

inline void put_f64(std::ostream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw CompatError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw CompatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline std::string get_str(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  if (len > (1u << 24)) throw CompatError("checkpoint corrupt: oversized string");
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw CompatError("checkpoint truncated");
  return s;
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace detail

template <class T>
void save_model(ModelParams<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CompatError("cannot open checkpoint for writing: " + path);
  os.write(detail::kMagic, 8);
  detail::put_u32(os, detail::kVersion);
  detail::put_u64(os, model.schema.hash());

  nlohmann::json meta;
  meta["schema"]["relations"] = model.schema.relations;
  if (model.schema.na_label) meta["schema"]["na_label"] = *model.schema.na_label;
  meta["vocab"] = model.vocab;
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [w, r] : model.word_row) rows[w] = r;
  meta["word_row"] = std::move(rows);
  meta["unk_row"] = model.unk_row;
  meta["dims"] = {{"word_dim", model.dims.word_dim}, {"pos_dim", model.dims.pos_dim},
                  {"max_dist", model.dims.max_dist}, {"hidden", model.dims.hidden},
                  {"d_u", model.dims.d_u},           {"d_r", model.dims.d_r},
                  {"iterations", model.dims.iterations}};
  meta["head"] = to_string(model.head);
  meta["routing"] = to_string(model.routing);
  meta["loss"] = to_string(model.loss);
  meta["margin"] = {{"gamma", model.margin.gamma},
                    {"lambda", model.margin.lambda},
                    {"b_init", model.margin.b_init}};
  detail::put_str(os, meta.dump());

  auto es = model.entries();
  detail::put_u32(os, static_cast<std::uint32_t>(es.size()));
  for (const auto& e : es) {
    detail::put_str(os, e.name);
    detail::put_u32(os, static_cast<std::uint32_t>(e.mat->rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(e.mat->cols()));
    for (std::size_t i = 0; i < e.mat->size(); ++i)
      detail::put_f64(os, static_cast<double>((*e.mat)[i]));
  }
  if (!os) throw CompatError("write failure on checkpoint: " + path);
}

template <class T>
ModelParams<T> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CompatError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kMagic, 8) != 0)
    throw CompatError("not a capsrel checkpoint: " + path);
  const std::uint32_t version = detail::get_u32(is);
  if (version != detail::kVersion)
    throw CompatError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                      std::to_string(detail::kVersion) + ")");
  const std::uint64_t stored_hash = detail::get_u64(is);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::get_str(is));
  } catch (const nlohmann::json::exception& e) {
    throw CompatError(std::string("checkpoint metadata corrupt: ") + e.what());
  }

  ModelParams<T> m;
  try {
    m.schema.relations = meta.at("schema").at("relations").get<std::vector<std::string>>();
    if (meta.at("schema").contains("na_label"))
      m.schema.na_label = meta["schema"]["na_label"].get<std::string>();
    m.vocab = meta.at("vocab").get<std::vector<std::string>>();
    for (auto& [w, r] : meta.at("word_row").items()) m.word_row[w] = r.template get<int>();
    m.unk_row = meta.at("unk_row").get<int>();
    const auto& d = meta.at("dims");
    m.dims.word_dim = d.at("word_dim").get<int>();
    m.dims.pos_dim = d.at("pos_dim").get<int>();
    m.dims.max_dist = d.at("max_dist").get<int>();
    m.dims.hidden = d.at("hidden").get<int>();
    m.dims.d_u = d.at("d_u").get<int>();
    m.dims.d_r = d.at("d_r").get<int>();
    m.dims.iterations = d.at("iterations").get<int>();
    m.head = head_kind_from(meta.at("head").get<std::string>());
    m.routing = routing_kind_from(meta.at("routing").get<std::string>());
    m.loss = loss_kind_from(meta.at("loss").get<std::string>());
    m.margin.gamma = meta.at("margin").at("gamma").get<double>();
    m.margin.lambda = meta.at("margin").at("lambda").get<double>();
    m.margin.b_init = meta.at("margin").at("b_init").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CompatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  if (m.schema.hash() != stored_hash)
    throw CompatError("checkpoint schema hash mismatch (header corrupt or edited)");
  if (m.head == HeadKind::kCapsule) m.caps_W.resize(m.schema.size());

  // Size every parameter, then fill by name so block order is not load-bearing.
  const std::uint32_t count = detail::get_u32(is);
  auto es = m.entries();
  if (count != es.size())
    throw CompatError("checkpoint holds " + std::to_string(count) + " parameter blocks, model wants " +
                      std::to_string(es.size()));
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = detail::get_str(is);
    const int rows = static_cast<int>(detail::get_u32(is));
    const int cols = static_cast<int>(detail::get_u32(is));
    if (rows < 0 || cols < 0 || static_cast<long long>(rows) * cols > (1ll << 30))
      throw CompatError("checkpoint corrupt: parameter " + name + " claims shape " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    Mat<T>* target = nullptr;
    for (auto& e : es)
      if (e.name == name) {
        target = e.mat;
        break;
      }
    if (!target) throw CompatError("checkpoint carries unknown parameter: " + name);
    *target = Mat<T>(rows, cols);
    for (std::size_t i = 0; i < target->size(); ++i)
      (*target)[i] = static_cast<T>(detail::get_f64(is));
  }
  m.dims.validate();
  return m;
}

}  // namespace capsrel
