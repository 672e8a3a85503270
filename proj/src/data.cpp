#include "capsrel/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "capsrel/errors.hpp"
#include "json.hpp"

namespace capsrel {

using nlohmann::json;

int RelationSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < relations.size(); ++i)
    if (relations[i] == name) return static_cast<int>(i);
  return -1;
}

RelationSchema RelationSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("schema " + path + ": " + e.what());
  }
  RelationSchema s;
  if (!j.contains("relations") || !j["relations"].is_array())
    throw SchemaError(path + ": missing \"relations\" array");
  for (const auto& r : j["relations"]) s.relations.push_back(r.get<std::string>());
  if (j.contains("na_label") && !j["na_label"].is_null())
    s.na_label = j["na_label"].get<std::string>();
  for (std::size_t i = 0; i < s.relations.size(); ++i)
    for (std::size_t k = i + 1; k < s.relations.size(); ++k)
      if (s.relations[i] == s.relations[k]) throw SchemaError("duplicate relation " + s.relations[i]);
  if (s.na_label && s.index_of(*s.na_label) >= 0)
    throw SchemaError("NA label " + *s.na_label + " must not appear in the relation list");
  return s;
}

void RelationSchema::save(const std::string& path) const {
  json j;
  j["relations"] = relations;
  if (na_label)
    j["na_label"] = *na_label;
  else
    j["na_label"] = nullptr;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

std::uint64_t RelationSchema::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x1f;
    h *= 0x100000001b3ULL;
  };
  for (const auto& r : relations) mix(r);
  mix(na_label ? *na_label : std::string("\x01"));
  return h;
}

std::vector<SentenceExample> load_corpus(const std::string& path, const RelationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path);
  std::vector<SentenceExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    SentenceExample ex;
    try {
      ex.tokens = j.at("tokens").get<std::vector<std::string>>();
      ex.head = j.at("head").get<int>();
      ex.tail = j.at("tail").get<int>();
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const int n = static_cast<int>(ex.tokens.size());
    if (ex.head < 0 || ex.head >= n || ex.tail < 0 || ex.tail >= n)
      throw ParseError(path + ":" + std::to_string(lineno) + ": entity index out of range");
    if (ex.head == ex.tail)
      throw ParseError(path + ":" + std::to_string(lineno) + ": head and tail coincide");
    if (j.contains("labels")) {
      for (const auto& l : j["labels"]) {
        const std::string name = l.get<std::string>();
        if (schema.na_label && name == *schema.na_label) continue;  // NA-mapped labels fold into the empty set
        int idx = schema.index_of(name);
        if (idx < 0)
          throw SchemaError(path + ":" + std::to_string(lineno) + ": unknown label \"" + name + "\"");
        ex.labels.push_back(idx);
      }
      std::sort(ex.labels.begin(), ex.labels.end());
      ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()), ex.labels.end());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_corpus(const std::string& path, const std::vector<SentenceExample>& examples,
                 const RelationSchema& schema) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  for (const auto& ex : examples) {
    json j;
    j["tokens"] = ex.tokens;
    j["head"] = ex.head;
    j["tail"] = ex.tail;
    json labels = json::array();
    for (int l : ex.labels) labels.push_back(schema.relations[l]);
    j["labels"] = labels;
    out << j.dump() << "\n";
  }
}

EmbeddingTable load_embeddings(const std::string& path, int dim, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file " + path);
  std::vector<std::string> words;
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word.empty()) throw FormatError(path + ":" + std::to_string(lineno) + ": missing word");
    int got = 0;
    double v;
    while (ss >> v) {
      values.push_back(v);
      ++got;
    }
    if (got != dim)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(got));
    words.push_back(word);
  }
  EmbeddingTable t;
  t.dim = dim;
  t.vectors = Mat<double>(static_cast<int>(words.size()) + 1, dim);
  for (std::size_t i = 0; i < values.size(); ++i) t.vectors[i] = values[i];
  for (std::size_t i = 0; i < words.size(); ++i) t.row_of[words[i]] = static_cast<int>(i);
  t.unk_row = static_cast<int>(words.size());
  for (int c = 0; c < dim; ++c) t.vectors(t.unk_row, c) = rng.uniform(-0.25, 0.25);
  return t;
}

EmbeddingTable random_embeddings(const std::vector<std::string>& vocab, int dim, Rng& rng) {
  EmbeddingTable t;
  t.dim = dim;
  t.vectors = Mat<double>(static_cast<int>(vocab.size()) + 1, dim);
  rng.fill_uniform(t.vectors, -0.25, 0.25);
  for (std::size_t i = 0; i < vocab.size(); ++i) t.row_of[vocab[i]] = static_cast<int>(i);
  t.unk_row = static_cast<int>(vocab.size());
  return t;
}

std::vector<std::string> build_vocab(const std::vector<SentenceExample>& train) {
  std::vector<std::string> vocab;
  std::unordered_map<std::string, int> seen;
  for (const auto& ex : train)
    for (const auto& tok : ex.tokens)
      if (seen.emplace(tok, 1).second) vocab.push_back(tok);
  return vocab;
}

EmbeddingTable project_vocab(const EmbeddingTable& full, const std::vector<std::string>& vocab) {
  std::vector<const std::string*> kept;
  for (const auto& w : vocab) {
    auto it = full.row_of.find(w);
    if (it != full.row_of.end()) kept.push_back(&w);
  }
  EmbeddingTable t;
  t.dim = full.dim;
  t.vectors = Mat<double>(static_cast<int>(kept.size()) + 1, full.dim);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const int src = full.row_of.at(*kept[i]);
    for (int c = 0; c < full.dim; ++c) t.vectors(static_cast<int>(i), c) = full.vectors(src, c);
    t.row_of[*kept[i]] = static_cast<int>(i);
  }
  t.unk_row = static_cast<int>(kept.size());
  for (int c = 0; c < full.dim; ++c) t.vectors(t.unk_row, c) = full.vectors(full.unk_row, c);
  return t;
}

std::vector<std::vector<int>> batch_iter(int n_examples, int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<int> order(n_examples);
  for (int i = 0; i < n_examples; ++i) order[i] = i;
  Rng rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch) + 0x5851f42d4c957f2dULL)));
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int at = 0; at < n_examples; at += batch_size) {
    const int end = std::min(n_examples, at + batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

}  // namespace capsrel
