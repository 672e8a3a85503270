#pragma once

// Corpus, schema and embedding ingestion plus deterministic batching.
//
// Corpus lines are JSONL: {"tokens": [...], "head": i, "tail": j, "labels": [...]}
// with an empty label array encoding "no relation". Multi-word entities are
// merged into single tokens upstream; the loader only validates indices.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "capsrel/matrix.hpp"
#include "capsrel/rng.hpp"

namespace capsrel {

struct SentenceExample {
  std::vector<std::string> tokens;
  int head = 0;               // token position of entity 1
  int tail = 0;               // token position of entity 2
  std::vector<int> labels;    // sorted unique schema indices; empty = NA

  bool operator==(const SentenceExample&) const = default;
};

struct RelationSchema {
  std::vector<std::string> relations;      // ordered non-NA relation names
  std::optional<std::string> na_label;     // corpus label folded into NA, if any

  std::size_t size() const { return relations.size(); }
  int index_of(const std::string& name) const;
  static RelationSchema load(const std::string& path);
  void save(const std::string& path) const;
  std::uint64_t hash() const;  // FNV-1a over names + NA policy
};

// Word -> row lookup over an embedding matrix. Words missing from the map
// share the UNK row.
struct EmbeddingTable {
  std::unordered_map<std::string, int> row_of;
  Mat<double> vectors;
  int dim = 0;
  int unk_row = 0;

  int lookup(const std::string& word) const {
    auto it = row_of.find(word);
    return it == row_of.end() ? unk_row : it->second;
  }
};

std::vector<SentenceExample> load_corpus(const std::string& path, const RelationSchema& schema);
void save_corpus(const std::string& path, const std::vector<SentenceExample>& examples,
                 const RelationSchema& schema);

// Whitespace text, one `word v1 .. v_dim` per line. Appends a trailing UNK row
// drawn uniform from [-0.25, 0.25].
EmbeddingTable load_embeddings(const std::string& path, int dim, Rng& rng);

// Random table over a fixed vocabulary (no pre-trained vectors), same UNK rule.
EmbeddingTable random_embeddings(const std::vector<std::string>& vocab, int dim, Rng& rng);

// Training-split vocabulary in first-occurrence order.
std::vector<std::string> build_vocab(const std::vector<SentenceExample>& train);

// Restriction of a file-backed table to a vocabulary: one row per vocabulary
// word found in the table, plus the shared UNK row for everything else.
EmbeddingTable project_vocab(const EmbeddingTable& full, const std::vector<std::string>& vocab);

// Epoch permutation is a pure function of (seed, epoch); the final short
// batch is kept.
std::vector<std::vector<int>> batch_iter(int n_examples, int batch_size, std::uint64_t seed, int epoch);

}  // namespace capsrel
