#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "capsrel/data.hpp"
#include "capsrel/errors.hpp"
#include "support/synth.hpp"

using namespace capsrel;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("capsrel_data_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

RelationSchema two_rel_schema() {
  RelationSchema s;
  s.relations = {"PB", "PL"};
  return s;
}

}  // namespace

TEST_CASE("corpus line with empty labels decodes as NA") {
  TempDir td;
  write_file(td.file("c.jsonl"), R"({"tokens":["a","b"],"head":0,"tail":1,"labels":[]})"
                                 "\n");
  auto ex = load_corpus(td.file("c.jsonl"), two_rel_schema());
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].tokens == std::vector<std::string>{"a", "b"});
  CHECK(ex[0].head == 0);
  CHECK(ex[0].tail == 1);
  CHECK(ex[0].labels.empty());
}

TEST_CASE("a sentence can carry two labels at once") {
  TempDir td;
  write_file(td.file("c.jsonl"),
             R"({"tokens":["x","y","z"],"head":0,"tail":2,"labels":["PL","PB"]})"
             "\n");
  auto ex = load_corpus(td.file("c.jsonl"), two_rel_schema());
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].labels == std::vector<int>{0, 1});  // sorted schema indices
}

TEST_CASE("duplicate labels collapse and NA-mapped labels fold away") {
  TempDir td;
  RelationSchema s = two_rel_schema();
  s.na_label = "Other";
  write_file(td.file("c.jsonl"),
             R"({"tokens":["x","y"],"head":1,"tail":0,"labels":["PB","PB","Other"]})"
             "\n");
  auto ex = load_corpus(td.file("c.jsonl"), s);
  CHECK(ex[0].labels == std::vector<int>{0});

  write_file(td.file("na.jsonl"), R"({"tokens":["x","y"],"head":0,"tail":1,"labels":["Other"]})"
                                  "\n");
  CHECK(load_corpus(td.file("na.jsonl"), s)[0].labels.empty());
}

TEST_CASE("malformed corpus lines report their line number") {
  TempDir td;
  write_file(td.file("c.jsonl"), R"({"tokens":["a","b"],"head":0,"tail":1,"labels":[]})"
                                 "\n{not json\n");
  try {
    load_corpus(td.file("c.jsonl"), two_rel_schema());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("unknown labels are schema errors, bad indices are parse errors") {
  TempDir td;
  write_file(td.file("bad_label.jsonl"),
             R"({"tokens":["a","b"],"head":0,"tail":1,"labels":["nope"]})"
             "\n");
  CHECK_THROWS_AS(load_corpus(td.file("bad_label.jsonl"), two_rel_schema()), SchemaError);

  write_file(td.file("oob.jsonl"), R"({"tokens":["a","b"],"head":0,"tail":5,"labels":[]})"
                                   "\n");
  CHECK_THROWS_AS(load_corpus(td.file("oob.jsonl"), two_rel_schema()), ParseError);

  write_file(td.file("same.jsonl"), R"({"tokens":["a","b"],"head":1,"tail":1,"labels":[]})"
                                    "\n");
  CHECK_THROWS_AS(load_corpus(td.file("same.jsonl"), two_rel_schema()), ParseError);
}

TEST_CASE("corpus save/load round-trips the synthetic corpus exactly") {
  TempDir td;
  auto data = synth::make_synth_corpus(7);
  save_corpus(td.file("train.jsonl"), data.train, data.schema);
  auto back = load_corpus(td.file("train.jsonl"), data.schema);
  REQUIRE(back.size() == data.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == data.train[i]);
}

TEST_CASE("schema files validate and round-trip") {
  TempDir td;
  RelationSchema s = two_rel_schema();
  s.na_label = "Other";
  s.save(td.file("schema.json"));
  RelationSchema back = RelationSchema::load(td.file("schema.json"));
  CHECK(back.relations == s.relations);
  CHECK(back.na_label == s.na_label);
  CHECK(back.hash() == s.hash());

  write_file(td.file("dup.json"), R"({"relations":["A","A"],"na_label":null})");
  CHECK_THROWS_AS(RelationSchema::load(td.file("dup.json")), SchemaError);
  write_file(td.file("na_in_list.json"), R"({"relations":["A","B"],"na_label":"B"})");
  CHECK_THROWS_AS(RelationSchema::load(td.file("na_in_list.json")), SchemaError);

  RelationSchema other = two_rel_schema();
  other.relations[1] = "PLX";
  CHECK(other.hash() != s.hash());
}

TEST_CASE("embedding file with 2 words and dim 3 yields 3 rows") {
  TempDir td;
  write_file(td.file("emb.txt"), "cat 0.1 0.2 0.3\ndog -1 0 1\n");
  Rng rng(3);
  EmbeddingTable t = load_embeddings(td.file("emb.txt"), 3, rng);
  CHECK(t.vectors.rows() == 3);  // 2 words + UNK
  CHECK(t.dim == 3);
  CHECK(t.lookup("cat") == 0);
  CHECK(t.lookup("dog") == 1);
  CHECK(t.lookup("zebra") == t.unk_row);
  for (int c = 0; c < 3; ++c) {
    CHECK(t.vectors(t.unk_row, c) >= -0.25);
    CHECK(t.vectors(t.unk_row, c) <= 0.25);
  }
  CHECK(t.vectors(0, 2) == 0.3);
  CHECK(t.vectors(1, 0) == -1.0);
}

TEST_CASE("a 50-dimensional embedding file loads under dim=50") {
  TempDir td;
  std::string line = "word";
  for (int i = 0; i < 50; ++i) line += " 0.01";
  write_file(td.file("emb50.txt"), line + "\n");
  Rng rng(4);
  EmbeddingTable t = load_embeddings(td.file("emb50.txt"), 50, rng);
  CHECK(t.vectors.cols() == 50);
  CHECK(t.vectors.rows() == 2);
}

TEST_CASE("short embedding rows are format errors with the line number") {
  TempDir td;
  std::string good = "w1", bad = "w2";
  for (int i = 0; i < 50; ++i) good += " 0.5";
  for (int i = 0; i < 49; ++i) bad += " 0.5";
  write_file(td.file("emb.txt"), good + "\n" + bad + "\n");
  try {
    Rng rng(5);
    load_embeddings(td.file("emb.txt"), 50, rng);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2:") != std::string::npos);
    CHECK(msg.find("49") != std::string::npos);
  }
}

TEST_CASE("vocabulary keeps first-occurrence order and projection keeps found rows") {
  SentenceExample a;
  a.tokens = {"b", "a", "b", "c"};
  a.head = 0;
  a.tail = 1;
  SentenceExample b;
  b.tokens = {"c", "d"};
  b.head = 0;
  b.tail = 1;
  auto vocab = build_vocab({a, b});
  CHECK(vocab == std::vector<std::string>{"b", "a", "c", "d"});

  Rng rng(6);
  EmbeddingTable full = random_embeddings({"a", "c", "q"}, 4, rng);
  EmbeddingTable proj = project_vocab(full, vocab);
  CHECK(proj.vectors.rows() == 3);  // a, c + UNK
  CHECK(proj.lookup("a") != proj.unk_row);
  CHECK(proj.lookup("c") != proj.unk_row);
  CHECK(proj.lookup("b") == proj.unk_row);
  CHECK(proj.lookup("d") == proj.unk_row);
  for (int c = 0; c < 4; ++c)
    CHECK(proj.vectors(proj.lookup("a"), c) == full.vectors(full.lookup("a"), c));
}

TEST_CASE("batching: 5 examples at batch 2 gives sizes 2,2,1") {
  auto batches = batch_iter(5, 2, 42, 0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);
}

TEST_CASE("batching is a pure function of seed and epoch and covers everything once") {
  auto a = batch_iter(37, 10, 9, 3);
  auto b = batch_iter(37, 10, 9, 3);
  CHECK(a == b);
  auto c = batch_iter(37, 10, 9, 4);
  CHECK(a != c);  // epoch reshuffles
  auto d = batch_iter(37, 10, 8, 3);
  CHECK(a != d);  // seed reshuffles

  CHECK(a.size() == 4);  // ceil(37/10)
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& batch : a) {
    total += batch.size();
    for (int i : batch) seen.insert(i);
  }
  CHECK(total == 37);
  CHECK(seen.size() == 37);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 36);
}

TEST_CASE("batch size below 1 is rejected") {
  CHECK_THROWS_AS(batch_iter(5, 0, 1, 0), ConfigError);
}

TEST_CASE("synthetic corpus has the advertised shape") {
  auto data = synth::make_synth_corpus(123);
  CHECK(data.vocab.size() == 50);
  CHECK(data.schema.size() == 4);
  CHECK(data.train.size() == 200);
  CHECK(data.test.size() == 100);
  int two = 0, one = 0, na = 0;
  for (const auto& ex : data.train) {
    if (ex.labels.size() == 2) ++two;
    if (ex.labels.size() == 1) ++one;
    if (ex.labels.empty()) ++na;
    CHECK(ex.head != ex.tail);
    CHECK(ex.head < static_cast<int>(ex.tokens.size()));
    CHECK(ex.tail < static_cast<int>(ex.tokens.size()));
  }
  CHECK(two == 60);  // 30% of 200
  CHECK(one == 120);
  CHECK(na == 20);
  // regeneration with the same seed is identical
  auto again = synth::make_synth_corpus(123);
  CHECK(again.train == data.train);
  CHECK(again.test == data.test);
}
