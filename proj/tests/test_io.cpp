#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ewmark/io.hpp"
#include "ewmark/rng.hpp"

using namespace ewmark;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ewmark_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

EmbeddingSet random_set(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingSet set(dim);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    // Values representable at 32-bit precision so binary round trips are
    // exact by construction.
    for (double& x : v) x = static_cast<double>(static_cast<float>(rng.normal()));
    set.add({"id" + std::to_string(i), std::move(v)});
  }
  return set;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("binary embeddings: write/read is identity (property over random sets)") {
  TempDir dir;
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t count = 1 + rng.uniform_int(20);
    const std::size_t dim = 2 + rng.uniform_int(32);
    const EmbeddingSet set = random_set(count, dim, 100 + trial);
    const std::string path = dir.file("set" + std::to_string(trial) + ".emb");
    write_embeddings_binary(set, path);
    const EmbeddingSet back = read_embeddings_binary(path);
    REQUIRE(back.size() == set.size());
    REQUIRE(back.dim() == set.dim());
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(back[i].id == set[i].id);
      CHECK(back[i].vector == set[i].vector);
    }
    // Re-serialization is bitwise identical.
    const std::string path2 = dir.file("set" + std::to_string(trial) + "b.emb");
    write_embeddings_binary(back, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
  }
}

TEST_CASE("binary embeddings: bad magic rejected") {
  TempDir dir;
  const std::string path = dir.file("bad.emb");
  std::ofstream(path, std::ios::binary) << "EMB2xxxxxxxx";
  CHECK_THROWS_AS(read_embeddings_binary(path), MalformedError);
}

TEST_CASE("jsonl embeddings: full-precision round trip") {
  TempDir dir;
  EmbeddingSet set(3);
  set.add({"a", {0.1234567890123456789, -1.0 / 3.0, 2e-17}});
  set.add({"b", {1.0, 2.0, 3.0}});
  const std::string path = dir.file("set.jsonl");
  write_embeddings_jsonl(set, path);
  const EmbeddingSet back = read_embeddings_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].vector == set[0].vector);
  CHECK(back[1].vector == set[1].vector);
}

TEST_CASE("jsonl embeddings: missing vector reports line number") {
  TempDir dir;
  const std::string path = dir.file("bad.jsonl");
  std::ofstream(path) << R"({"id":"a","vector":[1,0]})" << "\n"
                      << R"({"id":"b"})" << "\n";
  try {
    read_embeddings_jsonl(path);
    FAIL("expected MalformedError");
  } catch (const MalformedError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("jsonl embeddings: duplicate id and dim mismatch rejected") {
  TempDir dir;
  const std::string path = dir.file("dup.jsonl");
  std::ofstream(path) << R"({"id":"a","vector":[1,0]})" << "\n"
                      << R"({"id":"a","vector":[0,1]})" << "\n";
  CHECK_THROWS_AS(read_embeddings_jsonl(path), MalformedError);

  const std::string path2 = dir.file("dim.jsonl");
  std::ofstream(path2) << R"({"id":"a","vector":[1,0]})" << "\n"
                       << R"({"id":"b","vector":[1,0,0]})" << "\n";
  CHECK_THROWS_AS(read_embeddings_jsonl(path2), MalformedError);
}

TEST_CASE("corpus round trip with optional labels") {
  TempDir dir;
  std::vector<TextRecord> corpus;
  corpus.push_back({"t0", {"the", "quick", "fox"}, 1});
  corpus.push_back({"t1", {"lazy", "dog"}, std::nullopt});
  const std::string path = dir.file("corpus.jsonl");
  write_corpus(corpus, path);
  const auto back = read_corpus(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].tokens == corpus[0].tokens);
  CHECK(back[0].label == 1);
  CHECK(!back[1].label.has_value());
}

TEST_CASE("paraphrase records round trip") {
  TempDir dir;
  std::vector<ParaphraseRecord> records(1);
  records[0].original = {"t0", {"a", "b", "c"}, std::nullopt};
  records[0].paraphrases.push_back({"t0#p0", {"a", "bv2", "c"}, std::nullopt});
  records[0].paraphrases.push_back({"t0#p1", {"av1", "b", "cv3"}, std::nullopt});
  const std::string path = dir.file("para.jsonl");
  write_paraphrases(records, path);
  const auto back = read_paraphrases(path);
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].paraphrases.size() == 2);
  CHECK(back[0].original.tokens == records[0].original.tokens);
  CHECK(back[0].paraphrases[1].tokens == records[0].paraphrases[1].tokens);
}
