#include "ewmark/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ewmark/errors.hpp"
#include "ewmark/tokenize.hpp"

namespace ewmark {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF),
               static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw MalformedError("truncated file reading " + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in, const std::string& what) {
  const std::uint32_t bits = get_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

json parse_line(const std::string& line, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedError("line " + std::to_string(line_no) + ": not a JSON object");
  }
  return j;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_embeddings_binary(const EmbeddingSet& set, const std::string& path) {
  auto out = open_out(path, std::ios::binary);
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(set.size()));
  put_u32(out, static_cast<std::uint32_t>(set.dim()));
  for (const Embedding& e : set) {
    for (double x : e.vector) put_f32(out, static_cast<float>(x));
  }
  for (const Embedding& e : set) {
    put_u32(out, static_cast<std::uint32_t>(e.id.size()));
    out.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

EmbeddingSet read_embeddings_binary(const std::string& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw MalformedError("bad magic (expected EMB1): " + path);
  }
  const std::uint32_t count = get_u32(in, "count");
  const std::uint32_t dim = get_u32(in, "dim");
  std::vector<std::vector<double>> vectors(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    vectors[i].resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) {
      vectors[i][d] = static_cast<double>(get_f32(in, "vector data"));
    }
  }
  EmbeddingSet set(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(in, "id length");
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) throw MalformedError("truncated id block");
    set.add({std::move(id), std::move(vectors[i])});
  }
  return set;
}

void write_embeddings_jsonl(const EmbeddingSet& set, const std::string& path) {
  auto out = open_out(path, std::ios::out);
  for (const Embedding& e : set) {
    json j;
    j["id"] = e.id;
    j["vector"] = e.vector;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

EmbeddingSet read_embeddings_jsonl(const std::string& path) {
  auto in = open_in(path, std::ios::in);
  EmbeddingSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    if (!j.contains("vector") || !j["vector"].is_array()) {
      throw MalformedError("line " + std::to_string(line_no) + ": missing \"vector\"");
    }
    if (!j.contains("id")) {
      throw MalformedError("line " + std::to_string(line_no) + ": missing \"id\"");
    }
    Embedding e;
    e.id = j["id"].get<std::string>();
    e.vector = j["vector"].get<std::vector<double>>();
    try {
      set.add(std::move(e));
    } catch (const Error& err) {
      throw MalformedError("line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  return set;
}

void write_embeddings(const EmbeddingSet& set, const std::string& path) {
  if (ends_with(path, ".jsonl") || ends_with(path, ".json")) {
    write_embeddings_jsonl(set, path);
  } else {
    write_embeddings_binary(set, path);
  }
}

EmbeddingSet read_embeddings(const std::string& path) {
  if (ends_with(path, ".jsonl") || ends_with(path, ".json")) {
    return read_embeddings_jsonl(path);
  }
  return read_embeddings_binary(path);
}

void write_corpus(const std::vector<TextRecord>& corpus, const std::string& path) {
  auto out = open_out(path, std::ios::out);
  for (const TextRecord& r : corpus) {
    json j;
    j["id"] = r.id;
    j["text"] = join_tokens(r.tokens);
    if (r.label) j["label"] = *r.label;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<TextRecord> read_corpus(const std::string& path) {
  auto in = open_in(path, std::ios::in);
  std::vector<TextRecord> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    if (!j.contains("id") || !j.contains("text")) {
      throw MalformedError("line " + std::to_string(line_no) +
                           ": corpus record needs \"id\" and \"text\"");
    }
    TextRecord r;
    r.id = j["id"].is_string() ? j["id"].get<std::string>()
                               : j["id"].dump();
    r.tokens = tokenize(j["text"].get<std::string>());
    if (j.contains("label") && !j["label"].is_null()) {
      r.label = j["label"].get<int>();
    }
    corpus.push_back(std::move(r));
  }
  return corpus;
}

std::vector<ParaphraseRecord> read_paraphrases(const std::string& path) {
  auto in = open_in(path, std::ios::in);
  std::vector<ParaphraseRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, line_no);
    if (!j.contains("id") || !j.contains("original") || !j.contains("paraphrases")) {
      throw MalformedError("line " + std::to_string(line_no) +
                           ": needs \"id\", \"original\", \"paraphrases\"");
    }
    ParaphraseRecord rec;
    rec.original.id = j["id"].get<std::string>();
    rec.original.tokens = tokenize(j["original"].get<std::string>());
    std::size_t k = 0;
    for (const auto& p : j["paraphrases"]) {
      TextRecord t;
      t.id = rec.original.id + "#p" + std::to_string(k++);
      t.tokens = tokenize(p.get<std::string>());
      rec.paraphrases.push_back(std::move(t));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_paraphrases(const std::vector<ParaphraseRecord>& records,
                       const std::string& path) {
  auto out = open_out(path, std::ios::out);
  for (const ParaphraseRecord& rec : records) {
    json j;
    j["id"] = rec.original.id;
    j["original"] = join_tokens(rec.original.tokens);
    json arr = json::array();
    for (const TextRecord& p : rec.paraphrases) arr.push_back(join_tokens(p.tokens));
    j["paraphrases"] = arr;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace ewmark
