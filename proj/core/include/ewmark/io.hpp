#pragma once

#include <string>
#include <vector>

#include "ewmark/types.hpp"

namespace ewmark {

// Binary embedding file ("EMB1"):
//   magic "EMB1" | u32 count | u32 dim | count*dim f32 row-major
//   | count x (u32 byte length, UTF-8 id)
// All integers and floats little-endian. Round trip is lossless at 32-bit
// float precision.
void write_embeddings_binary(const EmbeddingSet& set, const std::string& path);
EmbeddingSet read_embeddings_binary(const std::string& path);

// Text embedding file: JSON Lines, one object per line:
//   {"id": string, "text": optional string, "vector": [numbers]}
// Full decimal precision.
void write_embeddings_jsonl(const EmbeddingSet& set, const std::string& path);
EmbeddingSet read_embeddings_jsonl(const std::string& path);

// Dispatch on extension: ".emb" binary, ".jsonl"/".json" text.
void write_embeddings(const EmbeddingSet& set, const std::string& path);
EmbeddingSet read_embeddings(const std::string& path);

// Corpus file: JSON Lines {"id", "text", "label"?}. Text is tokenized on
// read (lowercase, split on non-alphanumerics).
void write_corpus(const std::vector<TextRecord>& corpus, const std::string& path);
std::vector<TextRecord> read_corpus(const std::string& path);

// Externally generated paraphrases: JSON Lines
//   {"id", "original", "paraphrases": [string]}
struct ParaphraseRecord {
  TextRecord original;
  std::vector<TextRecord> paraphrases;
};
std::vector<ParaphraseRecord> read_paraphrases(const std::string& path);
void write_paraphrases(const std::vector<ParaphraseRecord>& records,
                       const std::string& path);

}  // namespace ewmark
