#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "topicssl/generative.hpp"

namespace topicssl {

// Writes `content` to a temporary sibling file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Shortest decimal that round-trips the double exactly.
std::string format_double(double x);
// Fixed-point with `digits` decimals; used where golden files must be stable.
std::string format_fixed(double x, int digits);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Corpus files: one header line
//   #topicssl-corpus v1 V=<V> K=<K> prior=<tag> seed=<seed>
// followed by one record per document
//   <doc_id>,<length>,<space-separated word ids>[,<w_1>,...,<w_K>]
// where the trailing generating proportions are present only when known.
struct CorpusHeader {
  std::size_t V = 0;
  std::size_t K = 0;
  std::string prior;
  std::uint64_t seed = 0;
};

std::string serialize_corpus(const CorpusHeader& header, const std::vector<Document>& docs);
void write_corpus(const std::filesystem::path& path, const CorpusHeader& header,
                  const std::vector<Document>& docs);

struct Corpus {
  CorpusHeader header;
  std::vector<Document> docs;
};
Corpus parse_corpus(std::string_view text);
Corpus read_corpus(const std::filesystem::path& path);

// Topic-word matrix as CSV: header "word,topic_0,...", one row per word.
std::string serialize_topic_matrix(const Matrix& a);
Matrix parse_topic_matrix(std::string_view text);

}  // namespace topicssl
