#include "topicssl/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "topicssl/error.hpp"

namespace topicssl {

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double x, int digits) {
  if (x == 0.0) x = 0.0;  // drop the sign of negative zero
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
  std::string s(buf, res.ptr);
  // Tiny negatives rounded to zero should not print as "-0.000".
  if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

namespace {

template <class T>
T parse_number(std::string_view s, const char* what) {
  s = trim(s);
  T value{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError(std::string("cannot parse ") + what + " from '" + std::string(s) + "'");
  }
  return value;
}

}  // namespace

std::string serialize_corpus(const CorpusHeader& header, const std::vector<Document>& docs) {
  std::ostringstream out;
  out << "#topicssl-corpus v1 V=" << header.V << " K=" << header.K << " prior=" << header.prior
      << " seed=" << header.seed << '\n';
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    out << i << ',' << d.length() << ',';
    for (std::size_t j = 0; j < d.words.size(); ++j) {
      if (j) out << ' ';
      out << d.words[j];
    }
    if (d.w) {
      for (double x : d.w->values()) out << ',' << format_double(x);
    }
    out << '\n';
  }
  return out.str();
}

void write_corpus(const std::filesystem::path& path, const CorpusHeader& header,
                  const std::vector<Document>& docs) {
  write_file_atomic(path, serialize_corpus(header, docs));
}

Corpus parse_corpus(std::string_view text) {
  Corpus c;
  const auto lines = split(text, '\n');
  if (lines.empty() || !lines[0].starts_with("#topicssl-corpus v1")) {
    throw IoError("corpus: missing '#topicssl-corpus v1' header");
  }
  for (const auto& field : split(lines[0], ' ')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "V") c.header.V = parse_number<std::size_t>(val, "V");
    else if (key == "K") c.header.K = parse_number<std::size_t>(val, "K");
    else if (key == "prior") c.header.prior = val;
    else if (key == "seed") c.header.seed = parse_number<std::uint64_t>(val, "seed");
  }
  if (c.header.V == 0 || c.header.K == 0) throw IoError("corpus: header lacks V or K");

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto line = trim(lines[ln]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() < 3) throw IoError("corpus: malformed record on line " + std::to_string(ln + 1));
    const auto id = parse_number<std::size_t>(fields[0], "doc_id");
    if (id != c.docs.size()) throw IoError("corpus: doc ids must be consecutive from 0");
    const auto length = parse_number<std::size_t>(fields[1], "length");
    std::vector<std::uint32_t> words;
    for (const auto& tok : split(fields[2], ' ')) {
      if (trim(tok).empty()) continue;
      words.push_back(parse_number<std::uint32_t>(tok, "word id"));
    }
    if (words.size() != length) throw IoError("corpus: length field disagrees with word list");
    std::optional<TopicProportions> w;
    if (fields.size() > 3) {
      if (fields.size() != 3 + c.header.K) throw IoError("corpus: w must have K entries");
      std::vector<double> p;
      for (std::size_t j = 3; j < fields.size(); ++j) p.push_back(parse_number<double>(fields[j], "w"));
      w = ProbVec(std::move(p), 1e-6);
    }
    c.docs.push_back(Document::from_words(std::move(words), c.header.V, std::move(w)));
  }
  return c;
}

Corpus read_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

std::string serialize_topic_matrix(const Matrix& a) {
  std::ostringstream out;
  out << "word";
  for (std::size_t k = 0; k < a.cols(); ++k) out << ",topic_" << k;
  out << '\n';
  for (std::size_t v = 0; v < a.rows(); ++v) {
    out << v;
    for (std::size_t k = 0; k < a.cols(); ++k) out << ',' << format_double(a(v, k));
    out << '\n';
  }
  return out.str();
}

Matrix parse_topic_matrix(std::string_view text) {
  const auto lines = split(text, '\n');
  if (lines.empty()) throw IoError("topic matrix: empty file");
  const std::size_t K = split(lines[0], ',').size() - 1;
  std::vector<double> data;
  std::size_t V = 0;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const auto fields = split(lines[ln], ',');
    if (fields.size() != K + 1) throw IoError("topic matrix: ragged row");
    for (std::size_t k = 1; k <= K; ++k) data.push_back(parse_number<double>(fields[k], "entry"));
    ++V;
  }
  return Matrix(V, K, std::move(data));
}

}  // namespace topicssl
