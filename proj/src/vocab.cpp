#include "tfrn/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tfrn {

namespace {

Vocabulary with_reserved() {
  Vocabulary v;
  v.tokens = {Vocabulary::kUnkToken, Vocabulary::kBosToken, Vocabulary::kEosToken};
  for (int i = 0; i < 3; ++i) v.ids[v.tokens[static_cast<size_t>(i)]] = i;
  return v;
}

bool is_reserved_literal(const std::string& w) {
  return w == Vocabulary::kUnkToken || w == Vocabulary::kBosToken || w == Vocabulary::kEosToken;
}

}  // namespace

std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::string content_digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vocabulary build_vocab(const std::string& text, int max_size) {
  if (max_size <= 3)
    throw ConfigError("build_vocab: max_size must exceed the 3 reserved ids, got " +
                      std::to_string(max_size));
  std::unordered_map<std::string, long long> counts;
  std::istringstream is(text);
  std::string line;
  long long total = 0;
  while (std::getline(is, line))
    for (auto& w : split_words(line)) {
      ++total;
      if (!is_reserved_literal(w)) ++counts[w];
    }
  if (total == 0) throw DataError("build_vocab: empty input text");
  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v = with_reserved();
  const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(max_size - 3));
  for (std::size_t i = 0; i < keep; ++i) {
    v.ids[ranked[i].first] = v.size();
    v.tokens.push_back(ranked[i].first);
  }
  return v;
}

Corpus tokenize(const std::string& text, const Vocabulary& vocab, bool add_eos_per_line) {
  Corpus c;
  c.source_digest = content_digest(text);
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    for (const auto& w : split_words(line)) c.ids.push_back(vocab.id_of(w));
    if (add_eos_per_line) c.ids.push_back(Vocabulary::kEosId);
  }
  return c;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("save_vocab: cannot open " + path + " for writing");
  for (const auto& t : vocab.tokens) f << t << '\n';
  if (!f) throw DataError("save_vocab: write failed for " + path);
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_vocab: cannot open " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty())
      throw FormatError("load_vocab: " + path + ":" + std::to_string(line_no) + ": empty token");
    if (v.ids.count(line))
      throw FormatError("load_vocab: " + path + ":" + std::to_string(line_no) +
                        ": duplicate token '" + line + "'");
    v.ids[line] = v.size();
    v.tokens.push_back(line);
  }
  if (v.size() < 3 || v.tokens[0] != Vocabulary::kUnkToken ||
      v.tokens[1] != Vocabulary::kBosToken || v.tokens[2] != Vocabulary::kEosToken)
    throw FormatError("load_vocab: " + path + ": reserved tokens <unk>,<bos>,<eos> must occupy "
                      "ids 0,1,2");
  return v;
}

}  // namespace tfrn
