#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tfrn/tensor.hpp"

namespace tfrn {

// Token <-> id bijection with fixed reserved ids.
struct Vocabulary {
  static constexpr int kUnkId = 0;
  static constexpr int kBosId = 1;
  static constexpr int kEosId = 2;
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kBosToken = "<bos>";
  static constexpr const char* kEosToken = "<eos>";

  std::vector<std::string> tokens;            // id -> string
  std::unordered_map<std::string, int> ids;   // string -> id

  int size() const { return static_cast<int>(tokens.size()); }
  bool contains(const std::string& w) const { return ids.count(w) != 0; }
  // Unknown words map to the reserved unknown id.
  int id_of(const std::string& w) const {
    auto it = ids.find(w);
    return it == ids.end() ? kUnkId : it->second;
  }
  const std::string& token_of(int id) const {
    if (id < 0 || id >= size())
      throw IndexError("token_of: id " + std::to_string(id) + " out of range for vocab " +
                       std::to_string(size()));
    return tokens[static_cast<size_t>(id)];
  }
};

struct Corpus {
  std::vector<int> ids;
  std::string source_digest;  // content hash of the raw text, for run logs
};

// Keeps the max_size-3 most frequent words (ties broken lexicographically)
// after the three reserved tokens.
Vocabulary build_vocab(const std::string& text, int max_size);
Corpus tokenize(const std::string& text, const Vocabulary& vocab, bool add_eos_per_line);

// One token per line, line number = id; reserved tokens stored literally.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

std::string read_text_file(const std::string& path);
std::vector<std::string> split_words(const std::string& line);
std::string content_digest(const std::string& text);  // 64-bit FNV-1a, hex

}  // namespace tfrn
