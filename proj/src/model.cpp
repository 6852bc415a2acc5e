#include "tfrn/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace tfrn {

std::string to_string(Family f) {
  switch (f) {
    case Family::Transformer: return "transformer";
    case Family::Lstm: return "lstm";
    case Family::TransfoRnn: return "transfornn";
  }
  throw ConfigError("unknown family value");
}

std::string to_string(InferenceMode m) {
  return m == InferenceMode::All ? "all" : "final";
}

Family family_from_string(const std::string& s) {
  if (s == "transformer") return Family::Transformer;
  if (s == "lstm") return Family::Lstm;
  if (s == "transfornn") return Family::TransfoRnn;
  throw ConfigError("unknown family '" + s + "' (expected transformer|lstm|transfornn)");
}

InferenceMode inference_mode_from_string(const std::string& s) {
  if (s == "all") return InferenceMode::All;
  if (s == "final") return InferenceMode::Final;
  throw ConfigError("unknown inference mode '" + s + "' (expected all|final)");
}

ModelConfig ModelConfig::normalized() const {
  ModelConfig cfg = *this;
  if (cfg.m_lstm_layers > 0 && cfg.lstm_hidden == 0) cfg.lstm_hidden = cfg.d_model;
  if (cfg.m_lstm_layers == 0) cfg.lstm_hidden = 0;
  return cfg;
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("config: vocab_size must be at least 2");
  if (d_model < 1) throw ConfigError("config: d must be positive");
  if (n_transformer_layers < 0 || m_lstm_layers < 0)
    throw ConfigError("config: layer counts must be non-negative");
  switch (family) {
    case Family::Transformer:
      if (n_transformer_layers < 1)
        throw ConfigError("config: transformer family needs n_layers >= 1");
      if (m_lstm_layers != 0)
        throw ConfigError("config: transformer family requires m_layers == 0");
      break;
    case Family::Lstm:
      if (n_transformer_layers != 0)
        throw ConfigError("config: lstm family requires n_layers == 0");
      if (m_lstm_layers < 1) throw ConfigError("config: lstm family needs m_layers >= 1");
      break;
    case Family::TransfoRnn:
      if (n_transformer_layers < 1 || m_lstm_layers < 1)
        throw ConfigError("config: transfornn family needs n_layers >= 1 and m_layers >= 1");
      break;
  }
  if (n_transformer_layers > 0) {
    if (heads < 1) throw ConfigError("config: heads must be positive");
    if (d_model % heads != 0)
      throw ConfigError("config: d=" + std::to_string(d_model) + " not divisible by heads=" +
                        std::to_string(heads));
    if (d_ff < 1) throw ConfigError("config: d_ff must be positive");
  }
  if (m_lstm_layers > 0 && lstm_hidden < 1)
    throw ConfigError("config: lstm_hidden must be positive");
  if (tied_output && feature_width() != d_model)
    throw ConfigError("config: tied output requires lstm_hidden == d (got " +
                      std::to_string(feature_width()) + " vs " + std::to_string(d_model) + ")");
}

std::vector<std::pair<std::string, std::vector<int>>> named_shapes(const ModelConfig& raw) {
  const ModelConfig cfg = raw.normalized();
  cfg.validate();
  const int d = cfg.d_model, v = cfg.vocab_size, h = cfg.lstm_hidden;
  std::vector<std::pair<std::string, std::vector<int>>> out;
  out.emplace_back("embedding.weight", std::vector<int>{v, d});
  for (int l = 0; l < cfg.n_transformer_layers; ++l) {
    const std::string base = "transformer." + std::to_string(l) + ".";
    for (const char* w : {"attn.w_q", "attn.b_q", "attn.w_k", "attn.b_k", "attn.w_v", "attn.b_v",
                          "attn.w_o", "attn.b_o"}) {
      const bool is_matrix = w[5] == 'w';
      out.emplace_back(base + w, is_matrix ? std::vector<int>{d, d} : std::vector<int>{d});
    }
    out.emplace_back(base + "ln1.gain", std::vector<int>{d});
    out.emplace_back(base + "ln1.bias", std::vector<int>{d});
    out.emplace_back(base + "ff.w1", std::vector<int>{d, cfg.d_ff});
    out.emplace_back(base + "ff.b1", std::vector<int>{cfg.d_ff});
    out.emplace_back(base + "ff.w2", std::vector<int>{cfg.d_ff, d});
    out.emplace_back(base + "ff.b2", std::vector<int>{d});
    out.emplace_back(base + "ln2.gain", std::vector<int>{d});
    out.emplace_back(base + "ln2.bias", std::vector<int>{d});
  }
  for (int l = 0; l < cfg.m_lstm_layers; ++l) {
    const std::string base = "lstm." + std::to_string(l) + ".";
    out.emplace_back(base + "w_x", std::vector<int>{l == 0 ? d : h, 4 * h});
    out.emplace_back(base + "w_h", std::vector<int>{h, 4 * h});
    out.emplace_back(base + "b", std::vector<int>{4 * h});
  }
  if (!cfg.tied_output)
    out.emplace_back("output.weight", std::vector<int>{cfg.feature_width(), v});
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& [name, shape] : named_shapes(cfg)) {
    std::size_t t = 1;
    for (int dim : shape) t *= static_cast<std::size_t>(dim);
    n += t;
  }
  return n;
}

namespace {

// Checkpoint layout: "TFRN", u32 version, u32-length key=value config block,
// then per-tensor records (u16 name length, name, u8 rank, u64 dims, f32
// data), all little-endian.
constexpr char kMagic[4] = {'T', 'F', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(raw(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint64_t raw(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw FormatError("checkpoint " + path_ + ": truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  const std::string path_;
  std::size_t pos_ = 0;
};

int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw FormatError("checkpoint config: bad integer '" + v + "' for key " + key);
  }
}

}  // namespace

std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "family=" << to_string(cfg.family) << '\n'
     << "vocab_size=" << cfg.vocab_size << '\n'
     << "d_model=" << cfg.d_model << '\n'
     << "n_layers=" << cfg.n_transformer_layers << '\n'
     << "m_layers=" << cfg.m_lstm_layers << '\n'
     << "heads=" << cfg.heads << '\n'
     << "d_ff=" << cfg.d_ff << '\n'
     << "lstm_hidden=" << cfg.lstm_hidden << '\n'
     << "use_positional=" << (cfg.use_positional ? 1 : 0) << '\n'
     << "tied_output=" << (cfg.tied_output ? 1 : 0) << '\n'
     << "inference_mode=" << to_string(cfg.inference_mode) << '\n'
     << "seed=" << cfg.seed << '\n';
  return os.str();
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig cfg;
  std::map<std::string, bool> seen;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("checkpoint config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (seen[key]) throw FormatError("checkpoint config: duplicate key " + key);
    seen[key] = true;
    if (key == "family") cfg.family = family_from_string(value);
    else if (key == "vocab_size") cfg.vocab_size = parse_int(value, key);
    else if (key == "d_model") cfg.d_model = parse_int(value, key);
    else if (key == "n_layers") cfg.n_transformer_layers = parse_int(value, key);
    else if (key == "m_layers") cfg.m_lstm_layers = parse_int(value, key);
    else if (key == "heads") cfg.heads = parse_int(value, key);
    else if (key == "d_ff") cfg.d_ff = parse_int(value, key);
    else if (key == "lstm_hidden") cfg.lstm_hidden = parse_int(value, key);
    else if (key == "use_positional") cfg.use_positional = parse_int(value, key) != 0;
    else if (key == "tied_output") cfg.tied_output = parse_int(value, key) != 0;
    else if (key == "inference_mode") cfg.inference_mode = inference_mode_from_string(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else throw FormatError("checkpoint config: unknown key " + key);
  }
  const char* required[] = {"family", "vocab_size", "d_model", "n_layers", "m_layers",
                            "heads",  "d_ff",       "lstm_hidden", "use_positional",
                            "tied_output", "inference_mode", "seed"};
  for (const char* key : required)
    if (!seen[key]) throw FormatError(std::string("checkpoint config: missing key ") + key);
  return cfg;
}

void save_checkpoint(const LanguageModel& model, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string cfg = config_to_text(model.config);
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  for (const auto& np : model.params()) {
    if (np.name.size() > 0xffff)
      throw FormatError("checkpoint: tensor name too long: " + np.name);
    put_u16(out, static_cast<std::uint16_t>(np.name.size()));
    out += np.name;
    out.push_back(static_cast<char>(np.tensor.rank()));
    for (int dim : np.tensor.shape) put_u64(out, static_cast<std::uint64_t>(dim));
    for (float v : *np.tensor.data) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path);
}

LanguageModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  Reader r(bytes, path);
  if (r.str(4) != std::string(kMagic, 4))
    throw FormatError("checkpoint " + path + ": bad magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  const std::uint32_t cfg_len = r.u32();
  const ModelConfig cfg = config_from_text(r.str(cfg_len));
  LanguageModel model = LanguageModel::build(cfg, /*trainable=*/true);
  for (auto& np : model.params()) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    if (name != np.name)
      throw FormatError("checkpoint " + path + ": expected tensor " + np.name + ", found " + name);
    const int rank = static_cast<int>(r.u8());
    if (rank != np.tensor.rank())
      throw FormatError("checkpoint " + path + ": tensor " + name + " rank " +
                        std::to_string(rank) + " does not match " + shape_str(np.tensor.shape));
    std::vector<int> dims(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) dims[static_cast<std::size_t>(i)] = static_cast<int>(r.u64());
    if (dims != np.tensor.shape)
      throw FormatError("checkpoint " + path + ": tensor " + name + " shape " + shape_str(dims) +
                        " does not match " + shape_str(np.tensor.shape));
    for (std::size_t i = 0; i < np.tensor.numel(); ++i) (*np.tensor.data)[i] = r.f32();
  }
  if (!r.exhausted())
    throw FormatError("checkpoint " + path + ": " + std::to_string(r.remaining()) +
                      " trailing bytes");
  return model;
}

}  // namespace tfrn
