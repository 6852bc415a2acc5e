#include "tfrn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tfrn {

template <typename S>
double perplexity(const LanguageModelT<S>& model, std::span<const int> corpus, InferenceMode mode,
                  int window) {
  const long long l = static_cast<long long>(corpus.size());
  if (l < 2) throw DataError("perplexity: corpus needs at least 2 tokens, got " +
                             std::to_string(l));
  if (window < 1) throw ConfigError("perplexity: window must be >= 1");
  double total_nll = 0.0;
  const long long predicted = l - 1;
  CarryT<S> carry = model.make_carry();
  if (mode == InferenceMode::All) {
    long long pos = 0;
    while (pos < predicted) {
      const long long t = std::min<long long>(window, predicted - pos);
      std::span<const int> inputs = corpus.subspan(static_cast<std::size_t>(pos),
                                                   static_cast<std::size_t>(t));
      TensorT<S> logits = model.forward(inputs, &carry);
      for (long long i = 0; i < t; ++i)
        total_nll += row_nll(logits, static_cast<int>(i),
                             corpus[static_cast<std::size_t>(pos + i + 1)]);
      pos += t;
    }
  } else {
    for (long long target = 1; target < l; ++target) {
      const long long start = std::max<long long>(0, target - window);
      std::span<const int> context = corpus.subspan(static_cast<std::size_t>(start),
                                                    static_cast<std::size_t>(target - start));
      TensorT<S> logits = model.forward_final(context, &carry);
      total_nll += row_nll(logits, 0, corpus[static_cast<std::size_t>(target)]);
    }
  }
  return std::exp(total_nll / static_cast<double>(predicted));
}

template double perplexity<float>(const LanguageModelT<float>&, std::span<const int>,
                                  InferenceMode, int);
template double perplexity<double>(const LanguageModelT<double>&, std::span<const int>,
                                   InferenceMode, int);

template <typename S>
double sentence_logprob(const LanguageModelT<S>& model, const std::vector<std::string>& words,
                        const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(Vocabulary::kBosId);
  for (const auto& w : words) ids.push_back(vocab.id_of(w));
  ids.push_back(Vocabulary::kEosId);
  std::span<const int> inputs(ids.data(), ids.size() - 1);
  CarryT<S> carry = model.make_carry();
  TensorT<S> logits = model.forward(inputs, &carry);
  double logprob = 0.0;
  for (std::size_t t = 0; t + 1 < ids.size(); ++t)
    logprob -= row_nll(logits, static_cast<int>(t), ids[t + 1]);
  return logprob;
}

template double sentence_logprob<float>(const LanguageModelT<float>&,
                                        const std::vector<std::string>&, const Vocabulary&);
template double sentence_logprob<double>(const LanguageModelT<double>&,
                                         const std::vector<std::string>&, const Vocabulary&);

std::size_t rerank(const NBestList& nbest, const LanguageModel& model, const Vocabulary& vocab,
                   double lm_weight) {
  if (nbest.hypotheses.empty())
    throw DataError("rerank: utterance " + nbest.utterance_id + " has no hypotheses");
  if (lm_weight < 0.0) throw ConfigError("rerank: lm_weight must be >= 0");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nbest.hypotheses.size(); ++i) {
    const auto& hyp = nbest.hypotheses[i];
    double score = hyp.acoustic_score;
    if (lm_weight != 0.0) score += lm_weight * sentence_logprob(model, hyp.words, vocab);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

double WerStats::rate() const {
  if (reference_length == 0) throw DataError("wer rate: empty reference");
  return static_cast<double>(edits()) / static_cast<double>(reference_length);
}

WerStats& WerStats::operator+=(const WerStats& other) {
  substitutions += other.substitutions;
  insertions += other.insertions;
  deletions += other.deletions;
  reference_length += other.reference_length;
  return *this;
}

WerStats wer(const std::vector<std::string>& reference,
             const std::vector<std::string>& hypothesis) {
  const std::size_t n = reference.size(), m = hypothesis.size();
  if (n == 0) throw DataError("wer: empty reference; metric undefined");
  // cost[i][j] = min edits aligning ref[0..i) with hyp[0..j)
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = cost[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      const int del = cost[i - 1][j] + 1;
      const int ins = cost[i][j - 1] + 1;
      cost[i][j] = std::min({sub, del, ins});
    }
  WerStats stats;
  stats.reference_length = static_cast<long long>(n);
  // Backtrack, preferring match/substitution on ties so an equal-cost
  // insertion+deletion pair never displaces a substitution.
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int sub = cost[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      if (sub == cost[i][j]) {
        if (reference[i - 1] != hypothesis[j - 1]) ++stats.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cost[i - 1][j] + 1 == cost[i][j]) {
      ++stats.deletions;
      --i;
    } else {
      ++stats.insertions;
      --j;
    }
  }
  return stats;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> words_of(const std::string& field) {
  std::istringstream is(field);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace

std::map<std::string, std::vector<std::string>> load_references(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_references: cannot open " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 2 || fields[0].empty())
      throw FormatError("load_references: " + path + ":" + std::to_string(line_no) +
                        ": expected <utt-id>\\t<words...>");
    if (out.count(fields[0]))
      throw FormatError("load_references: " + path + ":" + std::to_string(line_no) +
                        ": duplicate utterance id " + fields[0]);
    out[fields[0]] = words_of(fields[1]);
  }
  return out;
}

std::vector<NBestList> load_nbest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_nbest: cannot open " + path);
  std::vector<NBestList> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 3 || fields[0].empty())
      throw FormatError("load_nbest: " + path + ":" + std::to_string(line_no) +
                        ": expected <utt-id>\\t<acoustic-log-score>\\t<words...>");
    double score = 0.0;
    try {
      std::size_t used = 0;
      score = std::stod(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
    } catch (const std::exception&) {
      throw FormatError("load_nbest: " + path + ":" + std::to_string(line_no) +
                        ": bad acoustic score '" + fields[1] + "'");
    }
    if (!std::isfinite(score))
      throw FormatError("load_nbest: " + path + ":" + std::to_string(line_no) +
                        ": acoustic score must be finite");
    if (out.empty() || out.back().utterance_id != fields[0]) {
      for (const auto& seen : out)
        if (seen.utterance_id == fields[0])
          throw FormatError("load_nbest: " + path + ":" + std::to_string(line_no) +
                            ": hypotheses for " + fields[0] + " are not contiguous");
      out.push_back(NBestList{fields[0], {}});
    }
    out.back().hypotheses.push_back(Hypothesis{score, words_of(fields[2])});
  }
  return out;
}

RerankReport corpus_wer(const std::map<std::string, std::vector<std::string>>& refs,
                        const std::vector<NBestList>& nbests, const LanguageModel& model,
                        const Vocabulary& vocab, double lm_weight) {
  RerankReport report;
  for (const auto& nbest : nbests) {
    const auto ref = refs.find(nbest.utterance_id);
    if (ref == refs.end())
      throw DataError("corpus_wer: no reference for utterance id " + nbest.utterance_id);
    UtteranceResult r;
    r.utterance_id = nbest.utterance_id;
    r.chosen_index = rerank(nbest, model, vocab, lm_weight);
    r.stats = wer(ref->second, nbest.hypotheses[r.chosen_index].words);
    report.total += r.stats;
    report.utterances.push_back(std::move(r));
  }
  return report;
}

std::string format_rerank_report(const RerankReport& report) {
  std::ostringstream os;
  char line[160];
  for (const auto& u : report.utterances) {
    std::snprintf(line, sizeof line, "%s\t%zu\t%.4f\n", u.utterance_id.c_str(), u.chosen_index,
                  u.stats.rate());
    os << line;
  }
  std::snprintf(line, sizeof line, "TOTAL\t%.4f\n", report.total.rate());
  os << line;
  return os.str();
}

}  // namespace tfrn
