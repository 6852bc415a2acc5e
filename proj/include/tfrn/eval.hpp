#pragma once

#include <map>

#include "tfrn/model.hpp"
#include "tfrn/vocab.hpp"

namespace tfrn {

// Corpus perplexity under either inference protocol.
//   all:   non-overlapping windows; every position's NLL counts, context
//          truncated at the window start.
//   final: the window slides by one token and only the final position's NLL
//          counts, so every prediction gets the longest available context
//          (up to `window` for the attention stack; recurrent state carries
//          across the whole stream). Costs ~window times more than `all`.
// Recurrent carries persist across windows in both modes.
template <typename S>
double perplexity(const LanguageModelT<S>& model, std::span<const int> corpus, InferenceMode mode,
                  int window);

// log P(words + eos | bos), summed per position, fresh recurrent state.
template <typename S>
double sentence_logprob(const LanguageModelT<S>& model, const std::vector<std::string>& words,
                        const Vocabulary& vocab);

struct Hypothesis {
  double acoustic_score = 0.0;  // log domain
  std::vector<std::string> words;
};

struct NBestList {
  std::string utterance_id;
  std::vector<Hypothesis> hypotheses;
};

// argmax of acoustic_score + lm_weight * sentence_logprob; ties keep the
// lowest index (the decoder's original order).
std::size_t rerank(const NBestList& nbest, const LanguageModel& model, const Vocabulary& vocab,
                   double lm_weight);

struct WerStats {
  long long substitutions = 0;
  long long insertions = 0;
  long long deletions = 0;
  long long reference_length = 0;

  long long edits() const { return substitutions + insertions + deletions; }
  double rate() const;
  WerStats& operator+=(const WerStats& other);
};

// Minimum-edit alignment with unit costs; equal-cost choices prefer a
// substitution over an insertion+deletion pair.
WerStats wer(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

struct UtteranceResult {
  std::string utterance_id;
  std::size_t chosen_index = 0;
  WerStats stats;
};

struct RerankReport {
  std::vector<UtteranceResult> utterances;
  WerStats total;
};

// Lines `<utt-id>\t<words...>`.
std::map<std::string, std::vector<std::string>> load_references(const std::string& path);
// Lines `<utt-id>\t<acoustic-log-score>\t<words...>`, ids contiguous.
std::vector<NBestList> load_nbest(const std::string& path);

RerankReport corpus_wer(const std::map<std::string, std::vector<std::string>>& refs,
                        const std::vector<NBestList>& nbests, const LanguageModel& model,
                        const Vocabulary& vocab, double lm_weight);

// `<utt-id>\t<chosen-index>\t<wer>` per utterance plus a TOTAL line.
std::string format_rerank_report(const RerankReport& report);

extern template double perplexity<float>(const LanguageModelT<float>&, std::span<const int>,
                                         InferenceMode, int);
extern template double perplexity<double>(const LanguageModelT<double>&, std::span<const int>,
                                          InferenceMode, int);
extern template double sentence_logprob<float>(const LanguageModelT<float>&,
                                               const std::vector<std::string>&, const Vocabulary&);
extern template double sentence_logprob<double>(const LanguageModelT<double>&,
                                                const std::vector<std::string>&,
                                                const Vocabulary&);

}  // namespace tfrn
