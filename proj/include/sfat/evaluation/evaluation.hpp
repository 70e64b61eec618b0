#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfat/corpus/corpus_store.hpp"
#include "sfat/model/sfat_model.hpp"

namespace sfat::eval {

inline constexpr std::size_t kSetSize = 10;

enum class Strategy { cosine, popularity, random };
const std::vector<Strategy>& all_strategies();
std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Distinct (after normalization) response-window comments of the whole
/// corpus plus per-video frequency tables over every comment.
struct CandidatePool {
  struct Entry {
    std::string text;        // first occurrence, raw
    std::string normalized;
    std::vector<float> joint;  // unit row
  };
  std::vector<Entry> entries;
  std::vector<std::size_t> occurrences;  // entry index of every response comment
  // video id -> (normalized text, count), most frequent first, ties by text
  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> popularity;
  std::map<std::string, std::string> raw_text;  // normalized -> first raw occurrence
};

CandidatePool build_pool(const corpus::Corpus& corpus, int T1, int T2);

struct CandidateSet {
  std::string window_id;
  Strategy strategy = Strategy::random;
  std::vector<std::string> texts;
  std::vector<corpus::TokenSequence> tokens;  // BOS..EOS, padded to p_r
  std::vector<long> pool_index;               // -1 for the ground truth or a popularity pick
  std::size_t truth = 0;
};

// Response index used as ground truth: the training-time pick at epoch 0.
std::size_t training_target(const corpus::ClipWindow& query, std::uint64_t seed);

/// Ground truth (the training-time uniform pick at epoch 0 under `seed`) plus
/// nine distractors whose normalized text differs from it; order
/// shuffled by seed. Throws EvaluationError when fewer than nine remain.
CandidateSet build_candidate_set(const corpus::ClipWindow& query, const CandidatePool& pool, Strategy strategy,
                                 std::uint64_t seed, const corpus::Vocabulary& vocab, std::size_t p_r);

// Scores for every candidate of a set, higher = more likely.
using SetScorer = std::function<std::vector<double>(const CandidateSet&)>;

/// 1-based rank of the ground truth under a descending sort; equal scores
/// are ordered by candidate index.
std::size_t rank_of_truth(const std::vector<double>& scores, std::size_t truth);
std::size_t rank_candidates(const CandidateSet& set, const SetScorer& scorer);

struct Metrics {
  double r1 = 0, r2 = 0, r5 = 0;  // percent
  double mr = 0, mrr = 0;
  std::size_t n = 0;
  nlohmann::json to_json() const;
};

Metrics compute_metrics(const std::vector<std::size_t>& ranks);

struct EvalConfig {
  std::string split = "eval";
  int T1 = 20, T2 = 30;
  std::size_t n_c = 15;
  std::size_t p_c = 20, p_r = 20;
  std::uint64_t seed = 0;
  bool normalize = true;
  std::size_t threads = 1;
  std::size_t max_queries = 0;  // 0 = every usable window
  std::string checkpoint;       // recorded in the report only
};

struct StrategyResult {
  Metrics metrics;
  std::vector<std::size_t> ranks;  // per query, query order
  double margin = 0.0;             // mean of truth score minus mean distractor score
};

struct EvalReport {
  std::map<Strategy, StrategyResult> results;
  std::vector<std::string> query_ids;
  std::size_t n_queries = 0;
  std::size_t skipped = 0;  // windows with an empty context or response
  std::uint64_t seed = 0;
  std::string checkpoint;
  bool normalize = true;

  nlohmann::json to_json() const;
  std::string table() const;
};

// Builds the scorer for one query window; called once per query, possibly
// from several threads at once.
using ScorerFactory = std::function<SetScorer(const corpus::ClipWindow&)>;

EvalReport evaluate(const corpus::Corpus& corpus, const EvalConfig& config, const ScorerFactory& factory);

/// Log-likelihood ranking with the model in eval mode.
ScorerFactory model_scorer(const SfatModel<float>& model, const corpus::Vocabulary& vocab, const EvalConfig& config);
EvalReport evaluate(const SfatModel<float>& model, const corpus::Corpus& corpus, const EvalConfig& config);

}  // namespace sfat::eval
