#include "sfat/evaluation/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "sfat/corpus/preprocess.hpp"
#include "sfat/errors.hpp"
#include "sfat/model/decoder.hpp"
#include "sfat/numerics/random.hpp"
#include "sfat/training/training.hpp"

namespace sfat::eval {

namespace {

std::uint64_t tag(std::string_view s) { return fnv1a64(s); }

double cosine(std::span<const float> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> s{Strategy::cosine, Strategy::popularity, Strategy::random};
  return s;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::cosine: return "cosine";
    case Strategy::popularity: return "popularity";
    case Strategy::random: return "random";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (auto s : all_strategies())
    if (strategy_name(s) == name) return s;
  throw ConfigError("unknown candidate strategy '" + name + "' (cosine|popularity|random)");
}

CandidatePool build_pool(const corpus::Corpus& corpus, int T1, int T2) {
  CandidatePool pool;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& w : corpus.windows("", T1, T2)) {
    for (std::size_t i = 0; i < w.response_comments.size(); ++i) {
      auto norm = corpus::normalize_text(w.response_comments[i].text);
      if (norm.empty()) continue;
      auto [it, fresh] = seen.emplace(norm, pool.entries.size());
      pool.occurrences.push_back(it->second);
      if (!fresh) continue;
      CandidatePool::Entry e{w.response_comments[i].text, norm, {}};
      if (w.response_joint.cols) {
        auto r = w.response_joint.row(i);
        e.joint.assign(r.begin(), r.end());
      }
      pool.entries.push_back(std::move(e));
    }
  }
  for (const auto& v : corpus.videos) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : v.comments) {
      auto norm = corpus::normalize_text(c.text);
      if (norm.empty()) continue;
      ++counts[norm];
      pool.raw_text.emplace(norm, c.text);
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    pool.popularity[v.id] = std::move(ranked);
  }
  return pool;
}

CandidateSet build_candidate_set(const corpus::ClipWindow& query, const CandidatePool& pool, Strategy strategy,
                                 std::uint64_t seed, const corpus::Vocabulary& vocab, std::size_t p_r) {
  const auto id = query.id();
  const auto truth = training_target(query, seed);
  const auto truth_norm = corpus::normalize_text(query.response_comments[truth].text);

  struct Pick {
    std::string text;
    long index;
  };
  std::vector<Pick> picks{{query.response_comments[truth].text, -1}};
  const std::size_t need = kSetSize - 1;

  std::vector<std::size_t> eligible;
  if (strategy != Strategy::popularity) {
    for (std::size_t i = 0; i < pool.entries.size(); ++i)
      if (pool.entries[i].normalized != truth_norm) eligible.push_back(i);
  }

  switch (strategy) {
    case Strategy::random: {
      // Draw comment occurrences, so distractors follow the same distribution
      // as the ground truth; duplicates and the truth text are redrawn.
      if (eligible.size() < need || pool.occurrences.empty()) break;
      std::mt19937_64 rng(derive_seed(seed, {tag("random"), fnv1a64(id)}));
      std::uniform_int_distribution<std::size_t> draw(0, pool.occurrences.size() - 1);
      std::unordered_set<std::size_t> taken;
      for (std::size_t attempt = 0; picks.size() < kSetSize && attempt < 1000 * kSetSize; ++attempt) {
        const auto e = pool.occurrences[draw(rng)];
        if (pool.entries[e].normalized == truth_norm || !taken.insert(e).second) continue;
        picks.push_back({pool.entries[e].text, long(e)});
      }
      // Pathologically skewed pools: finish uniformly over the distinct texts.
      for (std::size_t k = 0; picks.size() < kSetSize && k < eligible.size(); ++k) {
        std::swap(eligible[k], eligible[std::uniform_int_distribution<std::size_t>(k, eligible.size() - 1)(rng)]);
        if (taken.insert(eligible[k]).second) picks.push_back({pool.entries[eligible[k]].text, long(eligible[k])});
      }
      break;
    }
    case Strategy::cosine: {
      if (query.context_joint.rows == 0 || query.context_joint.cols == 0)
        throw EvaluationError("query " + id + ": cosine candidates need context embeddings");
      std::vector<double> centre(query.context_joint.cols, 0.0);
      for (std::size_t r = 0; r < query.context_joint.rows; ++r) {
        auto row = query.context_joint.row(r);
        for (std::size_t c = 0; c < centre.size(); ++c) centre[c] += row[c];
      }
      for (auto& x : centre) x /= double(query.context_joint.rows);
      std::vector<std::pair<double, std::size_t>> scored;
      for (auto i : eligible) {
        const auto& e = pool.entries[i];
        if (e.joint.size() != centre.size()) continue;
        scored.emplace_back(-cosine(e.joint, centre), i);
      }
      if (scored.size() < need) break;
      std::partial_sort(scored.begin(), scored.begin() + long(need), scored.end());
      for (std::size_t k = 0; k < need; ++k) picks.push_back({pool.entries[scored[k].second].text, long(scored[k].second)});
      break;
    }
    case Strategy::popularity: {
      auto it = pool.popularity.find(query.video_id);
      if (it == pool.popularity.end()) break;
      for (const auto& [norm, count] : it->second) {
        if (picks.size() == kSetSize) break;
        if (norm == truth_norm) continue;
        picks.push_back({pool.raw_text.at(norm), -1});
      }
      break;
    }
  }
  if (picks.size() != kSetSize) {
    throw EvaluationError("query " + id + ": only " + std::to_string(picks.size() - 1) + " distinct " +
                          strategy_name(strategy) + " distractors available, need " + std::to_string(need));
  }

  std::vector<std::size_t> order(kSetSize);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {tag("shuffle"), tag(strategy_name(strategy)), fnv1a64(id)}));
  std::shuffle(order.begin(), order.end(), rng);

  CandidateSet set;
  set.window_id = id;
  set.strategy = strategy;
  for (std::size_t slot = 0; slot < kSetSize; ++slot) {
    const auto& p = picks[order[slot]];
    if (order[slot] == 0) set.truth = slot;
    set.texts.push_back(p.text);
    set.tokens.push_back(corpus::tokenize(p.text, vocab, p_r, true));
    set.pool_index.push_back(p.index);
  }
  return set;
}

std::size_t training_target(const corpus::ClipWindow& query, std::uint64_t seed) {
  auto t = select_target(query, seed, 0);
  if (!t) throw EvaluationError("query " + query.id() + " has an empty response window");
  return *t;
}

std::size_t rank_of_truth(const std::vector<double>& scores, std::size_t truth) {
  if (truth >= scores.size()) throw IndexError("ground-truth index out of range");
  const double s = scores[truth];
  if (std::isnan(s)) throw EvaluationError("ground-truth score is NaN");
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (std::isnan(scores[j])) throw EvaluationError("candidate " + std::to_string(j) + " scored NaN");
    if (scores[j] > s || (scores[j] == s && j < truth)) ++rank;
  }
  return rank;
}

std::size_t rank_candidates(const CandidateSet& set, const SetScorer& scorer) {
  const auto scores = scorer(set);
  if (scores.size() != set.texts.size())
    throw EvaluationError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(set.texts.size()) + " candidates");
  return rank_of_truth(scores, set.truth);
}

nlohmann::json Metrics::to_json() const {
  return {{"r1", r1}, {"r2", r2}, {"r5", r5}, {"mr", mr}, {"mrr", mrr}};
}

Metrics compute_metrics(const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw EvaluationError("no ranks to summarise");
  Metrics m;
  m.n = ranks.size();
  std::size_t h1 = 0, h2 = 0, h5 = 0;
  double rsum = 0, rrsum = 0;
  for (auto r : ranks) {
    if (r < 1 || r > kSetSize) throw EvaluationError("rank " + std::to_string(r) + " outside [1, 10]");
    h1 += r <= 1;
    h2 += r <= 2;
    h5 += r <= 5;
    rsum += double(r);
    rrsum += 1.0 / double(r);
  }
  const double n = double(m.n);
  m.r1 = 100.0 * double(h1) / n;
  m.r2 = 100.0 * double(h2) / n;
  m.r5 = 100.0 * double(h5) / n;
  m.mr = rsum / n;
  m.mrr = rrsum / n;
  return m;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  for (const auto& [s, r] : results) {
    auto m = r.metrics.to_json();
    m["margin"] = r.margin;
    j[strategy_name(s)] = m;
  }
  j["n_queries"] = n_queries;
  j["skipped"] = skipped;
  j["seed"] = seed;
  j["checkpoint"] = checkpoint;
  j["normalize"] = normalize;
  return j;
}

std::string EvalReport::table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %7s %7s %7s %6s %6s\n", "candidates", "R@1", "R@2", "R@5", "MR", "MRR");
  out += line;
  for (const auto& [s, r] : results) {
    const auto& m = r.metrics;
    std::snprintf(line, sizeof line, "%-12s %7.2f %7.2f %7.2f %6.2f %6.3f\n", strategy_name(s).c_str(), m.r1, m.r2,
                  m.r5, m.mr, m.mrr);
    out += line;
  }
  std::snprintf(line, sizeof line, "(%zu queries, %s log-likelihood)\n", n_queries,
                normalize ? "length-normalized" : "summed");
  return out + line;
}

EvalReport evaluate(const corpus::Corpus& corpus, const EvalConfig& cfg, const ScorerFactory& factory) {
  EvalReport report;
  report.seed = cfg.seed;
  report.checkpoint = cfg.checkpoint;
  report.normalize = cfg.normalize;

  std::vector<corpus::ClipWindow> queries;
  for (auto& w : corpus.windows(cfg.split, cfg.T1, cfg.T2)) {
    if (w.response_comments.empty() || w.empty_context()) {
      ++report.skipped;
      continue;
    }
    if (cfg.max_queries && queries.size() == cfg.max_queries) break;
    queries.push_back(std::move(w));
  }
  if (queries.empty()) throw EvaluationError("no usable query windows in split '" + cfg.split + "'");
  const auto pool = build_pool(corpus, cfg.T1, cfg.T2);
  const auto& strategies = all_strategies();
  const std::size_t S = strategies.size();

  std::vector<std::size_t> ranks(queries.size() * S);
  std::vector<double> margins(queries.size() * S);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_at = queries.size();
  std::exception_ptr err;

  auto worker = [&] {
    for (std::size_t q; (q = next.fetch_add(1)) < queries.size();) {
      try {
        auto scorer = factory(queries[q]);
        for (std::size_t s = 0; s < S; ++s) {
          auto set = build_candidate_set(queries[q], pool, strategies[s], cfg.seed, corpus.vocab, cfg.p_r);
          auto scores = scorer(set);
          ranks[q * S + s] = rank_of_truth(scores, set.truth);
          double others = 0;
          for (std::size_t j = 0; j < scores.size(); ++j)
            if (j != set.truth) others += scores[j];
          margins[q * S + s] = scores[set.truth] - others / double(scores.size() - 1);
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (q < err_at) {  // report the earliest failing query, independent of scheduling
          err_at = q;
          err = std::current_exception();
        }
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(cfg.threads, 1, queries.size());
  std::vector<std::thread> pool_threads;
  for (std::size_t t = 1; t < n_threads; ++t) pool_threads.emplace_back(worker);
  worker();
  for (auto& t : pool_threads) t.join();
  if (err) std::rethrow_exception(err);

  for (std::size_t s = 0; s < S; ++s) {
    StrategyResult r;
    double msum = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      r.ranks.push_back(ranks[q * S + s]);
      msum += margins[q * S + s];
    }
    r.metrics = compute_metrics(r.ranks);
    r.margin = msum / double(queries.size());
    report.results[strategies[s]] = std::move(r);
  }
  for (const auto& q : queries) report.query_ids.push_back(q.id());
  report.n_queries = queries.size();
  return report;
}

ScorerFactory model_scorer(const SfatModel<float>& model, const corpus::Vocabulary& vocab, const EvalConfig& cfg) {
  if (model.config().vocab_size != vocab.size())
    throw EvaluationError("model vocabulary (" + std::to_string(model.config().vocab_size) +
                          ") does not match the corpus vocabulary (" + std::to_string(vocab.size()) + ")");
  return [&model, &vocab, cfg](const corpus::ClipWindow& query) -> SetScorer {
    NoGradGuard guard;
    auto sample = corpus::sample_context(query, cfg.n_c, vocab, cfg.p_c);
    auto inputs = std::make_shared<EncodedInputs<float>>(
        encode_inputs(sample, query.frame_rows, model, ForwardMode::eval()));
    return [&model, inputs, normalize = cfg.normalize](const CandidateSet& set) {
      NoGradGuard g;
      std::vector<double> scores;
      for (std::size_t i = 0; i < set.tokens.size(); ++i) {
        try {
          scores.push_back(score_candidate(set.tokens[i], inputs->context, inputs->video(), model, normalize));
        } catch (const ScoringError& e) {
          throw ScoringError("query " + set.window_id + " (" + strategy_name(set.strategy) + ") candidate " +
                             std::to_string(i) + ": " + e.what());
        }
      }
      return scores;
    };
  };
}

EvalReport evaluate(const SfatModel<float>& model, const corpus::Corpus& corpus, const EvalConfig& cfg) {
  return evaluate(corpus, cfg, model_scorer(model, corpus.vocab, cfg));
}

}  // namespace sfat::eval
