#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "sfat/corpus/pseudo_embed.hpp"
#include "sfat/corpus/synth.hpp"
#include "sfat/errors.hpp"
#include "sfat/evaluation/evaluation.hpp"
#include "test_util.hpp"

using namespace sfat;
using namespace sfat::eval;
using corpus::CommentRecord;

namespace {

const corpus::Corpus& synth_eval_corpus() {
  static const corpus::Corpus c = [] {
    auto dir = testing::scratch_dir("eval_synth");
    corpus::SynthConfig sc;
    sc.n_videos = 6;
    sc.duration_s = 300;
    sc.dim = 16;
    sc.eval_fraction = 0.5;
    corpus::synth_corpus(sc, dir);
    return corpus::load_corpus(dir);
  }();
  return c;
}

// One 90 s stream: "lol" x50 and rarer texts in [30, 90); the first clip's
// only response is "the answer".
corpus::Corpus popularity_corpus() {
  corpus::Corpus c;
  c.embed_dim = 8;
  corpus::VideoData v;
  v.id = "s";
  v.split = "eval";
  v.track = corpus::FrameTrack{"s", corpus::Matrix(90, 8)};
  std::vector<std::pair<std::string, int>> texts{{"lol", 50}, {"gg", 12}, {"nice", 9},  {"wow", 8},   {"pog", 7},
                                                 {"rip", 6},  {"ez", 5},  {"clutch", 4}, {"omg", 3},  {"hype", 2},
                                                 {"what a save", 1}};
  std::vector<CommentRecord> all;
  double t = 30.0;
  for (const auto& [text, n] : texts)
    for (int i = 0; i < n; ++i) {
      all.push_back({"s", t, "u", std::nullopt, text, 0});
      t = 30.0 + std::fmod(t - 30.0 + 0.53, 60.0);
    }
  all.push_back({"s", 25.0, "u", std::nullopt, "the answer", 0});
  std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.time_s < b.time_s; });
  v.comments = all;
  v.joint = corpus::Matrix(all.size(), 8);
  for (std::size_t r = 0; r < all.size(); ++r) {
    auto e = corpus::pseudo_embed(all[r].text, 8, 1);
    std::copy(e.begin(), e.end(), v.joint.row(r).begin());
  }
  c.videos.push_back(v);
  c.vocab = corpus::build_vocabulary(c.texts(""), 100, 1);
  return c;
}

}  // namespace

TEST_CASE("compute_metrics hand examples") {
  auto m = compute_metrics({1, 1, 1});
  CHECK(m.r1 == 100.0);
  CHECK(m.mr == 1.0);
  CHECK(m.mrr == 1.0);

  m = compute_metrics({4});
  CHECK(m.r1 == 0.0);
  CHECK(m.r2 == 0.0);
  CHECK(m.r5 == 100.0);
  CHECK(m.mr == 4.0);
  CHECK(m.mrr == 0.25);

  m = compute_metrics({1, 2, 5, 10});
  CHECK(m.r1 == 25.0);
  CHECK(m.r2 == 50.0);
  CHECK(m.r5 == 75.0);
  CHECK(m.mr == 4.5);
  CHECK(m.mrr == doctest::Approx(0.45).epsilon(1e-12));

  CHECK_THROWS_AS(compute_metrics({}), EvaluationError);
  CHECK_THROWS_AS(compute_metrics({0}), EvaluationError);
  CHECK_THROWS_AS(compute_metrics({11}), EvaluationError);
}

TEST_CASE("rank_of_truth: oracle scorers and index tie-break") {
  std::vector<double> s(10, 0.0);
  for (std::size_t i = 0; i < 10; ++i) s[i] = double(i);
  CHECK(rank_of_truth(s, 9) == 1);
  CHECK(rank_of_truth(s, 0) == 10);
  std::vector<double> flat(10, -1.5);
  CHECK(rank_of_truth(flat, 0) == 1);
  CHECK(rank_of_truth(flat, 7) == 8);
  s[3] = std::nan("");
  CHECK_THROWS_AS(rank_of_truth(s, 0), EvaluationError);
}

TEST_CASE("uniform random scorer over 10,000 sets") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> ranks;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> s(10);
    for (auto& x : s) x = u(rng);
    ranks.push_back(rank_of_truth(s, std::size_t(i % 10)));
  }
  auto m = compute_metrics(ranks);
  CHECK(std::abs(m.mr - 5.5) <= 0.1);
  CHECK(std::abs(m.r1 - 10.0) <= 1.0);
  CHECK(m.r1 <= m.r2);
  CHECK(m.r2 <= m.r5);
}

TEST_CASE("candidate sets: shape, distinctness, determinism") {
  const auto& c = synth_eval_corpus();
  auto pool = build_pool(c, 20, 30);
  auto windows = c.windows("eval", 20, 30);
  REQUIRE(windows.size() >= 20);
  for (auto strategy : all_strategies()) {
    for (const auto& w : windows) {
      if (w.response_comments.empty() || w.empty_context()) continue;
      auto a = build_candidate_set(w, pool, strategy, 9, c.vocab, 20);
      auto b = build_candidate_set(w, pool, strategy, 9, c.vocab, 20);
      CHECK(a.texts == b.texts);
      CHECK(a.truth == b.truth);
      REQUIRE(a.texts.size() == kSetSize);
      std::set<std::string> norm;
      for (auto& t : a.texts) norm.insert(corpus::normalize_text(t));
      CHECK(norm.size() == kSetSize);
      CHECK(a.texts[a.truth] == w.response_comments[training_target(w, 9)].text);
    }
  }
}

TEST_CASE("cosine distractors sit closer to the context than random ones") {
  const auto& c = synth_eval_corpus();
  auto pool = build_pool(c, 20, 30);
  std::size_t queries = 0, closer = 0;
  for (const auto& w : c.windows("", 20, 30)) {
    if (w.response_comments.empty() || w.empty_context()) continue;
    std::vector<double> centre(w.context_joint.cols, 0.0);
    for (std::size_t r = 0; r < w.context_joint.rows; ++r)
      for (std::size_t k = 0; k < centre.size(); ++k) centre[k] += w.context_joint.row(r)[k];
    auto mean_cos = [&](const CandidateSet& s) {
      double sum = 0;
      for (std::size_t j = 0; j < kSetSize; ++j) {
        if (j == s.truth) continue;
        const auto& e = pool.entries[std::size_t(s.pool_index[j])].joint;
        double dot = 0, ne = 0, nc = 0;
        for (std::size_t k = 0; k < e.size(); ++k) {
          dot += e[k] * centre[k];
          ne += double(e[k]) * e[k];
          nc += centre[k] * centre[k];
        }
        sum += dot / std::sqrt(ne * nc);
      }
      return sum / 9.0;
    };
    ++queries;
    closer += mean_cos(build_candidate_set(w, pool, Strategy::cosine, 1, c.vocab, 20)) >
              mean_cos(build_candidate_set(w, pool, Strategy::random, 1, c.vocab, 20));
  }
  REQUIRE(queries > 0);
  CHECK(double(closer) >= 0.95 * double(queries));
}

TEST_CASE("popularity distractors follow the stream's frequency counts") {
  auto c = popularity_corpus();
  auto pool = build_pool(c, 20, 30);
  const auto& ranked = pool.popularity.at("s");
  REQUIRE(ranked.size() == 12);
  CHECK(ranked[0] == std::pair<std::string, std::size_t>{"lol", 50});
  CHECK(ranked[1] == std::pair<std::string, std::size_t>{"gg", 12});

  auto windows = c.windows("", 20, 30);
  const corpus::ClipWindow* query = nullptr;
  for (auto& w : windows)
    for (auto& r : w.response_comments)
      if (r.text == "the answer") query = &w;
  REQUIRE(query != nullptr);
  auto set = build_candidate_set(*query, pool, Strategy::popularity, 3, c.vocab, 8);
  std::set<std::string> texts(set.texts.begin(), set.texts.end());
  CHECK(texts.count("lol") == 1);
  CHECK(texts.count("what a save") == 0);  // the least frequent text is never needed
}

TEST_CASE("insufficient pools and unusable splits raise EvaluationError") {
  corpus::Corpus c;
  c.embed_dim = 8;
  corpus::VideoData v;
  v.id = "tiny";
  v.split = "eval";
  v.track = corpus::FrameTrack{"tiny", corpus::Matrix(30, 8)};
  v.comments = {{"tiny", 1.0, "u", std::nullopt, "hello there", 0}, {"tiny", 25.0, "u", std::nullopt, "bye", 0}};
  v.joint = corpus::Matrix(2, 8);
  v.joint.row(0)[0] = v.joint.row(1)[1] = 1.0f;
  c.videos.push_back(v);
  c.vocab = corpus::build_vocabulary(c.texts(""), 50, 1);
  auto pool = build_pool(c, 20, 30);
  auto w = c.windows("", 20, 30).at(0);
  for (auto s : all_strategies()) {
    try {
      build_candidate_set(w, pool, s, 0, c.vocab, 8);
      FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
      CHECK(std::string(e.what()).find("tiny@0") != std::string::npos);
    }
  }
  EvalConfig cfg;
  cfg.split = "train";
  CHECK_THROWS_AS(evaluate(c, cfg, [](const corpus::ClipWindow&) { return SetScorer{}; }), EvaluationError);
  CHECK_THROWS_AS(parse_strategy("bm25"), ConfigError);
}

TEST_CASE("evaluate: perfect oracle and report invariants") {
  const auto& c = synth_eval_corpus();
  EvalConfig cfg;
  cfg.seed = 4;
  cfg.threads = 3;
  auto oracle = [&](const corpus::ClipWindow& w) -> SetScorer {
    const auto truth = corpus::normalize_text(w.response_comments[training_target(w, cfg.seed)].text);
    return [truth](const CandidateSet& s) {
      std::vector<double> scores;
      for (auto& t : s.texts) scores.push_back(corpus::normalize_text(t) == truth ? 1.0 : 0.0);
      return scores;
    };
  };
  auto report = evaluate(c, cfg, oracle);
  CHECK(report.n_queries > 0);
  for (auto& [s, r] : report.results) {
    CHECK(r.metrics.r1 == 100.0);
    CHECK(r.metrics.mr == 1.0);
    CHECK(r.metrics.mrr == 1.0);
  }
  auto j = report.to_json();
  for (auto key : {"cosine", "popularity", "random"})
    for (auto f : {"r1", "r2", "r5", "mr", "mrr"}) CHECK(j[key].contains(f));
  CHECK(j["n_queries"] == report.n_queries);
  CHECK(report.table().find("R@1") != std::string::npos);
}

TEST_CASE("evaluate: untrained model is at chance and reports reproduce bitwise") {
  auto dir = testing::scratch_dir("eval_chance");
  corpus::SynthConfig sc;
  sc.n_videos = 50;
  sc.duration_s = 600;
  sc.dim = 16;
  sc.eval_fraction = 0.5;
  corpus::synth_corpus(sc, dir);
  auto c = corpus::load_corpus(dir);
  auto mc = testing::tiny_config(16, c.vocab.size());
  mc.input_embed_dim = 16;
  mc.t1 = 20;
  mc.p_c = 20;
  mc.p_r = 20;
  SfatModel<float> model(mc, 21);
  EvalConfig cfg;
  cfg.seed = 2;
  cfg.max_queries = 500;
  cfg.threads = 2;
  auto a = evaluate(model, c, cfg);
  REQUIRE(a.n_queries == 500);
  const auto r1 = a.results.at(Strategy::random).metrics.r1;
  INFO("random R@1 " << r1);
  CHECK(r1 >= 5.0);
  CHECK(r1 <= 15.0);
  for (auto& [s, r] : a.results) {
    CHECK(r.metrics.r1 <= r.metrics.r2);
    CHECK(r.metrics.r2 <= r.metrics.r5);
    CHECK(r.metrics.mr >= 1.0);
    CHECK(r.metrics.mr <= 10.0);
    CHECK(r.metrics.mrr >= 0.1);
    CHECK(r.metrics.mrr <= 1.0);
  }
  cfg.threads = 1;
  cfg.max_queries = 60;
  auto b1 = evaluate(model, c, cfg);
  cfg.threads = 4;
  auto b2 = evaluate(model, c, cfg);
  CHECK(b1.to_json().dump() == b2.to_json().dump());
  for (auto s : all_strategies())
    CHECK(std::equal(b1.results.at(s).ranks.begin(), b1.results.at(s).ranks.end(), a.results.at(s).ranks.begin()));
}

TEST_CASE("model scorer names the failing candidate") {
  const auto& c = synth_eval_corpus();
  auto mc = testing::tiny_config(16, c.vocab.size());
  mc.input_embed_dim = 16;
  mc.t1 = 20;
  SfatModel<float> model(mc, 1);
  EvalConfig cfg;
  cfg.p_c = mc.p_c;
  cfg.p_r = mc.p_r;
  auto w = c.windows("eval", 20, 30).at(0);
  auto pool = build_pool(c, 20, 30);
  auto set = build_candidate_set(w, pool, Strategy::random, 0, c.vocab, mc.p_r);
  set.tokens[3] = corpus::TokenSequence{{corpus::Vocabulary::kBos, corpus::Vocabulary::kEos, 0, 0, 0, 0}};
  auto scorer = model_scorer(model, c.vocab, cfg)(w);
  try {
    scorer(set);
    FAIL("expected ScoringError");
  } catch (const ScoringError& e) {
    CHECK(std::string(e.what()).find("candidate 3") != std::string::npos);
  }
  auto other = testing::tiny_config(16, 10);
  SfatModel<float> wrong(other, 1);
  CHECK_THROWS_AS(model_scorer(wrong, c.vocab, cfg), EvaluationError);
}
