#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "sfat/corpus/corpus_store.hpp"
#include "sfat/corpus/synth.hpp"
#include "sfat/errors.hpp"
#include "sfat/training/training.hpp"
#include "test_util.hpp"

using namespace sfat;
using corpus::TokenSequence;
using corpus::Vocabulary;

namespace {

// 50 short sentences over a 40-word vocabulary.
std::vector<TokenSequence> toy_sentences(std::size_t p_c, std::size_t vocab) {
  std::mt19937_64 rng(99);
  std::vector<TokenSequence> out;
  for (int i = 0; i < 50; ++i) out.push_back(testing::random_sequence(rng, 5 + rng() % 4, p_c, vocab));
  return out;
}

struct SynthFixture {
  std::filesystem::path dir;
  corpus::Corpus corpus;
  ModelConfig cfg;
  std::vector<TrainExample> examples;

  SynthFixture() {
    dir = testing::scratch_dir("train_synth");
    corpus::SynthConfig sc;
    sc.n_videos = 2;
    sc.duration_s = 120;
    sc.dim = 16;
    sc.vocab_size = 64;
    sc.eval_fraction = 0.0;
    corpus::synth_corpus(sc, dir);
    corpus = corpus::load_corpus(dir);
    cfg = testing::tiny_config(16, corpus.vocab.size());
    cfg.input_embed_dim = 16;
    cfg.t1 = 20;
    cfg.p_c = 8;
    cfg.p_r = 8;
    examples = prepare_examples(corpus.windows("train", 20, 30), corpus.vocab, cfg.n_c_train, cfg.p_c, cfg.p_r, false);
  }
};

TrainingConfig quick_config(double lr = 3e-3, std::size_t batch = 4) {
  TrainingConfig t;
  t.learning_rate = lr;
  t.batch_size = batch;
  t.seed = 5;
  return t;
}

}  // namespace

TEST_CASE("training config defaults and json") {
  TrainingConfig t;
  CHECK(t.learning_rate == 1e-4);
  CHECK(t.batch_size == 32);
  CHECK(t.pretrain_epochs == 100);
  CHECK(t.train_epochs == 200);
  CHECK(t.mask_prob == 0.15);
  auto j = t.to_json();
  j["batch_size"] = 8;
  CHECK(TrainingConfig::from_json(j).batch_size == 8);
  j["batch_size"] = -1;
  CHECK_THROWS_AS(TrainingConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::from_json({{"nope", 1}}), ConfigError);
  t.mask_prob = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("mask_for_mlm boundary cases") {
  std::mt19937_64 rng(1);
  std::vector<TokenId> ids{Vocabulary::kBos, 7, 8, 9, Vocabulary::kEos, Vocabulary::kPad};
  for (int i = 0; i < 100; ++i) {
    auto m = mask_for_mlm(ids, 0.0, rng);
    REQUIRE(m.positions.size() == 1);
    CHECK(m.positions[0] >= 1);
    CHECK(m.positions[0] <= 3);
    CHECK(m.ids[m.positions[0]] == Vocabulary::kMask);
  }
  auto all = mask_for_mlm(ids, 1.0, rng);
  CHECK(all.positions == std::vector<std::size_t>{1, 2, 3});
  CHECK(all.ids == std::vector<TokenId>{Vocabulary::kBos, Vocabulary::kMask, Vocabulary::kMask, Vocabulary::kMask,
                                        Vocabulary::kEos, Vocabulary::kPad});
  std::vector<TokenId> special{Vocabulary::kBos, Vocabulary::kUnk, Vocabulary::kPad};
  CHECK_THROWS_AS(mask_for_mlm(special, 0.5, rng), ContractError);
}

TEST_CASE("mask_for_mlm rate over 10,000 length-10 trials") {
  std::mt19937_64 rng(2024);
  std::vector<TokenId> ids(10);
  for (std::size_t i = 0; i < 10; ++i) ids[i] = TokenId(6 + i);
  std::size_t masked = 0;
  for (int t = 0; t < 10000; ++t) masked += mask_for_mlm(ids, 0.15, rng).positions.size();
  const double rate = double(masked) / 100000.0;
  INFO("rate " << rate);
  CHECK(rate >= 0.14);
  CHECK(rate <= 0.17);
  // Calibration: E[max(Bin(n,q),1)] = n p.
  const double q = calibrated_mask_rate(10, 0.15);
  CHECK(10 * q + std::pow(1 - q, 10) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(calibrated_mask_rate(4, 0.15) == 0.0);
  CHECK(calibrated_mask_rate(4, 1.0) == 1.0);
}

TEST_CASE("select_target: single, uniform and deterministic") {
  corpus::ClipWindow w;
  w.video_id = "v";
  w.t = 30;
  w.response_comments.resize(1);
  for (std::size_t e = 0; e < 20; ++e) CHECK(select_target(w, 3, e).value() == 0);

  std::vector<std::size_t> counts(4, 0);
  for (std::size_t draw = 0; draw < 40000; ++draw)
    ++counts[select_target("v@" + std::to_string(draw % 400), 4, 11, draw / 400).value()];
  for (auto c : counts) {
    CHECK(double(c) / 40000.0 >= 0.24);
    CHECK(double(c) / 40000.0 <= 0.26);
  }
  CHECK(select_target("v@0", 4, 11, 3) == select_target("v@0", 4, 11, 3));
  w.response_comments.clear();
  CHECK_FALSE(select_target(w, 3, 0).has_value());
}

TEST_CASE("adam: first step and zero learning rate") {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({3}, {1.0f, -2.0f, 0.5f}));
  auto& w = ps.get("w");
  auto loss = [&] { return sum(mul(w, w)); };
  Adam opt;
  backward(loss());
  opt.step(ps, 0.1);
  // m̂ = g, v̂ = g² on the first step, so each weight moves by lr·sign(g).
  CHECK(w.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(w.data()[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(w.data()[2] == doctest::Approx(0.4).epsilon(1e-6));

  const std::vector<float> before(w.data().begin(), w.data().end());
  for (int i = 0; i < 5; ++i) {
    ps.zero_grad();
    backward(loss());
    opt.step(ps, 0.0);
  }
  CHECK(std::equal(before.begin(), before.end(), w.data().begin()));
  CHECK(opt.steps() == 6);
}

TEST_CASE("pretrain: initial loss, determinism and toy-corpus overfit") {
  auto cfg = testing::tiny_config(32, 40);
  cfg.heads = 2;
  cfg.l_e = 2;
  cfg.p_c = 8;
  const auto sentences = toy_sentences(cfg.p_c, cfg.vocab_size);
  auto tc = quick_config(3e-3, 4);

  tc.pretrain_epochs = 2;
  SfatModel<float> a(cfg, 1), b(cfg, 1);
  auto ra = pretrain(a, sentences, tc), rb = pretrain(b, sentences, tc);
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) CHECK(ra.curve[i].loss == rb.curve[i].loss);
  CHECK(std::abs(ra.first_loss - std::log(double(cfg.vocab_size))) <= 0.1 * std::log(double(cfg.vocab_size)));

  tc.pretrain_epochs = 200;
  SfatModel<float> m(cfg, 1);
  pretrain(m, sentences, tc);
  const double acc = mlm_accuracy(m, sentences, 0.15, 77);
  INFO("accuracy " << acc);
  CHECK(acc > 0.8);

  std::vector<TokenSequence> nothing{TokenSequence{{Vocabulary::kUnk, 0, 0}}};
  CHECK_THROWS_AS(pretrain(m, nothing, tc), DataError);
}

TEST_CASE("pretrain leaves the decoder untouched and ignores unmasked positions") {
  auto cfg = testing::tiny_config();
  SfatModel<float> m(cfg, 4);
  const std::vector<float> head(m.dec.head_w.data().begin(), m.dec.head_w.data().end());
  auto tc = quick_config();
  tc.pretrain_epochs = 1;
  std::mt19937_64 rng(3);
  std::vector<TokenSequence> seqs;
  for (int i = 0; i < 6; ++i) seqs.push_back(testing::random_sequence(rng, 4, cfg.p_c, cfg.vocab_size));
  pretrain(m, seqs, tc);
  CHECK(std::equal(head.begin(), head.end(), m.dec.head_w.data().begin()));

  // Gradient of the MLM loss w.r.t. the head bias is nonzero only through
  // masked targets: the unmasked target rows contribute exactly nothing.
  m.params().zero_grad();
  std::vector<TokenId> in{Vocabulary::kCls, Vocabulary::kMask, 9, 10};
  std::vector<TokenId> targets{Vocabulary::kPad, 8, Vocabulary::kPad, Vocabulary::kPad};
  auto logits = add_row(matmul(text_encoder_states(std::span<const TokenId>(in), m, ForwardMode::eval()), m.text.mlm_w), m.text.mlm_b);
  auto loss = cross_entropy(logits, std::span<const TokenId>(targets), Vocabulary::kPad);
  backward(loss);
  auto g = m.text.mlm_b.grad();
  auto lsm = log_softmax_rows(logits);
  for (std::size_t j = 0; j < cfg.vocab_size; ++j)
    CHECK(double(g[j]) == doctest::Approx(std::exp(double(lsm.at(1, j))) - (j == 8 ? 1.0 : 0.0)).epsilon(1e-4));
}

TEST_CASE("train: single repeated batch overfits") {
  SynthFixture fx;
  REQUIRE(fx.examples.size() >= 4);
  SfatModel<float> m(fx.cfg, 3);
  Adam opt;
  auto tc = quick_config(3e-3);
  std::vector<const TrainExample*> batch{&fx.examples[0], &fx.examples[1], &fx.examples[2], &fx.examples[3]};
  std::vector<double> losses;
  for (std::size_t step = 0; step < 300; ++step) losses.push_back(train_step(m, opt, batch, tc, 0, step));
  CHECK(std::abs(losses[0] - std::log(double(fx.cfg.vocab_size))) <= 0.1 * std::log(double(fx.cfg.vocab_size)));
  std::size_t rises = 0;
  for (std::size_t i = 11; i < losses.size(); ++i) rises += losses[i] > losses[i - 1];
  INFO("final " << losses.back() << " rises " << rises);
  CHECK(losses.back() < 0.1);
  CHECK(rises == 0);
}

TEST_CASE("train: determinism, zero learning rate, NaN abort") {
  SynthFixture fx;
  auto tc = quick_config(1e-3);
  tc.train_epochs = 2;
  SfatModel<float> a(fx.cfg, 8), b(fx.cfg, 8);
  Adam oa, ob;
  auto ra = train(a, oa, fx.examples, tc);
  auto rb = train(b, ob, fx.examples, tc);
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) CHECK(ra.curve[i].loss == rb.curve[i].loss);
  for (auto& [name, t] : a.params()) {
    auto other = b.params().get(name).data();
    CHECK(std::equal(t.data().begin(), t.data().end(), other.begin()));
  }

  tc.learning_rate = 0.0;
  SfatModel<float> frozen(fx.cfg, 8);
  auto before = frozen.clone();
  Adam oz;
  train(frozen, oz, fx.examples, tc);
  for (auto& [name, t] : frozen.params()) {
    auto orig = before.params().get(name).data();
    CHECK(std::equal(t.data().begin(), t.data().end(), orig.begin()));
  }

  SfatModel<float> broken(fx.cfg, 8);
  broken.dec.head_b.mutable_data()[7] = std::nanf("");
  Adam on;
  try {
    train(broken, on, fx.examples, tc);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("v00") != std::string::npos);
  }
  CHECK_THROWS_AS(train(broken, on, {}, tc), DataError);
}

TEST_CASE("checkpoint: lossless round trip and resume") {
  SynthFixture fx;
  auto tc = quick_config(1e-3);
  tc.train_epochs = 1;
  SfatModel<float> m(fx.cfg, 12);
  Adam opt;
  auto first = train(m, opt, fx.examples, tc);
  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir, m, &opt, first.state, 12, {{"note", "x"}});
  auto cp = load_checkpoint(dir);
  REQUIRE(cp.model);
  REQUIRE(cp.optimizer);
  CHECK(cp.state.epoch == 1);
  CHECK(cp.extra["note"] == "x");
  for (auto& [name, t] : m.params()) {
    auto back = cp.model->params().get(name);
    CHECK(back.shape() == t.shape());
    CHECK(std::memcmp(back.data().data(), t.data().data(), t.numel() * sizeof(float)) == 0);
  }
  CHECK(cp.optimizer->steps() == opt.steps());
  for (auto& [name, mv] : opt.state()) {
    CHECK(cp.optimizer->state().at(name).m == mv.m);
    CHECK(cp.optimizer->state().at(name).v == mv.v);
  }

  tc.train_epochs = 2;
  auto uninterrupted = m.clone();
  Adam uopt = opt;
  auto cont = train(uninterrupted, uopt, fx.examples, tc, first.state);
  auto resumed = train(*cp.model, *cp.optimizer, fx.examples, tc, cp.state);
  REQUIRE(cont.curve.size() == resumed.curve.size());
  CHECK(cont.curve[0].loss == resumed.curve[0].loss);
  CHECK(cont.curve.back().loss == resumed.curve.back().loss);

  std::filesystem::resize_file(dir / "params.sfeb", std::filesystem::file_size(dir / "params.sfeb") - 4);
  CHECK_THROWS_AS(load_checkpoint(dir), LengthError);
}
