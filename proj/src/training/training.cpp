#include "sfat/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sfat/corpus/preprocess.hpp"
#include "sfat/errors.hpp"
#include "sfat/numerics/random.hpp"

namespace sfat {

using corpus::Vocabulary;
using nlohmann::json;

void TrainingConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("training.learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("training.mask_prob must be in (0, 1)");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("training.beta1/beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("training.adam_eps must be positive");
}

json TrainingConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"pretrain_epochs", pretrain_epochs},
          {"train_epochs", train_epochs},
          {"mask_prob", mask_prob},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"checkpoint_every", checkpoint_every},
          {"include_empty_context", include_empty_context},
          {"skip_pretrain", skip_pretrain},
          {"init_checkpoint", init_checkpoint}};
}

TrainingConfig TrainingConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  TrainingConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key training." + key);
    const auto& ref = known[key];
    const bool ok = ref.is_boolean()  ? value.is_boolean()
                    : ref.is_string() ? value.is_string()
                    : ref.is_number_float() ? value.is_number()
                                            : value.is_number_integer() && value.get<long long>() >= 0;
    if (!ok) throw ConfigError("training." + key + " has the wrong type");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("learning_rate", c.learning_rate);
  get("batch_size", c.batch_size);
  get("pretrain_epochs", c.pretrain_epochs);
  get("train_epochs", c.train_epochs);
  get("mask_prob", c.mask_prob);
  get("beta1", c.adam.beta1);
  get("beta2", c.adam.beta2);
  get("adam_eps", c.adam.eps);
  get("checkpoint_every", c.checkpoint_every);
  get("include_empty_context", c.include_empty_context);
  get("skip_pretrain", c.skip_pretrain);
  get("init_checkpoint", c.init_checkpoint);
  return c;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,step,loss\n";
  out.precision(9);
  for (const auto& r : rows) out << r.epoch << ',' << r.step << ',' << r.loss << '\n';
}

// ---- MLM ------------------------------------------------------------------

double calibrated_mask_rate(std::size_t n, double p) {
  if (p <= 0.0 || n == 0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double target = double(n) * p;
  if (target <= 1.0) return 0.0;  // the forced mask alone already meets the rate
  // E[max(X, 1)] = n q + (1 - q)^n is increasing in q.
  double lo = 0.0, hi = p;
  for (int it = 0; it < 60; ++it) {
    const double q = 0.5 * (lo + hi);
    (double(n) * q + std::pow(1.0 - q, double(n)) < target ? lo : hi) = q;
  }
  return 0.5 * (lo + hi);
}

MaskedSequence mask_for_mlm(std::span<const TokenId> ids, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p > 1.0) throw ParameterError("mask_for_mlm: p must be in [0, 1]");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!Vocabulary::is_special(ids[i])) eligible.push_back(i);
  if (eligible.empty()) throw ContractError("mask_for_mlm: sequence has no maskable token");

  const double q = calibrated_mask_rate(eligible.size(), p);
  std::bernoulli_distribution coin(q);
  MaskedSequence out{{ids.begin(), ids.end()}, {}};
  for (auto i : eligible)
    if (coin(rng)) out.positions.push_back(i);
  if (out.positions.empty())
    out.positions.push_back(eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)]);
  for (auto i : out.positions) out.ids[i] = Vocabulary::kMask;
  return out;
}

namespace {

constexpr std::uint64_t tag(const char* s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ULL;
  return h;
}

bool maskable(const corpus::TokenSequence& s) {
  return std::any_of(s.ids.begin(), s.ids.end(), [](TokenId t) { return !Vocabulary::is_special(t); });
}

// CLS + masked tokens -> (input ids, targets with PAD everywhere but masked slots).
std::pair<std::vector<TokenId>, std::vector<TokenId>> mlm_pair(const corpus::TokenSequence& seq, double p,
                                                               std::mt19937_64& rng) {
  const auto toks = seq.unpadded();
  const auto masked = mask_for_mlm(toks, p, rng);
  std::vector<TokenId> in{Vocabulary::kCls};
  in.insert(in.end(), masked.ids.begin(), masked.ids.end());
  std::vector<TokenId> targets(in.size(), Vocabulary::kPad);
  for (auto pos : masked.positions) targets[pos + 1] = toks[pos];
  return {std::move(in), std::move(targets)};
}

Tensor<float> mlm_logits(const SfatModel<float>& model, std::span<const TokenId> in, const ForwardMode& mode) {
  return add_row(matmul(text_encoder_states(in, model, mode), model.text.mlm_w), model.text.mlm_b);
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

PretrainResult pretrain(SfatModel<float>& model, const std::vector<corpus::TokenSequence>& sequences,
                        const TrainingConfig& cfg, Adam* optimizer,
                        const std::function<void(std::size_t)>& on_epoch) {
  cfg.validate();
  PretrainResult res;
  std::vector<const corpus::TokenSequence*> usable;
  for (const auto& s : sequences) {
    if (maskable(s)) usable.push_back(&s);
    else ++res.skipped;
  }
  if (usable.empty()) throw DataError("pretrain: no comment with a maskable token");
  res.sequences = usable.size();
  Adam local(cfg.adam);
  Adam& opt = optimizer ? *optimizer : local;

  std::size_t step = opt.steps();
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto order = shuffled(usable.size(), derive_seed(cfg.seed, {tag("pretrain-order"), epoch}));
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++step, ++batches) {
      model.params().zero_grad();
      Tensor<float> total;
      std::size_t n_masked = 0;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
        std::mt19937_64 mrng(derive_seed(cfg.seed, {tag("mask"), epoch, order[i]}));
        std::mt19937_64 drng(derive_seed(cfg.seed, {tag("pretrain-dropout"), step, i}));
        auto [in, targets] = mlm_pair(*usable[order[i]], cfg.mask_prob, mrng);
        const auto k = static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](TokenId t) { return t != Vocabulary::kPad; }));
        auto ce = scale(cross_entropy(mlm_logits(model, in, {true, &drng}), std::span<const TokenId>(targets), Vocabulary::kPad), float(k));
        total = total.defined() ? add(total, ce) : ce;
        n_masked += k;
      }
      total = scale(total, 1.0f / float(n_masked));
      const double loss = total.item();
      if (!std::isfinite(loss))
        throw TrainingError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      backward(total);
      opt.step(model.params(), cfg.learning_rate);
      if (res.curve.empty()) res.first_loss = loss;
      res.curve.push_back({epoch, step, loss});
      epoch_sum += loss;
    }
    res.epoch_loss.push_back(epoch_sum / double(batches));
    if (on_epoch) on_epoch(epoch);
  }
  return res;
}

double mlm_accuracy(const SfatModel<float>& model, const std::vector<corpus::TokenSequence>& sequences, double p,
                    std::uint64_t seed) {
  NoGradGuard no_grad;
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (!maskable(sequences[i])) continue;
    std::mt19937_64 rng(derive_seed(seed, {tag("mlm-accuracy"), i}));
    auto [in, targets] = mlm_pair(sequences[i], p, rng);
    const auto logits = mlm_logits(model, in, ForwardMode::eval());
    const std::size_t V = logits.cols();
    for (std::size_t r = 0; r < targets.size(); ++r) {
      if (targets[r] == Vocabulary::kPad) continue;
      const auto row = logits.data().subspan(r * V, V);
      hit += std::size_t(std::max_element(row.begin(), row.end()) - row.begin()) == std::size_t(targets[r]);
      ++total;
    }
  }
  return total ? double(hit) / double(total) : 0.0;
}

// ---- Stage two --------------------------------------------------------------

std::vector<TrainExample> prepare_examples(const std::vector<corpus::ClipWindow>& windows,
                                           const corpus::Vocabulary& vocab, std::size_t n_c, std::size_t p_c,
                                           std::size_t p_r, bool keep_empty_context, PrepareStats* stats) {
  PrepareStats st;
  std::vector<TrainExample> out;
  for (const auto& w : windows) {
    ++st.windows;
    if (w.response_comments.empty()) {
      ++st.empty_response;
      continue;
    }
    if (w.empty_context()) {
      ++st.empty_context;
      if (!keep_empty_context) continue;
    }
    TrainExample ex;
    ex.window_id = w.id();
    ex.context = corpus::sample_context(w, n_c, vocab, p_c);
    ex.frames = w.frame_rows;
    for (const auto& r : w.response_comments) ex.responses.push_back(corpus::tokenize(r.text, vocab, p_r, true));
    out.push_back(std::move(ex));
  }
  if (stats) *stats = st;
  return out;
}

std::optional<std::size_t> select_target(const std::string& window_id, std::size_t n, std::uint64_t seed,
                                         std::size_t epoch) {
  if (n == 0) return std::nullopt;
  std::mt19937_64 rng(derive_seed(seed, {tag("target"), fnv1a64(window_id), epoch}));
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::optional<std::size_t> select_target(const corpus::ClipWindow& window, std::uint64_t seed, std::size_t epoch) {
  return select_target(window.id(), window.response_comments.size(), seed, epoch);
}

double train_step(SfatModel<float>& model, Adam& optimizer, const std::vector<const TrainExample*>& batch,
                  const TrainingConfig& cfg, std::size_t epoch, std::size_t step) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  model.params().zero_grad();
  Tensor<float> total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = *batch[i];
    const auto pick = select_target(ex.window_id, ex.responses.size(), cfg.seed, epoch);
    if (!pick) throw DataError("train_step: window " + ex.window_id + " has no response");
    std::mt19937_64 drng(derive_seed(cfg.seed, {tag("dropout"), epoch, step, i}));
    const ForwardMode mode{true, &drng};
    const auto inputs = encode_inputs(ex.context, ex.frames, model, mode);
    auto loss = target_loss(ex.responses[*pick], inputs, model, mode);
    total = total.defined() ? add(total, loss) : loss;
  }
  total = scale(total, 1.0f / float(batch.size()));
  const double loss = total.item();
  if (!std::isfinite(loss)) {
    std::string ids;
    for (const auto* ex : batch) ids += (ids.empty() ? "" : ",") + ex->window_id;
    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                        " (batch windows: " + ids + ")");
  }
  backward(total);
  optimizer.step(model.params(), cfg.learning_rate);
  return loss;
}

TrainResult train(SfatModel<float>& model, Adam& optimizer, const std::vector<TrainExample>& examples,
                  const TrainingConfig& cfg, TrainState state, const std::function<void(const TrainState&)>& on_epoch) {
  cfg.validate();
  if (examples.empty()) throw DataError("train: no usable training windows");
  TrainResult res;
  for (std::size_t epoch = state.epoch; epoch < cfg.train_epochs; ++epoch) {
    const auto order = shuffled(examples.size(), derive_seed(cfg.seed, {tag("train-order"), epoch}));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batches) {
      std::vector<const TrainExample*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(&examples[order[i]]);
      const double loss = train_step(model, optimizer, batch, cfg, epoch, state.step);
      res.curve.push_back({epoch, state.step, loss});
      ++state.step;
      sum += loss;
    }
    res.epoch_loss.push_back(sum / double(batches));
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
  res.state = state;
  return res;
}

}  // namespace sfat
