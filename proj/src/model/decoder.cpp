#include "sfat/model/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sfat/errors.hpp"
#include "sfat/numerics/random.hpp"

namespace sfat {

using corpus::Vocabulary;

template <typename T>
DecoderActivations<T> decoder_forward(std::span<const TokenId> ids, const ContextEncoding<T>& context,
                                      const Tensor<T>& video, const SfatModel<T>& model, const ForwardMode& mode) {
  const auto& cfg = model.config();
  if (ids.empty() || ids[0] != Vocabulary::kBos) throw ContractError("decoder: input must start with BOS");
  if (ids.size() > cfg.p_r)
    throw DimensionError("decoder: " + std::to_string(ids.size()) + " positions exceed p_r = " + std::to_string(cfg.p_r));
  if (context.c.cols() != cfg.d_t || context.c.rows() != context.mask.size())
    throw DimensionError("decoder: context " + shape_str(context.c.shape()) + " with " + std::to_string(context.mask.size()) + " mask entries");
  if (video.numel() != cfg.d_v) throw DimensionError("decoder: video vector " + shape_str(video.shape()) + " is not d_v wide");

  const auto& D = model.dec;
  // V' as a one-position memory, normalised and bridged to the text width.
  auto memory = D.mem_ln(reshape(video, {1, cfg.d_v}));
  if (D.bridge_w.defined()) memory = add_row(matmul(memory, D.bridge_w), D.bridge_b);

  DecoderActivations<T> act;
  act.r_emb = add(embedding(D.tok_emb, ids), slice_rows(D.pos_emb, 0, ids.size()));
  auto x = act.r_emb;
  const auto self_spec = model.decoder_self_spec(), cross_spec = model.decoder_cross_spec();
  auto* drop = mode.dropout_rng();
  for (const auto& l : D.layers) {
    auto h = l.ln1(x);
    x = add(x, multi_head_attention(h, h, h, l.self_attn, self_spec, {}, drop));
    act.r_sa = x;
    h = l.ln2(x);
    x = add(x, multi_head_attention(h, context.c, context.c, l.ctx_attn, cross_spec, context.mask, drop));
    act.r_c = x;
    h = l.ln3(x);
    x = add(x, multi_head_attention(h, memory, memory, l.vid_attn, cross_spec, {}, drop));
    act.r_cv = x;
    x = add(x, l.ff(l.ln4(x), cfg.dropout, mode));
  }
  act.logits = add_row(matmul(D.final_ln(x), D.head_w), D.head_b);
  return act;
}

template <typename T>
EncodedInputs<T> encode_inputs(const corpus::ContextSample& sample, const corpus::Matrix& frame_rows,
                               const SfatModel<T>& model, const ForwardMode& mode) {
  EncodedInputs<T> in;
  in.context = encode_comments(sample.sequences, sample.mask, model, mode);
  in.frames_latent = encode_frames(frame_rows, model, mode);
  Tensor<T> joint = sample.joint.cols ? to_tensor<T>(sample.joint)
                                      : Tensor<T>::zeros({sample.mask.size(), model.config().input_embed_dim});
  in.aggregation = aggregate_frames(in.frames_latent, joint, sample.mask, model);
  return in;
}

namespace {

std::vector<TokenId> input_ids(const corpus::TokenSequence& seq, const char* what) {
  const auto ids = seq.unpadded();
  if (ids.size() < 2 || ids.front() != Vocabulary::kBos || ids.back() != Vocabulary::kEos)
    throw ContractError(std::string(what) + ": sequence must be BOS ... EOS");
  return {ids.begin(), ids.end() - 1};
}

// log-softmax of one logits row, accumulated in double.
template <typename T>
std::vector<double> row_log_softmax(const Tensor<T>& logits, std::size_t r) {
  const std::size_t V = logits.cols();
  std::vector<double> out(V);
  const auto d = logits.data().subspan(r * V, V);
  const double mx = *std::max_element(d.begin(), d.end());
  double z = 0.0;
  for (std::size_t j = 0; j < V; ++j) z += std::exp(double(d[j]) - mx);
  const double lz = mx + std::log(z);
  for (std::size_t j = 0; j < V; ++j) out[j] = double(d[j]) - lz;
  return out;
}

bool never_emitted(std::size_t id) {
  return id == std::size_t(Vocabulary::kPad) || id == std::size_t(Vocabulary::kBos) ||
         id == std::size_t(Vocabulary::kCls) || id == std::size_t(Vocabulary::kMask);
}

}  // namespace

template <typename T>
Tensor<T> target_loss(const corpus::TokenSequence& target, const EncodedInputs<T>& inputs, const SfatModel<T>& model,
                      const ForwardMode& mode) {
  const auto in = input_ids(target, "target_loss");
  const auto full = target.unpadded();
  std::vector<TokenId> targets(full.begin() + 1, full.end());
  const auto act = decoder_forward(std::span<const TokenId>(in), inputs.context, inputs.video(), model, mode);
  return cross_entropy(act.logits, std::span<const TokenId>(targets), Vocabulary::kPad);
}

template <typename T>
std::vector<double> token_logprobs(const corpus::TokenSequence& candidate, const ContextEncoding<T>& context,
                                   const Tensor<T>& video, const SfatModel<T>& model) {
  const auto ids = candidate.unpadded();
  if (ids.size() < 3) throw ScoringError("score_candidate: candidate has no tokens");
  const auto in = input_ids(candidate, "score_candidate");
  NoGradGuard no_grad;
  const auto act = decoder_forward(std::span<const TokenId>(in), context, video, model, ForwardMode::eval());
  std::vector<double> lp;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto row = row_log_softmax(act.logits, i);
    const auto next = static_cast<std::size_t>(ids[i + 1]);
    if (next >= row.size()) throw ScoringError("score_candidate: token id " + std::to_string(next) + " outside vocabulary");
    lp.push_back(row[next]);
  }
  return lp;
}

template <typename T>
double score_candidate(const corpus::TokenSequence& candidate, const ContextEncoding<T>& context,
                       const Tensor<T>& video, const SfatModel<T>& model, bool normalize) {
  const auto lp = token_logprobs(candidate, context, video, model);
  const double total = std::accumulate(lp.begin(), lp.end(), 0.0);
  return normalize ? total / double(lp.size()) : total;
}

template <typename T>
GeneratedComment generate(const ContextEncoding<T>& context, const Tensor<T>& video, const SfatModel<T>& model,
                          const DecodeStrategy& strategy, std::size_t max_len, const corpus::Vocabulary* vocab) {
  if (max_len < 1) throw ParameterError("generate: max_len must be at least 1");
  if (max_len > model.config().p_r)
    throw ParameterError("generate: max_len " + std::to_string(max_len) + " exceeds p_r = " + std::to_string(model.config().p_r));
  if (strategy.kind == DecodeStrategy::Kind::top_k && strategy.k == 0) throw ParameterError("generate: top-k needs k >= 1");
  NoGradGuard no_grad;
  std::mt19937_64 rng(derive_seed(strategy.seed, {fnv1a64("top_k")}));
  GeneratedComment out;
  std::vector<TokenId> prefix{Vocabulary::kBos};
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto act = decoder_forward(std::span<const TokenId>(prefix), context, video, model, ForwardMode::eval());
    const auto lp = row_log_softmax(act.logits, prefix.size() - 1);
    std::vector<std::size_t> allowed;
    for (std::size_t j = 0; j < lp.size(); ++j)
      if (!never_emitted(j)) allowed.push_back(j);
    // Highest first; ties by id.
    std::stable_sort(allowed.begin(), allowed.end(), [&](std::size_t a, std::size_t b) { return lp[a] > lp[b]; });
    std::size_t choice = allowed.front();
    if (strategy.kind == DecodeStrategy::Kind::top_k) {
      const std::size_t k = std::min(strategy.k, allowed.size());
      std::vector<double> w(k);
      for (std::size_t i = 0; i < k; ++i) w[i] = std::exp(lp[allowed[i]] - lp[allowed[0]]);
      choice = allowed[std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng)];
    }
    out.logprobs.push_back(lp[choice]);
    if (choice == std::size_t(Vocabulary::kEos)) {
      out.ended = true;
      break;
    }
    out.ids.push_back(static_cast<TokenId>(choice));
    if (prefix.size() == model.config().p_r) break;  // no position left to condition on
    prefix.push_back(static_cast<TokenId>(choice));
  }
  out.total_logprob = std::accumulate(out.logprobs.begin(), out.logprobs.end(), 0.0);
  out.normalized_logprob = out.total_logprob / double(out.logprobs.size());
  if (vocab) out.text = corpus::detokenize(out.ids, *vocab);
  return out;
}

#define SFAT_INSTANTIATE_DECODER(T)                                                                              \
  template DecoderActivations<T> decoder_forward<T>(std::span<const TokenId>, const ContextEncoding<T>&,           \
                                                    const Tensor<T>&, const SfatModel<T>&, const ForwardMode&);    \
  template EncodedInputs<T> encode_inputs<T>(const corpus::ContextSample&, const corpus::Matrix&,                  \
                                             const SfatModel<T>&, const ForwardMode&);                             \
  template Tensor<T> target_loss<T>(const corpus::TokenSequence&, const EncodedInputs<T>&, const SfatModel<T>&,    \
                                    const ForwardMode&);                                                           \
  template std::vector<double> token_logprobs<T>(const corpus::TokenSequence&, const ContextEncoding<T>&,         \
                                                 const Tensor<T>&, const SfatModel<T>&);                           \
  template double score_candidate<T>(const corpus::TokenSequence&, const ContextEncoding<T>&, const Tensor<T>&,    \
                                     const SfatModel<T>&, bool);                                                   \
  template GeneratedComment generate<T>(const ContextEncoding<T>&, const Tensor<T>&, const SfatModel<T>&,         \
                                        const DecodeStrategy&, std::size_t, const corpus::Vocabulary*);

SFAT_INSTANTIATE_DECODER(float)
SFAT_INSTANTIATE_DECODER(double)

}  // namespace sfat
