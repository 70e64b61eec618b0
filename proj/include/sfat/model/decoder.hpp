#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfat/corpus/types.hpp"
#include "sfat/corpus/vocabulary.hpp"
#include "sfat/model/aggregation.hpp"
#include "sfat/model/encoders.hpp"

namespace sfat {

template <typename T>
struct DecoderActivations {
  Tensor<T> r_emb;   // word + position embedding
  Tensor<T> r_sa;    // after causal self-attention (last layer)
  Tensor<T> r_c;     // after cross-attention to C' (last layer)
  Tensor<T> r_cv;    // after cross-attention to V' (last layer)
  Tensor<T> logits;  // G [L x vocab]
};

/// Teacher-forced pass over `input_ids` (must start with BOS, at most p_r
/// long). `video` is V' as a [1 x d_v] row.
template <typename T>
DecoderActivations<T> decoder_forward(std::span<const TokenId> input_ids, const ContextEncoding<T>& context,
                                      const Tensor<T>& video, const SfatModel<T>& model, const ForwardMode& mode);

/// Everything the decoder conditions on for one window.
template <typename T>
struct EncodedInputs {
  ContextEncoding<T> context;
  Tensor<T> frames_latent;  // V'_L
  AggregationOutput<T> aggregation;
  const Tensor<T>& video() const { return aggregation.video; }
};

template <typename T>
EncodedInputs<T> encode_inputs(const corpus::ContextSample& sample, const corpus::Matrix& frame_rows,
                               const SfatModel<T>& model, const ForwardMode& mode);

/// Mean cross-entropy of a BOS..EOS target under teacher forcing.
template <typename T>
Tensor<T> target_loss(const corpus::TokenSequence& target, const EncodedInputs<T>& inputs, const SfatModel<T>& model,
                      const ForwardMode& mode);

struct DecodeStrategy {
  enum class Kind { greedy, top_k } kind = Kind::greedy;
  std::size_t k = 5;
  std::uint64_t seed = 0;

  static DecodeStrategy greedy() { return {}; }
  static DecodeStrategy top_k(std::size_t k, std::uint64_t seed) { return {Kind::top_k, k, seed}; }
};

struct GeneratedComment {
  std::vector<TokenId> ids;       // BOS/EOS stripped
  std::string text;               // filled when a vocabulary is supplied
  std::vector<double> logprobs;   // one per emitted token, EOS included when emitted
  double total_logprob = 0.0;
  double normalized_logprob = 0.0;
  bool ended = false;             // EOS emitted before max_len
};

/// Autoregressive decoding from BOS; PAD/BOS/CLS/MASK are never emitted.
/// Log-probabilities come from the full softmax over the vocabulary.
template <typename T>
GeneratedComment generate(const ContextEncoding<T>& context, const Tensor<T>& video, const SfatModel<T>& model,
                          const DecodeStrategy& strategy, std::size_t max_len,
                          const corpus::Vocabulary* vocab = nullptr);

/// Per-token log-probabilities of a BOS..EOS candidate (EOS term included).
template <typename T>
std::vector<double> token_logprobs(const corpus::TokenSequence& candidate, const ContextEncoding<T>& context,
                                   const Tensor<T>& video, const SfatModel<T>& model);

/// Sum of token log-probabilities, divided by the token count when `normalize`.
template <typename T>
double score_candidate(const corpus::TokenSequence& candidate, const ContextEncoding<T>& context,
                       const Tensor<T>& video, const SfatModel<T>& model, bool normalize = true);

}  // namespace sfat
