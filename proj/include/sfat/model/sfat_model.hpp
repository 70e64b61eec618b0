#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "sfat/model/layers.hpp"

namespace sfat {

struct ModelConfig {
  std::size_t l_e = 4;  // encoder layers (both encoders)
  std::size_t l_d = 4;  // decoder layers
  std::size_t d_t = 256;
  std::size_t d_v = 256;
  std::size_t heads = 8;
  std::size_t input_embed_dim = 512;
  std::size_t n_c_train = 5;
  std::size_t n_c_eval = 15;
  std::size_t p_c = 20;
  std::size_t p_r = 20;
  std::size_t t1 = 20;  // frames per context window
  double dropout = 0.1;
  double epsilon = 0.1;
  std::size_t vocab_size = 20000;
  bool uniform_aggregation = false;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are a ConfigError.
  static ModelConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct DecoderLayerWeights {
  AttentionWeights<T> self_attn, ctx_attn, vid_attn;
  LayerNormWeights<T> ln1, ln2, ln3, ln4;
  FeedForwardWeights<T> ff;
};

/// Every learnable tensor of the model, registered by path in one
/// ParameterSet, plus typed handles into it for the forward code.
template <typename T>
class SfatModel {
 public:
  SfatModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  // Switches that change no parameter shapes.
  void set_uniform_aggregation(bool on) { config_.uniform_aggregation = on; }
  void set_dropout(double rate) {
    config_.dropout = rate;
    config_.validate();
  }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  AttentionSpec text_spec() const { return {config_.heads, config_.d_t, false, config_.dropout}; }
  AttentionSpec frame_spec() const { return {config_.heads, config_.d_v, false, config_.dropout}; }
  AttentionSpec decoder_self_spec() const { return {config_.heads, config_.d_t, true, config_.dropout}; }
  AttentionSpec decoder_cross_spec() const { return {config_.heads, config_.d_t, false, config_.dropout}; }

  // Deep copy in another precision (or the same one).
  template <typename U>
  SfatModel<U> cast() const;
  SfatModel clone() const { return cast<T>(); }

  // Copies values by name; shapes must match.
  template <typename U>
  void assign_from(const ParameterSet<U>& other);

  struct TextEncoder {
    Tensor<T> tok_emb, pos_emb;
    LayerNormWeights<T> emb_ln, final_ln;
    std::vector<EncoderLayerWeights<T>> layers;
    Tensor<T> mlm_w, mlm_b;  // pretraining head
  } text;

  struct FrameEncoder {
    Tensor<T> in_w, in_b, pos_emb;
    LayerNormWeights<T> emb_ln, final_ln;
    std::vector<EncoderLayerWeights<T>> layers;
  } frame;

  Tensor<T> text_proj;  // joint text space -> d_v, no bias

  struct Decoder {
    Tensor<T> tok_emb, pos_emb;
    std::vector<DecoderLayerWeights<T>> layers;
    LayerNormWeights<T> mem_ln, final_ln;
    Tensor<T> bridge_w, bridge_b;  // undefined when d_v == d_t
    Tensor<T> head_w, head_b;
  } dec;

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ParameterSet<T> params_;
};

}  // namespace sfat
