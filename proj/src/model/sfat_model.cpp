#include "sfat/model/sfat_model.hpp"

#include "sfat/errors.hpp"
#include "sfat/numerics/random.hpp"

namespace sfat {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(l_e, "l_e");
  positive(l_d, "l_d");
  positive(d_t, "d_t");
  positive(d_v, "d_v");
  positive(heads, "heads");
  positive(input_embed_dim, "input_embed_dim");
  positive(n_c_train, "n_c_train");
  positive(n_c_eval, "n_c_eval");
  positive(p_c, "p_c");
  positive(t1, "t1");
  positive(vocab_size, "vocab_size");
  if (p_r < 2) throw ConfigError("model.p_r must be at least 2 (BOS and EOS)");
  if (d_t % heads || d_v % heads) throw ConfigError("model.d_t and model.d_v must be divisible by model.heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must be in [0, 1)");
  if (!(epsilon >= 1e-4 && epsilon <= 10.0)) throw ConfigError("model.epsilon must be in [1e-4, 10]");
  if (vocab_size <= 6) throw ConfigError("model.vocab_size must exceed the 6 special tokens");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"l_e", l_e},          {"l_d", l_d},
          {"d_t", d_t},          {"d_v", d_v},
          {"heads", heads},      {"input_embed_dim", input_embed_dim},
          {"n_c_train", n_c_train}, {"n_c_eval", n_c_eval},
          {"p_c", p_c},          {"p_r", p_r},
          {"t1", t1},            {"dropout", dropout},
          {"epsilon", epsilon},  {"vocab_size", vocab_size},
          {"uniform_aggregation", uniform_aggregation}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (!j.is_object()) throw ConfigError("model config must be an object");
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key model." + key);
    if (known[key].is_boolean() != value.is_boolean() || !value.is_primitive() || value.is_string())
      throw ConfigError("model." + key + " has the wrong type");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    using F = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<F, std::size_t>) {
      if (!j[key].is_number_integer() || j[key].get<long long>() < 0)
        throw ConfigError(std::string("model.") + key + " must be a nonnegative integer");
    }
    field = j[key].get<F>();
  };
  get("l_e", c.l_e);
  get("l_d", c.l_d);
  get("d_t", c.d_t);
  get("d_v", c.d_v);
  get("heads", c.heads);
  get("input_embed_dim", c.input_embed_dim);
  get("n_c_train", c.n_c_train);
  get("n_c_eval", c.n_c_eval);
  get("p_c", c.p_c);
  get("p_r", c.p_r);
  get("t1", c.t1);
  get("dropout", c.dropout);
  get("epsilon", c.epsilon);
  get("vocab_size", c.vocab_size);
  get("uniform_aggregation", c.uniform_aggregation);
  return c;
}

template <typename T>
SfatModel<T>::SfatModel(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  const auto& c = config_;
  std::mt19937_64 rng(derive_seed(seed, {fnv1a64("init")}));
  auto& P = params_;
  const std::size_t V = c.vocab_size;

  text.tok_emb = P.add("text.tok_emb", normal_init<T>({V, c.d_t}, 0.02, rng));
  text.pos_emb = P.add("text.pos_emb", normal_init<T>({c.p_c + 1, c.d_t}, 0.02, rng));  // +1 for CLS
  text.emb_ln = LayerNormWeights<T>::register_in(P, "text.emb_ln", c.d_t);
  for (std::size_t i = 0; i < c.l_e; ++i)
    text.layers.push_back(EncoderLayerWeights<T>::register_in(P, "text.layer" + std::to_string(i), c.d_t, rng));
  text.final_ln = LayerNormWeights<T>::register_in(P, "text.final_ln", c.d_t);
  text.mlm_w = P.add("text.mlm_head.w", glorot_uniform<T>(c.d_t, V, rng));
  text.mlm_b = P.add("text.mlm_head.b", Tensor<T>::zeros({V}));

  frame.in_w = P.add("frame.in_proj.w", glorot_uniform<T>(c.input_embed_dim, c.d_v, rng));
  frame.in_b = P.add("frame.in_proj.b", Tensor<T>::zeros({c.d_v}));
  frame.pos_emb = P.add("frame.pos_emb", normal_init<T>({c.t1, c.d_v}, 0.02, rng));
  frame.emb_ln = LayerNormWeights<T>::register_in(P, "frame.emb_ln", c.d_v);
  for (std::size_t i = 0; i < c.l_e; ++i)
    frame.layers.push_back(EncoderLayerWeights<T>::register_in(P, "frame.layer" + std::to_string(i), c.d_v, rng));
  frame.final_ln = LayerNormWeights<T>::register_in(P, "frame.final_ln", c.d_v);

  // Starts as a copy of the frame input projection so that frames and texts
  // that agree in the joint space also agree after projection.
  text_proj = P.add("agg.text_proj.w", frame.in_w.detach());

  dec.tok_emb = P.add("dec.tok_emb", normal_init<T>({V, c.d_t}, 0.02, rng));
  dec.pos_emb = P.add("dec.pos_emb", normal_init<T>({c.p_r, c.d_t}, 0.02, rng));
  for (std::size_t i = 0; i < c.l_d; ++i) {
    const std::string p = "dec.layer" + std::to_string(i);
    DecoderLayerWeights<T> l;
    l.self_attn = AttentionWeights<T>::register_in(P, p + ".self_attn", c.d_t, rng);
    l.ctx_attn = AttentionWeights<T>::register_in(P, p + ".ctx_attn", c.d_t, rng);
    l.vid_attn = AttentionWeights<T>::register_in(P, p + ".vid_attn", c.d_t, rng);
    l.ln1 = LayerNormWeights<T>::register_in(P, p + ".ln1", c.d_t);
    l.ln2 = LayerNormWeights<T>::register_in(P, p + ".ln2", c.d_t);
    l.ln3 = LayerNormWeights<T>::register_in(P, p + ".ln3", c.d_t);
    l.ln4 = LayerNormWeights<T>::register_in(P, p + ".ln4", c.d_t);
    l.ff = FeedForwardWeights<T>::register_in(P, p + ".ff", c.d_t, 4 * c.d_t, rng);
    dec.layers.push_back(std::move(l));
  }
  dec.mem_ln = LayerNormWeights<T>::register_in(P, "dec.mem_ln", c.d_v);
  if (c.d_v != c.d_t) {
    dec.bridge_w = P.add("dec.bridge.w", glorot_uniform<T>(c.d_v, c.d_t, rng));
    dec.bridge_b = P.add("dec.bridge.b", Tensor<T>::zeros({c.d_t}));
  }
  dec.final_ln = LayerNormWeights<T>::register_in(P, "dec.final_ln", c.d_t);
  dec.head_w = P.add("dec.head.w", glorot_uniform<T>(c.d_t, V, rng));
  dec.head_b = P.add("dec.head.b", Tensor<T>::zeros({V}));
}

template <typename T>
template <typename U>
void SfatModel<T>::assign_from(const ParameterSet<U>& other) {
  if (other.size() != params_.size())
    throw DimensionError("parameter count " + std::to_string(other.size()) + " != " + std::to_string(params_.size()));
  for (auto& [name, t] : params_) {
    const auto& src = other.get(name);
    if (src.shape() != t.shape())
      throw DimensionError("parameter " + name + ": shape " + shape_str(src.shape()) + " != " + shape_str(t.shape()));
    auto dst = t.mutable_data();
    auto s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s[i]);
  }
}

template <typename T>
template <typename U>
SfatModel<U> SfatModel<T>::cast() const {
  SfatModel<U> out(config_, seed_);
  out.assign_from(params_);
  return out;
}

template class SfatModel<float>;
template class SfatModel<double>;
template SfatModel<double> SfatModel<float>::cast<double>() const;
template SfatModel<float> SfatModel<float>::cast<float>() const;
template SfatModel<float> SfatModel<double>::cast<float>() const;
template SfatModel<double> SfatModel<double>::cast<double>() const;
template void SfatModel<float>::assign_from<float>(const ParameterSet<float>&);
template void SfatModel<float>::assign_from<double>(const ParameterSet<double>&);
template void SfatModel<double>::assign_from<float>(const ParameterSet<float>&);
template void SfatModel<double>::assign_from<double>(const ParameterSet<double>&);

}  // namespace sfat
