#include "sfat/model/encoders.hpp"

#include "sfat/corpus/vocabulary.hpp"
#include "sfat/errors.hpp"

namespace sfat {

template <typename T>
Tensor<T> to_tensor(const corpus::Matrix& m) {
  return Tensor<T>({m.rows, m.cols}, std::vector<T>(m.data.begin(), m.data.end()));
}

template <typename T>
Tensor<T> text_encoder_states(std::span<const TokenId> ids, const SfatModel<T>& model, const ForwardMode& mode) {
  const auto& cfg = model.config();
  if (ids.empty()) throw ContractError("text encoder: empty input");
  if (ids.size() > cfg.p_c + 1)
    throw ContractError("text encoder: " + std::to_string(ids.size() - 1) + " tokens exceed p_c = " + std::to_string(cfg.p_c));
  const auto& te = model.text;
  auto x = add(embedding(te.tok_emb, ids), slice_rows(te.pos_emb, 0, ids.size()));
  x = te.emb_ln(x);
  const auto spec = model.text_spec();
  for (const auto& layer : te.layers) x = layer(x, spec, {}, mode);
  return te.final_ln(x);
}

template <typename T>
ContextEncoding<T> encode_comments(const std::vector<corpus::TokenSequence>& sequences,
                                   std::span<const std::uint8_t> mask, const SfatModel<T>& model,
                                   const ForwardMode& mode) {
  const auto& cfg = model.config();
  if (sequences.empty()) throw DimensionError("encode_comments: no comment slots");
  if (!mask.empty() && mask.size() != sequences.size())
    throw DimensionError("encode_comments: mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(sequences.size()) + " slots");
  ContextEncoding<T> out;
  std::vector<Tensor<T>> rows;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    if (seq.length() > cfg.p_c)
      throw ContractError("encode_comments: slot " + std::to_string(i) + " holds " + std::to_string(seq.length()) +
                          " tokens, more than p_c = " + std::to_string(cfg.p_c));
    const bool real = mask.empty() ? seq.length() > 0 : mask[i] != 0;
    out.mask.push_back(real ? 1 : 0);
    if (!real) {
      rows.push_back(Tensor<T>::zeros({1, cfg.d_t}));
      continue;
    }
    std::vector<TokenId> ids{corpus::Vocabulary::kCls};
    const auto toks = seq.unpadded();
    ids.insert(ids.end(), toks.begin(), toks.end());
    rows.push_back(slice_rows(text_encoder_states(std::span<const TokenId>(ids), model, mode), 0, 1));
  }
  out.c = concat_rows(rows);
  return out;
}

template <typename T>
Tensor<T> encode_frames(const Tensor<T>& frame_rows, const SfatModel<T>& model, const ForwardMode& mode) {
  const auto& cfg = model.config();
  if (frame_rows.ndim() != 2 || frame_rows.cols() != cfg.input_embed_dim)
    throw DimensionError("encode_frames: got " + shape_str(frame_rows.shape()) + ", expected [T1x" +
                         std::to_string(cfg.input_embed_dim) + "]");
  const std::size_t n = frame_rows.rows();
  if (n == 0 || n > cfg.t1)
    throw DimensionError("encode_frames: " + std::to_string(n) + " frames, model supports 1.." + std::to_string(cfg.t1));
  const auto& fe = model.frame;
  auto x = add(add_row(matmul(frame_rows, fe.in_w), fe.in_b), slice_rows(fe.pos_emb, 0, n));
  x = fe.emb_ln(x);
  const auto spec = model.frame_spec();
  for (const auto& layer : fe.layers) x = layer(x, spec, {}, mode);
  return fe.final_ln(x);
}

template <typename T>
Tensor<T> encode_frames(const corpus::Matrix& frame_rows, const SfatModel<T>& model, const ForwardMode& mode) {
  return encode_frames(to_tensor<T>(frame_rows), model, mode);
}

#define SFAT_INSTANTIATE_ENCODERS(T)                                                                         \
  template Tensor<T> to_tensor<T>(const corpus::Matrix&);                                                    \
  template Tensor<T> text_encoder_states<T>(std::span<const TokenId>, const SfatModel<T>&, const ForwardMode&); \
  template ContextEncoding<T> encode_comments<T>(const std::vector<corpus::TokenSequence>&,                   \
                                                 std::span<const std::uint8_t>, const SfatModel<T>&,          \
                                                 const ForwardMode&);                                          \
  template Tensor<T> encode_frames<T>(const Tensor<T>&, const SfatModel<T>&, const ForwardMode&);             \
  template Tensor<T> encode_frames<T>(const corpus::Matrix&, const SfatModel<T>&, const ForwardMode&);

SFAT_INSTANTIATE_ENCODERS(float)
SFAT_INSTANTIATE_ENCODERS(double)

}  // namespace sfat
