#pragma once

#include <span>
#include <vector>

#include "sfat/corpus/types.hpp"
#include "sfat/model/sfat_model.hpp"

namespace sfat {

template <typename T>
struct ContextEncoding {
  Tensor<T> c;                     // C' [n_c x d_t]; masked rows are zero
  std::vector<std::uint8_t> mask;  // 1 = real comment
};

/// Final hidden states of the comment encoder for one CLS-prefixed id list.
template <typename T>
Tensor<T> text_encoder_states(std::span<const TokenId> ids_with_cls, const SfatModel<T>& model,
                              const ForwardMode& mode);

/// Encodes each comment independently as [CLS, tokens...] and keeps the CLS
/// state. `mask` may be empty, in which case non-empty sequences count as real.
template <typename T>
ContextEncoding<T> encode_comments(const std::vector<corpus::TokenSequence>& sequences,
                                   std::span<const std::uint8_t> mask, const SfatModel<T>& model,
                                   const ForwardMode& mode);

/// Input projection, positional embedding, l_e encoder layers: V'_L [T1 x d_v].
template <typename T>
Tensor<T> encode_frames(const Tensor<T>& frame_rows, const SfatModel<T>& model, const ForwardMode& mode);

template <typename T>
Tensor<T> encode_frames(const corpus::Matrix& frame_rows, const SfatModel<T>& model, const ForwardMode& mode);

// Matrix -> constant tensor.
template <typename T>
Tensor<T> to_tensor(const corpus::Matrix& m);

}  // namespace sfat
