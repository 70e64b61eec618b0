#pragma once

#include <span>

#include "sfat/model/sfat_model.hpp"

namespace sfat {

template <typename T>
struct AggregationOutput {
  Tensor<T> scores;        // s [T1 x n_c], cosine frame vs comment
  Tensor<T> frame_scores;  // ŝ [T1], mean over real comments
  Tensor<T> weights;       // w [T1]
  Tensor<T> video;         // V' [1 x d_v]
  bool uniform = false;    // weights fixed at 1/T1
};

/// Cosine similarity between every encoded frame and every projected joint
/// text vector. Throws AggregationError when no comment is real.
template <typename T>
Tensor<T> similarity_scores(const Tensor<T>& frames_latent, const Tensor<T>& joint_text,
                            std::span<const std::uint8_t> mask, const SfatModel<T>& model);

/// ŝ_i = mean of s[i][j] over real j; w = softmax(ŝ / ε); V' = Σ w_i · v'_i / |v'_i|.
template <typename T>
AggregationOutput<T> aggregate(const Tensor<T>& frames_latent, const Tensor<T>& scores,
                               std::span<const std::uint8_t> mask, double epsilon);

// The no-prioritisation ablation: every frame weighs 1/T1.
template <typename T>
AggregationOutput<T> aggregate_uniform(const Tensor<T>& frames_latent);

/// Model-level entry: honours config().uniform_aggregation and falls back to
/// uniform weights when the whole context is padding.
template <typename T>
AggregationOutput<T> aggregate_frames(const Tensor<T>& frames_latent, const Tensor<T>& joint_text,
                                      std::span<const std::uint8_t> mask, const SfatModel<T>& model);

}  // namespace sfat
