#include "sfat/model/aggregation.hpp"

#include <algorithm>

#include "sfat/errors.hpp"

namespace sfat {

namespace {

std::size_t count_real(std::span<const std::uint8_t> mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

}  // namespace

template <typename T>
Tensor<T> similarity_scores(const Tensor<T>& frames_latent, const Tensor<T>& joint_text,
                            std::span<const std::uint8_t> mask, const SfatModel<T>& model) {
  const auto& cfg = model.config();
  if (joint_text.ndim() != 2 || joint_text.cols() != cfg.input_embed_dim)
    throw DimensionError("similarity_scores: joint text " + shape_str(joint_text.shape()) + ", expected width " +
                         std::to_string(cfg.input_embed_dim));
  if (mask.size() != joint_text.rows())
    throw DimensionError("similarity_scores: mask length " + std::to_string(mask.size()) + " for " +
                         std::to_string(joint_text.rows()) + " comments");
  if (frames_latent.cols() != cfg.d_v) throw DimensionError("similarity_scores: frames are not d_v wide");
  if (count_real(mask) == 0) throw AggregationError("similarity_scores: every context comment is padding");
  const auto text = l2_normalize_rows(matmul(joint_text, model.text_proj));
  return matmul_bt(l2_normalize_rows(frames_latent), text);
}

template <typename T>
AggregationOutput<T> aggregate(const Tensor<T>& frames_latent, const Tensor<T>& scores,
                               std::span<const std::uint8_t> mask, double epsilon) {
  if (!(epsilon > 0.0)) throw ParameterError("aggregate: epsilon must be positive");
  const std::size_t t1 = frames_latent.rows(), n_c = scores.cols();
  if (scores.rows() != t1) throw DimensionError("aggregate: scores have " + std::to_string(scores.rows()) + " rows for " + std::to_string(t1) + " frames");
  if (mask.size() != n_c) throw DimensionError("aggregate: mask length differs from score columns");
  const std::size_t real = count_real(mask);
  if (real == 0) throw AggregationError("aggregate: every context comment is padding");

  std::vector<T> col(n_c);
  for (std::size_t j = 0; j < n_c; ++j) col[j] = mask[j] ? T(1) / T(real) : T(0);
  AggregationOutput<T> out;
  out.scores = scores;
  out.frame_scores = reshape(matmul(scores, Tensor<T>({n_c, 1}, std::move(col))), {t1});
  out.weights = softmax_with_temperature(out.frame_scores, static_cast<T>(epsilon));
  out.video = matmul(reshape(out.weights, {1, t1}), l2_normalize_rows(frames_latent));
  return out;
}

template <typename T>
AggregationOutput<T> aggregate_uniform(const Tensor<T>& frames_latent) {
  const std::size_t t1 = frames_latent.rows();
  AggregationOutput<T> out;
  out.uniform = true;
  out.weights = Tensor<T>::full({t1}, T(1) / T(t1));
  out.video = matmul(reshape(out.weights, {1, t1}), l2_normalize_rows(frames_latent));
  return out;
}

template <typename T>
AggregationOutput<T> aggregate_frames(const Tensor<T>& frames_latent, const Tensor<T>& joint_text,
                                      std::span<const std::uint8_t> mask, const SfatModel<T>& model) {
  if (model.config().uniform_aggregation || count_real(mask) == 0) return aggregate_uniform(frames_latent);
  const auto s = similarity_scores(frames_latent, joint_text, mask, model);
  return aggregate(frames_latent, s, mask, model.config().epsilon);
}

#define SFAT_INSTANTIATE_AGGREGATION(T)                                                                       \
  template Tensor<T> similarity_scores<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>,   \
                                          const SfatModel<T>&);                                                \
  template AggregationOutput<T> aggregate<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>, \
                                             double);                                                          \
  template AggregationOutput<T> aggregate_uniform<T>(const Tensor<T>&);                                        \
  template AggregationOutput<T> aggregate_frames<T>(const Tensor<T>&, const Tensor<T>&,                        \
                                                    std::span<const std::uint8_t>, const SfatModel<T>&);

SFAT_INSTANTIATE_AGGREGATION(float)
SFAT_INSTANTIATE_AGGREGATION(double)

}  // namespace sfat
