#include "sfat/numerics/attention.hpp"

#include <cmath>
#include <vector>

#include "sfat/errors.hpp"
#include "sfat/numerics/ops.hpp"

namespace sfat {

void AttentionSpec::validate() const {
  if (num_heads == 0 || model_dim == 0) throw ContractError("attention: heads and width must be positive");
  if (model_dim % num_heads != 0) {
    throw ContractError("attention: model_dim " + std::to_string(model_dim) +
                        " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ParameterError("attention: dropout rate outside [0, 1)");
}

template <typename T>
AttentionWeights<T> AttentionWeights<T>::register_in(ParameterSet<T>& params, const std::string& prefix,
                                                     std::size_t d, std::mt19937_64& rng) {
  AttentionWeights w;
  auto proj = [&](const char* name, Tensor<T>& weight, Tensor<T>& bias) {
    weight = params.add(prefix + ".w" + name, glorot_uniform<T>(d, d, rng));
    bias = params.add(prefix + ".b" + name, Tensor<T>::zeros({d}));
  };
  proj("q", w.wq, w.bq);
  proj("k", w.wk, w.bk);
  proj("v", w.wv, w.bv);
  proj("o", w.wo, w.bo);
  return w;
}

template <typename T>
AttentionWeights<T> AttentionWeights<T>::lookup(const ParameterSet<T>& params, const std::string& prefix) {
  AttentionWeights w;
  w.wq = params.get(prefix + ".wq");
  w.bq = params.get(prefix + ".bq");
  w.wk = params.get(prefix + ".wk");
  w.bk = params.get(prefix + ".bk");
  w.wv = params.get(prefix + ".wv");
  w.bv = params.get(prefix + ".bv");
  w.wo = params.get(prefix + ".wo");
  w.bo = params.get(prefix + ".bo");
  return w;
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query, const Tensor<T>& key_source,
                               const Tensor<T>& value_source, const AttentionWeights<T>& w,
                               const AttentionSpec& spec, std::span<const std::uint8_t> key_keep,
                               std::mt19937_64* dropout_rng) {
  spec.validate();
  const std::size_t q = query.rows(), s = key_source.rows(), d = spec.model_dim;
  if (s == 0) throw DimensionError("attention: empty key/value sequence");
  if (query.cols() != d || key_source.cols() != d || value_source.cols() != d) {
    throw DimensionError("attention: inputs " + shape_str(query.shape()) + ", " +
                         shape_str(key_source.shape()) + ", " + shape_str(value_source.shape()) +
                         " do not match model_dim " + std::to_string(d));
  }
  if (value_source.rows() != s) throw DimensionError("attention: key and value lengths differ");
  if (!key_keep.empty() && key_keep.size() != s) throw DimensionError("attention: key mask length differs from keys");

  std::vector<std::uint8_t> keep;
  if (spec.causal || !key_keep.empty()) {
    keep.assign(q * s, 1);
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < s; ++j)
        keep[i * s + j] = static_cast<std::uint8_t>((!spec.causal || j <= i) && (key_keep.empty() || key_keep[j]));
  }

  const auto qp = add_row(matmul(query, w.wq), w.bq);
  const auto kp = add_row(matmul(key_source, w.wk), w.bk);
  const auto vp = add_row(matmul(value_source, w.wv), w.bv);
  const std::size_t hd = spec.head_dim();
  const T factor = T(1) / std::sqrt(static_cast<T>(hd));

  std::vector<Tensor<T>> heads;
  heads.reserve(spec.num_heads);
  for (std::size_t h = 0; h < spec.num_heads; ++h) {
    const auto qh = spec.num_heads == 1 ? qp : slice_cols(qp, h * hd, hd);
    const auto kh = spec.num_heads == 1 ? kp : slice_cols(kp, h * hd, hd);
    const auto vh = spec.num_heads == 1 ? vp : slice_cols(vp, h * hd, hd);
    auto weights = softmax_rows(matmul_bt(qh, kh), keep, factor);
    weights = dropout(weights, spec.dropout_rate, dropout_rng);
    heads.push_back(matmul(weights, vh));
  }
  const auto merged = spec.num_heads == 1 ? heads.front() : concat_cols(heads);
  return add_row(matmul(merged, w.wo), w.bo);
}

template struct AttentionWeights<float>;
template struct AttentionWeights<double>;
template Tensor<float> multi_head_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                            const AttentionWeights<float>&, const AttentionSpec&,
                                            std::span<const std::uint8_t>, std::mt19937_64*);
template Tensor<double> multi_head_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const AttentionWeights<double>&, const AttentionSpec&,
                                             std::span<const std::uint8_t>, std::mt19937_64*);

}  // namespace sfat
