#include "sfat/corpus/pseudo_embed.hpp"

#include <cmath>
#include <random>

#include "sfat/corpus/vocabulary.hpp"
#include "sfat/errors.hpp"
#include "sfat/numerics/random.hpp"

namespace sfat::corpus {

std::vector<double> token_direction(std::string_view token, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {fnv1a64(token)}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = gauss(rng);
  return v;
}

std::vector<float> pseudo_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 8) throw ParameterError("pseudo_embed: dim must be at least 8");
  const auto tokens = normalize_tokens(text);
  if (tokens.empty()) throw DataError("pseudo_embed: text has zero tokens");
  std::vector<double> acc(dim, 0.0);
  for (const auto& tok : tokens) {
    const auto d = token_direction(tok, dim, seed);
    for (std::size_t i = 0; i < dim; ++i) acc[i] += d[i];
  }
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

}  // namespace sfat::corpus
