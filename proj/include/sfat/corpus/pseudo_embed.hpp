#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace sfat::corpus {

/// Deterministic stand-in for a joint text encoder: every normalized token
/// maps to a hash-seeded Gaussian vector; the bag is averaged and L2-normalized.
/// Texts that share tokens therefore land close together.
std::vector<float> pseudo_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

// Unnormalized Gaussian direction for one token (unit variance per component).
std::vector<double> token_direction(std::string_view token, std::size_t dim, std::uint64_t seed);

}  // namespace sfat::corpus
