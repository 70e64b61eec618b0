#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace sfat {

// 64-bit FNV-1a; stable across platforms, used wherever a hash ends up on disk.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Mixes a base seed with a list of tags into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

}  // namespace sfat
