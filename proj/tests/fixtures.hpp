#pragma once

#include <random>

#include "sfat/corpus/types.hpp"
#include "sfat/corpus/vocabulary.hpp"
#include "sfat/model/decoder.hpp"

namespace sfat::testing {

inline ModelConfig tiny_config(std::size_t d = 16, std::size_t vocab = 32) {
  ModelConfig c;
  c.l_e = 1;
  c.l_d = 1;
  c.d_t = d;
  c.d_v = d;
  c.heads = 2;
  c.input_embed_dim = 12;
  c.n_c_train = 2;
  c.n_c_eval = 2;
  c.p_c = 5;
  c.p_r = 6;
  c.t1 = 4;
  c.dropout = 0.0;
  c.vocab_size = vocab;
  return c;
}

inline corpus::TokenSequence random_sequence(std::mt19937_64& rng, std::size_t len, std::size_t pad_to,
                                             std::size_t vocab) {
  corpus::TokenSequence s;
  std::uniform_int_distribution<TokenId> tok(6, static_cast<TokenId>(vocab - 1));
  for (std::size_t i = 0; i < len; ++i) s.ids.push_back(tok(rng));
  s.ids.resize(pad_to, corpus::Vocabulary::kPad);
  return s;
}

// BOS tokens EOS, padded.
inline corpus::TokenSequence random_target(std::mt19937_64& rng, std::size_t len, std::size_t p_r, std::size_t vocab) {
  auto inner = random_sequence(rng, len, len, vocab);
  corpus::TokenSequence s;
  s.ids.push_back(corpus::Vocabulary::kBos);
  s.ids.insert(s.ids.end(), inner.ids.begin(), inner.ids.end());
  s.ids.push_back(corpus::Vocabulary::kEos);
  s.ids.resize(p_r, corpus::Vocabulary::kPad);
  return s;
}

inline corpus::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, bool unit_rows = false) {
  corpus::Matrix m(r, c);
  std::normal_distribution<float> g(0.f, 1.f);
  for (auto& x : m.data) x = g(rng);
  if (unit_rows)
    for (std::size_t i = 0; i < r; ++i) {
      double n = 0;
      for (float x : m.row(i)) n += double(x) * x;
      for (float& x : m.row(i)) x = static_cast<float>(x / std::sqrt(n));
    }
  return m;
}

inline corpus::ContextSample random_context(std::mt19937_64& rng, const ModelConfig& c, std::size_t n_c,
                                            std::size_t n_real) {
  corpus::ContextSample s;
  s.joint = random_matrix(rng, n_c, c.input_embed_dim, true);
  for (std::size_t i = 0; i < n_c; ++i) {
    const bool real = i < n_real;
    s.mask.push_back(real ? 1 : 0);
    s.sequences.push_back(real ? random_sequence(rng, 1 + rng() % c.p_c, c.p_c, c.vocab_size)
                               : corpus::TokenSequence{std::vector<TokenId>(c.p_c, corpus::Vocabulary::kPad)});
    if (!real)
      for (float& x : s.joint.row(i)) x = 0.0f;
  }
  return s;
}

}  // namespace sfat::testing
