#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sfat/corpus/types.hpp"

namespace sfat::corpus {

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kMask = 3;
  static constexpr TokenId kBos = 4;
  static constexpr TokenId kEos = 5;
  static constexpr std::size_t kNumSpecial = 6;
  static const std::vector<std::string>& special_tokens();

  Vocabulary();  // specials only
  // Lines 0..5 must be the special tokens; entries must be unique.
  explicit Vocabulary(std::vector<std::string> tokens);

  TokenId id(std::string_view token) const;  // UNK when absent
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecial); }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
/// character as its own token. `<emote:NAME>` survives as one case-preserved token.
std::vector<std::string> normalize_tokens(std::string_view text);
std::string normalize_text(std::string_view text);
bool is_emote_token(std::string_view token);

/// Truncates and pads to `max_len`. With `wrap`, keeps max_len-2 tokens
/// between BOS and EOS (response targets); otherwise keeps max_len tokens.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len, bool wrap);
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Frequency-ranked vocabulary: tokens seen at least `min_freq` times, most
/// frequent first (ties by token), capped at `max_size` entries including specials.
Vocabulary build_vocabulary(const std::vector<std::string>& texts, std::size_t max_size,
                            std::size_t min_freq = 2);

}  // namespace sfat::corpus
