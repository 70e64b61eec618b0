#include "sfat/corpus/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "sfat/errors.hpp"

namespace sfat::corpus {

const std::vector<std::string>& Vocabulary::special_tokens() {
  static const std::vector<std::string> specials{"<pad>", "<unk>", "<cls>", "<mask>", "<bos>", "<eos>"};
  return specials;
}

Vocabulary::Vocabulary() : Vocabulary(special_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& specials = special_tokens();
  if (tokens_.size() < kNumSpecial || !std::equal(specials.begin(), specials.end(), tokens_.begin())) {
    throw FormatError("vocabulary: entries 0-5 must be the special tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw FormatError("vocabulary: empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw FormatError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

namespace {

bool emote_at(std::string_view text, std::size_t pos, std::size_t& end) {
  constexpr std::string_view kPrefix = "<emote:";
  if (text.substr(pos, kPrefix.size()) != kPrefix) return false;
  std::size_t i = pos + kPrefix.size();
  const std::size_t name_start = i;
  while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) ++i;
  if (i == name_start || i >= text.size() || text[i] != '>') return false;
  end = i + 1;
  return true;
}

}  // namespace

bool is_emote_token(std::string_view token) {
  std::size_t end = 0;
  return emote_at(token, 0, end) && end == token.size();
}

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t end = 0;
    if (c == '<' && emote_at(text, i, end)) {
      flush();
      out.emplace_back(text.substr(i, end - i));
      i = end;
    } else if (std::isspace(c)) {
      flush();
      ++i;
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else {
      word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
      ++i;
    }
  }
  flush();
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& t : normalize_tokens(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::size_t TokenSequence::length() const {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == Vocabulary::kPad) --n;
  return n;
}

std::size_t ContextSample::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len, bool wrap) {
  if (wrap && max_len < 2) throw ParameterError("tokenize: wrapped sequences need max_len >= 2");
  const auto tokens = normalize_tokens(text);
  const std::size_t keep = std::min(tokens.size(), wrap ? max_len - 2 : max_len);
  TokenSequence seq;
  seq.ids.reserve(max_len);
  if (wrap) seq.ids.push_back(Vocabulary::kBos);
  for (std::size_t i = 0; i < keep; ++i) seq.ids.push_back(vocab.id(tokens[i]));
  if (wrap) seq.ids.push_back(Vocabulary::kEos);
  seq.ids.resize(max_len, Vocabulary::kPad);
  return seq;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const auto& tok = vocab.token(id);
    if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos || id == Vocabulary::kCls) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, std::size_t max_size, std::size_t min_freq) {
  if (max_size < Vocabulary::kNumSpecial) throw ParameterError("vocabulary cap smaller than the special tokens");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& tok : normalize_tokens(t)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  const auto& specials = Vocabulary::special_tokens();
  for (auto& [tok, n] : counts) {
    if (n < min_freq) continue;
    if (std::find(specials.begin(), specials.end(), tok) != specials.end()) continue;
    ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = specials;
  for (auto& [tok, _] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace sfat::corpus
