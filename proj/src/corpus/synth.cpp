#include "sfat/corpus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "sfat/corpus/corpus_store.hpp"
#include "sfat/corpus/pseudo_embed.hpp"
#include "sfat/corpus/vocabulary.hpp"
#include "sfat/errors.hpp"
#include "sfat/numerics/random.hpp"

namespace sfat::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
  if (n_videos == 0) throw ParameterError("synth: n_videos must be positive");
  if (T1 <= 0 || T1 >= T2) throw ParameterError("synth: need 0 < T1 < T2");
  if (duration_s < T2) throw ParameterError("synth: duration shorter than one clip");
  if (dim < 8) throw ParameterError("synth: dim must be at least 8");
  if (planted_rule != "family_variant") throw ParameterError("synth: unknown planted_rule '" + planted_rule + "'");
  if (eval_fraction < 0.0 || eval_fraction >= 1.0) throw ParameterError("synth: eval_fraction must be in [0, 1)");
  if (min_context < 1 || max_context < min_context || min_response < 1 || max_response < min_response)
    throw ParameterError("synth: bad comment count range");
}

namespace {

const std::vector<std::string> kSpam{"lol", "gg", "<emote:Kappa>", "<emote:PogChamp> !", "lmao"};
constexpr std::size_t kSpamTokens = 6;  // lol gg <emote:Kappa> <emote:PogChamp> ! lmao

// Pronounceable filler words, distinct for distinct indices.
std::vector<std::string> chatter_words(std::size_t n) {
  static const char* cons = "bdfhjklmnprstvz";
  static const char* vows = "aeiou";
  std::vector<std::string> out;
  for (std::size_t i = 0; out.size() < n; ++i) {
    std::string w;
    std::size_t x = i;
    do {
      w += cons[x % 15];
      x /= 15;
      w += vows[x % 5];
      x /= 5;
    } while (x > 0);
    if (w.size() < 4) w += "ny";
    if (std::find(synth_families().begin(), synth_families().end(), w) == synth_families().end()) out.push_back(w);
  }
  return out;
}

std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

std::vector<float> frame_vector(const std::vector<double>& fam, const std::vector<double>& var, double noise,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, noise / std::sqrt(double(fam.size())));
  std::vector<double> v(fam.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fam[i] + var[i] + g(rng);
  v = unit(std::move(v));
  return {v.begin(), v.end()};
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

std::vector<PlantedWindow> synth_corpus(const SynthConfig& cfg, const fs::path& dir) {
  cfg.validate();
  const auto& families = synth_families();
  const auto& variants = synth_variants();
  const std::size_t fixed = Vocabulary::kNumSpecial + families.size() + variants.size() + kSpamTokens;
  if (cfg.vocab_size < fixed + 8)
    throw ParameterError("synth: vocab_size must be at least " + std::to_string(fixed + 8));
  const auto chatter = chatter_words(cfg.vocab_size - fixed);

  const std::uint64_t embed_seed = derive_seed(cfg.seed, {fnv1a64("embed")});
  std::vector<std::vector<double>> fam_dir, var_dir;
  for (const auto& f : families) fam_dir.push_back(unit(token_direction(f, cfg.dim, embed_seed)));
  for (const auto& v : variants) var_dir.push_back(unit(token_direction(v, cfg.dim, embed_seed)));

  const auto n_eval = static_cast<std::size_t>(std::llround(cfg.eval_fraction * double(cfg.n_videos)));
  const std::size_t n_train = cfg.n_videos - n_eval;
  const int n_clips = cfg.duration_s / cfg.T2;

  std::vector<PlantedWindow> planted;
  std::vector<std::string> train_texts;
  Corpus corpus;
  corpus.embed_dim = cfg.dim;
  corpus.T1 = cfg.T1;
  corpus.T2 = cfg.T2;

  for (std::size_t vi = 0; vi < cfg.n_videos; ++vi) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "v%03zu", vi);
    const std::string vid = idbuf;
    const bool is_train = vi < n_train;

    std::mt19937_64 rng(derive_seed(cfg.seed, {fnv1a64("video"), vi}));
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(uniform_int(rng, 0, int(n) - 1)); };
    auto chat = [&](int lo, int hi) {
      std::string s;
      for (int i = uniform_int(rng, lo, hi); i > 0; --i) s += " " + chatter[pick(chatter.size())];
      return s;
    };
    auto user = [&] {
      char b[20];
      std::snprintf(b, sizeof b, "u%016llx", static_cast<unsigned long long>(rng()));
      return std::string(b);
    };
    auto distractor_frame = [&](std::size_t not_family) {
      std::size_t k = pick(families.size() - 1);
      if (k >= not_family) ++k;
      return frame_vector(fam_dir[k], var_dir[pick(variants.size())], cfg.frame_noise, rng);
    };

    Matrix frames(static_cast<std::size_t>(cfg.duration_s), cfg.dim);
    std::vector<CommentRecord> comments;
    for (int c = 0; c < n_clips; ++c) {
      const int t = c * cfg.T2;
      const std::size_t k = pick(families.size()), v = pick(variants.size());
      const int key = uniform_int(rng, 0, cfg.T1 - 1);
      planted.push_back({vid, t, key, families[k], variants[v], variants[v]});
      for (int s = 0; s < cfg.T2; ++s) {
        const auto row = s == key ? frame_vector(fam_dir[k], var_dir[v], cfg.frame_noise, rng) : distractor_frame(k);
        std::copy(row.begin(), row.end(), frames.row(static_cast<std::size_t>(t + s)).begin());
      }
      auto stamp = [&](double lo, double hi) {
        const double x = std::uniform_real_distribution<double>(lo, hi)(rng);
        return std::floor(x * 100.0) / 100.0;
      };
      for (int i = uniform_int(rng, cfg.min_context, cfg.max_context); i > 0; --i) {
        const bool spam = std::uniform_real_distribution<double>(0, 1)(rng) < cfg.spam_prob;
        std::string text = spam ? kSpam[pick(kSpam.size())] : families[k] + chat(1, 3);
        comments.push_back({vid, stamp(t, t + cfg.T1), user(), std::nullopt, std::move(text), 0});
      }
      for (int i = uniform_int(rng, cfg.min_response, cfg.max_response); i > 0; --i) {
        std::string text = families[k] + " " + variants[v] + chat(0, 2);
        comments.push_back({vid, stamp(t + cfg.T1, t + cfg.T2), user(), std::nullopt, std::move(text), 0});
      }
    }
    std::stable_sort(comments.begin(), comments.end(),
                     [](const CommentRecord& a, const CommentRecord& b) { return a.time_s < b.time_s; });
    VideoData vd{vid, is_train ? "train" : "eval", FrameTrack{vid, std::move(frames)}, std::move(comments), {}};
    vd.joint = Matrix(vd.comments.size(), cfg.dim);
    for (std::size_t r = 0; r < vd.comments.size(); ++r) {
      const auto e = pseudo_embed(vd.comments[r].text, cfg.dim, embed_seed);
      std::copy(e.begin(), e.end(), vd.joint.row(r).begin());
      if (is_train) train_texts.push_back(vd.comments[r].text);
    }
    corpus.videos.push_back(std::move(vd));
  }

  corpus.vocab = build_vocabulary(train_texts, cfg.vocab_size);
  write_corpus(dir, corpus);
  std::ofstream pl(dir / "planted.jsonl");
  for (const auto& p : planted) {
    pl << json{{"video_id", p.video_id}, {"t", p.t},           {"key_offset", p.key_offset},
               {"family", p.family},     {"variant", p.variant}, {"topic_token", p.topic_token}}
              .dump()
       << '\n';
  }
  return planted;
}

std::vector<PlantedWindow> load_planted(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<PlantedWindow> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("video_id"), j.at("t"), j.at("key_offset"), j.at("family"), j.at("variant"),
                     j.at("topic_token")});
    } catch (const json::exception& e) {
      throw ParseError(path.filename().string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sfat::corpus
