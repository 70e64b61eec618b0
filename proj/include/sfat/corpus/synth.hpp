#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sfat::corpus {

/// Planted-key-frame corpus. Each context window hides one key frame built
/// from a "family" direction plus a "variant" direction; context chat names
/// the family, responses name family and variant. The variant is therefore
/// recoverable only by finding the key frame.
struct SynthConfig {
  std::size_t n_videos = 15;
  int duration_s = 600;
  std::size_t vocab_size = 256;
  std::size_t dim = 64;
  std::uint64_t seed = 7;
  std::string planted_rule = "family_variant";  // the only rule implemented
  int T1 = 20;
  int T2 = 30;
  double eval_fraction = 1.0 / 3.0;
  double frame_noise = 0.35;
  double spam_prob = 0.15;
  int min_context = 6, max_context = 9;
  int min_response = 2, max_response = 3;

  void validate() const;
};

struct PlantedWindow {
  std::string video_id;
  int t = 0;
  int key_offset = 0;
  std::string family;
  std::string variant;
  std::string topic_token;  // == variant
};

inline const std::vector<std::string>& synth_families() {
  static const std::vector<std::string> f{"dragon", "castle", "pizza", "rocket",
                                          "guitar", "soccer", "forest", "robot"};
  return f;
}
inline const std::vector<std::string>& synth_variants() {
  static const std::vector<std::string> v{"red", "blue", "green", "gold"};
  return v;
}

// Writes manifest.json, comments.jsonl, frames/, text/, planted.jsonl and
// vocab.txt under `dir`; returns the planted ground truth.
std::vector<PlantedWindow> synth_corpus(const SynthConfig& cfg, const std::filesystem::path& dir);

std::vector<PlantedWindow> load_planted(const std::filesystem::path& path);

}  // namespace sfat::corpus
