#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sfat/corpus/types.hpp"
#include "sfat/corpus/vocabulary.hpp"

namespace sfat::corpus {

struct DensestWindow {
  int start = 0;
  std::size_t count = 0;
  bool empty_input = false;  // no comments: start defaults to 0
};

/// Integer start s in [0, duration - span] maximising the number of comments
/// with time in [s, s + span); ties go to the smallest s.
DensestWindow densest_window(const std::vector<CommentRecord>& comments, int span_s, int video_duration_s);

/// Non-overlapping clips at t = 0, T2, 2*T2, ... over the whole seconds of the
/// track; a trailing remainder shorter than T2 is dropped. `joint` (optional)
/// holds one embedding row per entry of `comments`.
std::vector<ClipWindow> segment_clips(const FrameTrack& track, const std::vector<CommentRecord>& comments,
                                      int T1, int T2, const Matrix* joint = nullptr);

/// Keeps the n_c latest context comments (time order preserved) and pads the
/// remainder with PAD-only sequences, zero embeddings and mask 0.
ContextSample sample_context(const ClipWindow& window, std::size_t n_c, const Vocabulary& vocab,
                             std::size_t p_c);

std::string anonymize_user(const std::string& user, const std::string& salt);
std::vector<CommentRecord> anonymize(std::vector<CommentRecord> comments, const std::string& salt);

/// Emote inventory sorted by count (descending), then name.
std::vector<std::pair<std::string, std::size_t>> collect_emotes(const std::vector<CommentRecord>& comments);

struct PreprocessOptions {
  int span_s = 1800;  // densest stretch kept per video (whole video if shorter)
  std::string salt = "sfat";
  std::size_t vocab_size = 20000;
  std::size_t min_freq = 2;
};

struct PreprocessSummary {
  struct Video {
    std::string id;
    int start = 0;
    std::size_t kept = 0;
    bool empty_input = false;
  };
  std::vector<Video> videos;
  std::size_t dropped_empty = 0;
  std::size_t rejected_negative = 0;
  std::size_t vocab_size = 0;
  std::vector<std::pair<std::string, std::size_t>> emotes;
};

/// Reads a corpus directory whose comments may carry raw "user" names, trims
/// each video to its densest span, anonymizes users, rebuilds the vocabulary
/// from the training split and writes the result plus emotes.tsv to `out`.
PreprocessSummary preprocess_corpus(const std::filesystem::path& in, const std::filesystem::path& out,
                                    const PreprocessOptions& opts);

}  // namespace sfat::corpus
