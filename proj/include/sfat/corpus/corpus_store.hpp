#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfat/corpus/types.hpp"
#include "sfat/corpus/vocabulary.hpp"

namespace sfat::corpus {

struct VideoData {
  std::string id;
  std::string split;  // "train" | "eval"
  FrameTrack track;
  std::vector<CommentRecord> comments;  // time order
  Matrix joint;                         // one unit row per comment
};

/// On-disk layout:
///   manifest.json        {"embed_dim", "videos": [{"id", "split", "duration_s"}], optional "T1"/"T2"}
///   comments.jsonl       every comment, grouped by video, time order within a video
///   frames/<id>.sfeb     [duration_s x embed_dim]
///   text/<id>.sfeb       joint text embeddings, row order = that video's lines in comments.jsonl
///   text/<id>.idx        "row<TAB>line" sidecar (1-based comments.jsonl line numbers)
///   vocab.txt            one token per line
struct Corpus {
  std::filesystem::path root;
  std::size_t embed_dim = 0;
  int T1 = 0, T2 = 0;  // suggested clip geometry, 0 when unspecified
  std::vector<VideoData> videos;
  Vocabulary vocab;
  std::size_t dropped_empty = 0;
  std::size_t rejected_negative = 0;

  const VideoData& video(const std::string& id) const;
  // Clips of every video in `split` ("" = all), in manifest order.
  std::vector<ClipWindow> windows(const std::string& split, int T1, int T2) const;
  std::vector<std::string> texts(const std::string& split) const;
};

Corpus load_corpus(const std::filesystem::path& dir);
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace sfat::corpus
