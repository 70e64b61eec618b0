#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfat/numerics/ops.hpp"

namespace sfat::corpus {

/// Row-major float32 matrix used for frame tracks and joint text embeddings.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

struct CommentRecord {
  std::string video_id;
  double time_s = 0.0;
  std::string user_hash;
  std::optional<std::string> raw_user;  // present only before anonymization
  std::string text;
  std::size_t source_line = 0;  // 1-based line in the comments file
};

struct FrameTrack {
  std::string video_id;
  Matrix frames;  // one row per second

  std::size_t duration_s() const { return frames.rows; }
  std::size_t embed_dim() const { return frames.cols; }
};

/// Context window [t, t+T1) followed by a response window [t+T1, t+T2).
struct ClipWindow {
  std::string video_id;
  int t = 0;
  int T1 = 0;
  int T2 = 0;
  std::vector<CommentRecord> context_comments;
  std::vector<CommentRecord> response_comments;
  Matrix context_joint;   // rows align with context_comments (0 cols if unavailable)
  Matrix response_joint;  // rows align with response_comments
  Matrix frame_rows;      // [T1 x embed_dim]

  bool empty_context() const { return context_comments.empty(); }
  std::string id() const { return video_id + "@" + std::to_string(t); }
};

/// Token ids padded with PAD to a fixed length; padding only as a suffix.
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t length() const;  // count of non-PAD ids
  std::span<const TokenId> unpadded() const { return {ids.data(), length()}; }
  bool operator==(const TokenSequence&) const = default;
};

/// n_c context slots: real comments first, then padding (mask 0).
struct ContextSample {
  std::vector<TokenSequence> sequences;
  Matrix joint;  // [n_c x embed_dim], zero rows for padding
  std::vector<std::uint8_t> mask;
  std::vector<CommentRecord> comments;  // the real comments, in time order

  std::size_t valid_count() const;
};

}  // namespace sfat::corpus
