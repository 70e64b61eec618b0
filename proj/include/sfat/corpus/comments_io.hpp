#pragma once

#include <filesystem>
#include <vector>

#include "sfat/corpus/types.hpp"

namespace sfat::corpus {

struct CommentLoad {
  std::vector<CommentRecord> records;  // stable-sorted by time_s
  std::size_t dropped_empty = 0;       // text empty after normalization
  std::size_t rejected_negative = 0;   // time_s < 0
};

/// Reads a JSON Lines comment file:
///   {"video_id": str, "time_s": float, "user" | "user_hash": str, "text": str}
/// Blank lines are skipped; any other malformed line is a ParseError naming it.
CommentLoad load_comments(const std::filesystem::path& path);

void write_comments(const std::filesystem::path& path, const std::vector<CommentRecord>& records);

}  // namespace sfat::corpus
