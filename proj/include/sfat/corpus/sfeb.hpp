#pragma once

#include <filesystem>
#include <iosfwd>

#include "sfat/corpus/types.hpp"

namespace sfat::corpus {

// "SFEB" container: magic, u32 version (1), u32 rows, u32 cols, all
// little-endian, then rows*cols IEEE-754 float32 values in row-major order.
inline constexpr std::uint32_t kSfebVersion = 1;
inline constexpr std::size_t kSfebHeaderBytes = 16;

void write_sfeb(std::ostream& out, const Matrix& m);
Matrix read_sfeb(std::istream& in);

void write_sfeb_file(const std::filesystem::path& path, const Matrix& m);
// Whole-file read: the file must hold exactly one block.
Matrix read_sfeb_file(const std::filesystem::path& path);

FrameTrack load_frames(const std::filesystem::path& path, std::string video_id = {});

}  // namespace sfat::corpus
