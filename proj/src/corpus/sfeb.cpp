#include "sfat/corpus/sfeb.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "sfat/errors.hpp"

namespace sfat::corpus {

namespace {

static_assert(std::endian::native == std::endian::little, "SFEB I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_u32(std::array<char, kSfebHeaderBytes>& buf, std::size_t offset, std::uint32_t v) {
  std::memcpy(buf.data() + offset, &v, 4);
}

std::uint32_t get_u32(const std::array<char, kSfebHeaderBytes>& buf, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, buf.data() + offset, 4);
  return v;
}

}  // namespace

void write_sfeb(std::ostream& out, const Matrix& m) {
  if (m.rows > std::numeric_limits<std::uint32_t>::max() || m.cols > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("SFEB: matrix too large for a u32 header");
  }
  std::array<char, kSfebHeaderBytes> header{};
  std::memcpy(header.data(), "SFEB", 4);
  put_u32(header, 4, kSfebVersion);
  put_u32(header, 8, static_cast<std::uint32_t>(m.rows));
  put_u32(header, 12, static_cast<std::uint32_t>(m.cols));
  out.write(header.data(), header.size());
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!out) throw FormatError("SFEB: write failed");
}

Matrix read_sfeb(std::istream& in) {
  std::array<char, kSfebHeaderBytes> header{};
  in.read(header.data(), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) {
    throw LengthError("SFEB: truncated header (" + std::to_string(in.gcount()) + " of 16 bytes)");
  }
  if (std::memcmp(header.data(), "SFEB", 4) != 0) throw FormatError("SFEB: bad magic");
  const auto version = get_u32(header, 4);
  if (version != kSfebVersion) throw FormatError("SFEB: unsupported version " + std::to_string(version));
  Matrix m(get_u32(header, 8), get_u32(header, 12));
  const auto want = static_cast<std::streamsize>(m.data.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(m.data.data()), want);
  if (in.gcount() != want) {
    throw LengthError("SFEB: payload holds " + std::to_string(in.gcount()) + " bytes, header declares " +
                      std::to_string(want));
  }
  return m;
}

void write_sfeb_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_sfeb(out, m);
}

Matrix read_sfeb_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  Matrix m = read_sfeb(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw LengthError("SFEB: " + path.string() + " has trailing bytes after the declared payload");
  }
  return m;
}

FrameTrack load_frames(const std::filesystem::path& path, std::string video_id) {
  FrameTrack track;
  track.video_id = video_id.empty() ? path.stem().string() : std::move(video_id);
  track.frames = read_sfeb_file(path);
  for (float v : track.frames.data) {
    if (!std::isfinite(v)) throw FormatError("SFEB: non-finite value in " + path.string());
  }
  return track;
}

}  // namespace sfat::corpus
