#include "sfat/corpus/corpus_store.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sfat/corpus/comments_io.hpp"
#include "sfat/corpus/preprocess.hpp"
#include "sfat/corpus/sfeb.hpp"
#include "sfat/errors.hpp"

namespace sfat::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

const VideoData& Corpus::video(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return v;
  throw IndexError("unknown video '" + id + "'");
}

std::vector<ClipWindow> Corpus::windows(const std::string& split, int t1, int t2) const {
  std::vector<ClipWindow> out;
  for (const auto& v : videos) {
    if (!split.empty() && v.split != split) continue;
    auto clips = segment_clips(v.track, v.comments, t1, t2, &v.joint);
    for (auto& c : clips) out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> Corpus::texts(const std::string& split) const {
  std::vector<std::string> out;
  for (const auto& v : videos)
    if (split.empty() || v.split == split)
      for (const auto& c : v.comments) out.push_back(c.text);
  return out;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::map<std::size_t, std::size_t> read_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::size_t, std::size_t> line_to_row;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (text.empty()) continue;
    std::istringstream ss(text);
    std::size_t row = 0, line = 0;
    if (!(ss >> row >> line)) throw ParseError(path.filename().string() + " line " + std::to_string(n) + ": expected \"row<TAB>line\"");
    line_to_row[line] = row;
  }
  return line_to_row;
}

void normalize_rows(Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double n = 0.0;
    for (float x : m.row(r)) n += double(x) * x;
    if (!(n > 0.0) || !std::isfinite(n)) throw DataError(what + ": row " + std::to_string(r) + " has zero or non-finite norm");
    const double inv = 1.0 / std::sqrt(n);
    for (float& x : m.row(r)) x = static_cast<float>(x * inv);
  }
}

}  // namespace

Corpus load_corpus(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  Corpus c;
  c.root = dir;
  try {
    c.embed_dim = manifest.at("embed_dim").get<std::size_t>();
    c.T1 = manifest.value("T1", 0);
    c.T2 = manifest.value("T2", 0);
    for (const auto& v : manifest.at("videos")) {
      VideoData vd;
      vd.id = v.at("id").get<std::string>();
      vd.split = v.value("split", std::string("train"));
      if (vd.split != "train" && vd.split != "eval") throw DataError("video " + vd.id + ": split must be train or eval");
      c.videos.push_back(std::move(vd));
    }
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }

  auto load = load_comments(dir / "comments.jsonl");
  c.dropped_empty = load.dropped_empty;
  c.rejected_negative = load.rejected_negative;
  std::map<std::string, VideoData*> by_id;
  for (auto& v : c.videos) by_id[v.id] = &v;
  for (auto& r : load.records) {
    auto it = by_id.find(r.video_id);
    if (it == by_id.end()) throw DataError("comments.jsonl line " + std::to_string(r.source_line) + ": unknown video '" + r.video_id + "'");
    it->second->comments.push_back(std::move(r));
  }

  for (auto& v : c.videos) {
    v.track = load_frames(dir / "frames" / (v.id + ".sfeb"), v.id);
    if (v.track.embed_dim() != c.embed_dim)
      throw DimensionError("frames/" + v.id + ".sfeb has " + std::to_string(v.track.embed_dim()) + " columns, manifest says " + std::to_string(c.embed_dim));
    const Matrix all = read_sfeb_file(dir / "text" / (v.id + ".sfeb"));
    if (all.cols != c.embed_dim && all.rows > 0) throw DimensionError("text/" + v.id + ".sfeb: wrong embedding width");
    const auto line_to_row = read_index(dir / "text" / (v.id + ".idx"));
    v.joint = Matrix(v.comments.size(), c.embed_dim);
    for (std::size_t i = 0; i < v.comments.size(); ++i) {
      const auto it = line_to_row.find(v.comments[i].source_line);
      if (it == line_to_row.end() || it->second >= all.rows)
        throw DataError("text/" + v.id + ": no embedding for comments.jsonl line " + std::to_string(v.comments[i].source_line));
      std::copy_n(all.row(it->second).begin(), c.embed_dim, v.joint.row(i).begin());
    }
    normalize_rows(v.joint, "text/" + v.id + ".sfeb");
  }
  if (fs::exists(dir / "vocab.txt")) c.vocab = Vocabulary::load(dir / "vocab.txt");
  return c;
}

void write_corpus(const fs::path& dir, const Corpus& c) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "text");
  json manifest{{"embed_dim", c.embed_dim}, {"videos", json::array()}};
  if (c.T1 > 0) manifest["T1"] = c.T1;
  if (c.T2 > 0) manifest["T2"] = c.T2;

  std::vector<CommentRecord> all;
  for (const auto& v : c.videos) {
    if (v.joint.rows != v.comments.size()) throw DimensionError("write_corpus: joint rows do not match comments for " + v.id);
    manifest["videos"].push_back({{"id", v.id}, {"split", v.split}, {"duration_s", v.track.duration_s()}});
    write_sfeb_file(dir / "frames" / (v.id + ".sfeb"), v.track.frames);
    std::ofstream side(dir / "text" / (v.id + ".idx"));
    for (std::size_t r = 0; r < v.comments.size(); ++r) {
      all.push_back(v.comments[r]);
      all.back().source_line = all.size();
      side << r << '\t' << all.size() << '\n';
    }
    write_sfeb_file(dir / "text" / (v.id + ".sfeb"), v.joint);
  }
  write_comments(dir / "comments.jsonl", all);
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  c.vocab.save(dir / "vocab.txt");
}

}  // namespace sfat::corpus
