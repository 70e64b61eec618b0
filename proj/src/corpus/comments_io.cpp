#include "sfat/corpus/comments_io.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "sfat/corpus/vocabulary.hpp"
#include "sfat/errors.hpp"

namespace sfat::corpus {

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError("line " + std::to_string(line) + ": missing field \"" + name + "\"");
  return *it;
}

std::string string_field(const json& obj, const char* name, std::size_t line) {
  const auto& v = field(obj, name, line);
  if (!v.is_string()) throw ParseError("line " + std::to_string(line) + ": field \"" + name + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace

CommentLoad load_comments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open comments file " + path.string());
  CommentLoad result;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");

    CommentRecord rec;
    rec.source_line = line_no;
    rec.video_id = string_field(obj, "video_id", line_no);
    const auto& t = field(obj, "time_s", line_no);
    if (!t.is_number()) throw ParseError("line " + std::to_string(line_no) + ": field \"time_s\" must be a number");
    rec.time_s = t.get<double>();
    rec.text = string_field(obj, "text", line_no);
    if (obj.contains("user_hash")) {
      rec.user_hash = string_field(obj, "user_hash", line_no);
    } else if (obj.contains("user")) {
      rec.raw_user = string_field(obj, "user", line_no);
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": missing field \"user\" or \"user_hash\"");
    }

    if (rec.time_s < 0.0) {
      ++result.rejected_negative;
      continue;
    }
    if (normalize_tokens(rec.text).empty()) {
      ++result.dropped_empty;
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const CommentRecord& a, const CommentRecord& b) { return a.time_s < b.time_s; });
  return result;
}

void write_comments(const std::filesystem::path& path, const std::vector<CommentRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& r : records) {
    json obj;
    obj["video_id"] = r.video_id;
    obj["time_s"] = r.time_s;
    if (r.raw_user) {
      obj["user"] = *r.raw_user;
    } else {
      obj["user_hash"] = r.user_hash;
    }
    obj["text"] = r.text;
    out << obj.dump() << '\n';
  }
}

}  // namespace sfat::corpus
