#include "sfat/corpus/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "sfat/corpus/corpus_store.hpp"
#include "sfat/errors.hpp"
#include "sfat/numerics/random.hpp"

namespace sfat::corpus {

DensestWindow densest_window(const std::vector<CommentRecord>& comments, int span_s, int video_duration_s) {
  if (span_s <= 0) throw ParameterError("densest_window: span must be positive");
  if (span_s > video_duration_s) {
    throw ParameterError("densest_window: span " + std::to_string(span_s) + " exceeds duration " +
                         std::to_string(video_duration_s));
  }
  DensestWindow best;
  if (comments.empty()) {
    best.empty_input = true;
    return best;
  }
  // per-second histogram; a comment at time x lies in [s, s+span) iff floor(x) does
  std::vector<std::size_t> per_second(static_cast<std::size_t>(video_duration_s), 0);
  for (const auto& c : comments) {
    if (c.time_s < 0.0) continue;
    const auto sec = static_cast<long long>(std::floor(c.time_s));
    if (sec < video_duration_s) ++per_second[static_cast<std::size_t>(sec)];
  }
  std::size_t count = 0;
  for (int s = 0; s < span_s; ++s) count += per_second[static_cast<std::size_t>(s)];
  best.count = count;
  for (int s = 1; s + span_s <= video_duration_s; ++s) {
    count += per_second[static_cast<std::size_t>(s + span_s - 1)];
    count -= per_second[static_cast<std::size_t>(s - 1)];
    if (count > best.count) {
      best.count = count;
      best.start = s;
    }
  }
  return best;
}

std::vector<ClipWindow> segment_clips(const FrameTrack& track, const std::vector<CommentRecord>& comments,
                                      int T1, int T2, const Matrix* joint) {
  if (T1 <= 0 || T1 >= T2) {
    throw ParameterError("segment_clips: need 0 < T1 < T2, got T1=" + std::to_string(T1) +
                         " T2=" + std::to_string(T2));
  }
  if (joint && joint->rows != comments.size()) {
    throw DimensionError("segment_clips: " + std::to_string(joint->rows) + " joint rows for " +
                         std::to_string(comments.size()) + " comments");
  }
  const std::size_t dim = track.embed_dim();
  const std::size_t jdim = joint ? joint->cols : 0;
  const int n_clips = static_cast<int>(track.duration_s()) / T2;
  std::vector<ClipWindow> clips(static_cast<std::size_t>(n_clips));
  for (int k = 0; k < n_clips; ++k) {
    auto& w = clips[static_cast<std::size_t>(k)];
    w.video_id = track.video_id;
    w.t = k * T2;
    w.T1 = T1;
    w.T2 = T2;
    w.frame_rows = Matrix(static_cast<std::size_t>(T1), dim);
    std::copy_n(track.frames.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(w.t) * dim),
                static_cast<std::size_t>(T1) * dim, w.frame_rows.data.begin());
  }
  std::vector<std::vector<std::size_t>> ctx_rows(clips.size()), resp_rows(clips.size());
  for (std::size_t i = 0; i < comments.size(); ++i) {
    const double x = comments[i].time_s;
    if (x < 0.0) continue;
    const auto k = static_cast<long long>(std::floor(x / T2));
    if (k >= n_clips) continue;
    auto& w = clips[static_cast<std::size_t>(k)];
    // Half-open on both windows: [t, t+T1) and [t+T1, t+T2).
    if (x < w.t + T1) {
      w.context_comments.push_back(comments[i]);
      ctx_rows[static_cast<std::size_t>(k)].push_back(i);
    } else {
      w.response_comments.push_back(comments[i]);
      resp_rows[static_cast<std::size_t>(k)].push_back(i);
    }
  }
  auto gather = [&](const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), jdim);
    if (joint)
      for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(joint->row(rows[r]).begin(), jdim, m.row(r).begin());
    return m;
  };
  for (std::size_t k = 0; k < clips.size(); ++k) {
    clips[k].context_joint = gather(ctx_rows[k]);
    clips[k].response_joint = gather(resp_rows[k]);
  }
  return clips;
}

ContextSample sample_context(const ClipWindow& window, std::size_t n_c, const Vocabulary& vocab, std::size_t p_c) {
  if (n_c == 0) throw ParameterError("sample_context: n_c must be at least 1");
  const auto& ctx = window.context_comments;
  const std::size_t take = std::min(n_c, ctx.size());
  const std::size_t first = ctx.size() - take;  // latest comments, closest to the response window
  const std::size_t dim = window.context_joint.cols;

  ContextSample s;
  s.joint = Matrix(n_c, dim);
  s.mask.assign(n_c, 0);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& rec = ctx[first + i];
    s.comments.push_back(rec);
    s.sequences.push_back(tokenize(rec.text, vocab, p_c, false));
    s.mask[i] = 1;
    if (dim) std::copy_n(window.context_joint.row(first + i).begin(), dim, s.joint.row(i).begin());
  }
  for (std::size_t i = take; i < n_c; ++i) s.sequences.push_back(TokenSequence{std::vector<TokenId>(p_c, Vocabulary::kPad)});
  return s;
}

std::string anonymize_user(const std::string& user, const std::string& salt) {
  const auto h = fnv1a64(user, fnv1a64(salt + '\x1f'));
  char buf[20];
  std::snprintf(buf, sizeof buf, "u%016llx", static_cast<unsigned long long>(splitmix64(h)));
  return buf;
}

std::vector<CommentRecord> anonymize(std::vector<CommentRecord> comments, const std::string& salt) {
  for (auto& c : comments) {
    if (!c.raw_user) continue;
    c.user_hash = anonymize_user(*c.raw_user, salt);
    c.raw_user.reset();
  }
  return comments;
}

std::vector<std::pair<std::string, std::size_t>> collect_emotes(const std::vector<CommentRecord>& comments) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : comments)
    for (const auto& tok : normalize_tokens(c.text))
      if (is_emote_token(tok)) ++counts[tok.substr(7, tok.size() - 8)];
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

PreprocessSummary preprocess_corpus(const std::filesystem::path& in, const std::filesystem::path& out,
                                    const PreprocessOptions& opts) {
  Corpus c = load_corpus(in);
  PreprocessSummary summary;
  summary.dropped_empty = c.dropped_empty;
  summary.rejected_negative = c.rejected_negative;
  std::vector<CommentRecord> everything;
  for (auto& v : c.videos) {
    const int duration = static_cast<int>(v.track.duration_s());
    const int span = std::min(opts.span_s, duration);
    const auto dw = densest_window(v.comments, span, duration);
    summary.videos.push_back({v.id, dw.start, dw.count, dw.empty_input});

    Matrix frames(static_cast<std::size_t>(span), v.track.embed_dim());
    std::copy_n(v.track.frames.row(static_cast<std::size_t>(dw.start)).begin(), frames.data.size(), frames.data.begin());
    v.track.frames = std::move(frames);

    std::vector<CommentRecord> kept;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < v.comments.size(); ++i) {
      const double x = v.comments[i].time_s;
      if (x < dw.start || x >= dw.start + span) continue;
      kept.push_back(v.comments[i]);
      kept.back().time_s = x - dw.start;
      rows.push_back(i);
    }
    Matrix joint(rows.size(), v.joint.cols);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(v.joint.row(rows[r]).begin(), joint.cols, joint.row(r).begin());
    v.comments = anonymize(std::move(kept), opts.salt);
    v.joint = std::move(joint);
    everything.insert(everything.end(), v.comments.begin(), v.comments.end());
  }
  c.vocab = build_vocabulary(c.texts("train"), opts.vocab_size, opts.min_freq);
  summary.vocab_size = c.vocab.size();
  write_corpus(out, c);

  summary.emotes = collect_emotes(everything);
  std::ofstream tsv(out / "emotes.tsv");
  for (const auto& [name, n] : summary.emotes) tsv << name << '\t' << n << '\n';
  return summary;
}

}  // namespace sfat::corpus
