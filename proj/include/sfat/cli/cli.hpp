#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfat/corpus/preprocess.hpp"
#include "sfat/corpus/synth.hpp"
#include "sfat/model/sfat_model.hpp"
#include "sfat/training/training.hpp"

namespace sfat::cli {

struct CorpusOptions {
  std::string dir;  // corpus to read; empty = <out>/corpus
  std::string raw;  // preprocess input
  int T1 = 20, T2 = 30;
  corpus::PreprocessOptions preprocess;
};

struct EvalOptions {
  std::string checkpoint;
  std::string split = "eval";
  std::size_t max_queries = 0;  // 0 = all
  bool normalize = true;
  std::string decode = "greedy";  // greedy | top_k
  std::size_t top_k = 5;
  std::size_t max_len = 0;        // 0 = p_r
};

/// Sections "model", "training", "corpus", "eval", "synth" plus a top-level
/// "seed" that feeds every random stream.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainingConfig training;
  CorpusOptions corpus;
  EvalOptions eval;
  corpus::SynthConfig synth;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // unknown keys and bad types -> ConfigError
};

/// Reads `path` and applies "section.key=value" overrides; values are parsed
/// as JSON when possible, otherwise taken as strings.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Entry point behind the `sfat` binary. Returns 0 on success, 2 for usage and
/// configuration errors, 1 for runtime failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sfat::cli
