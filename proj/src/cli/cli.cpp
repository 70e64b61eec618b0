#include "sfat/cli/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "sfat/corpus/corpus_store.hpp"
#include "sfat/errors.hpp"
#include "sfat/evaluation/evaluation.hpp"
#include "sfat/model/decoder.hpp"

namespace sfat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json corpus_json(const CorpusOptions& c) {
  return {{"dir", c.dir},
          {"raw", c.raw},
          {"T1", c.T1},
          {"T2", c.T2},
          {"span_s", c.preprocess.span_s},
          {"salt", c.preprocess.salt},
          {"vocab_size", c.preprocess.vocab_size},
          {"min_freq", c.preprocess.min_freq}};
}

json eval_json(const EvalOptions& e) {
  return {{"checkpoint", e.checkpoint}, {"split", e.split},   {"max_queries", e.max_queries},
          {"normalize", e.normalize},   {"decode", e.decode}, {"top_k", e.top_k},
          {"max_len", e.max_len}};
}

json synth_json(const corpus::SynthConfig& s) {
  return {{"n_videos", s.n_videos},         {"duration_s", s.duration_s},   {"vocab_size", s.vocab_size},
          {"dim", s.dim},                   {"planted_rule", s.planted_rule}, {"T1", s.T1},
          {"T2", s.T2},                     {"eval_fraction", s.eval_fraction}, {"frame_noise", s.frame_noise},
          {"spam_prob", s.spam_prob},       {"min_context", s.min_context}, {"max_context", s.max_context},
          {"min_response", s.min_response}, {"max_response", s.max_response}};
}

// Same key set and compatible types as the defaults.
void check_section(const std::string& name, const json& given, const json& defaults) {
  if (!given.is_object()) throw ConfigError(name + " must be an object");
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown key " + name + "." + key);
    const auto& ref = defaults[key];
    const bool ok = ref.is_boolean()        ? value.is_boolean()
                    : ref.is_string()       ? value.is_string()
                    : ref.is_number_float() ? value.is_number()
                                            : value.is_number_integer();
    if (!ok) throw ConfigError(name + "." + key + " has the wrong type");
  }
}

template <typename F>
void take(const json& j, const char* key, F& field) {
  if (j.contains(key)) field = j[key].get<F>();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ostream& operator<<(std::ostream& os, const fs::path& p) { return os << p.string(); }

}  // namespace

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"model", model.to_json()},
          {"training", training.to_json()},
          {"corpus", corpus_json(corpus)},
          {"eval", eval_json(eval)},
          {"synth", synth_json(synth)}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const auto defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown top-level key " + key);
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
      c.seed = value.get<std::uint64_t>();
    }
  }
  if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
  if (j.contains("training")) c.training = TrainingConfig::from_json(j["training"]);
  if (j.contains("corpus")) {
    const auto& s = j["corpus"];
    check_section("corpus", s, defaults["corpus"]);
    take(s, "dir", c.corpus.dir);
    take(s, "raw", c.corpus.raw);
    take(s, "T1", c.corpus.T1);
    take(s, "T2", c.corpus.T2);
    take(s, "span_s", c.corpus.preprocess.span_s);
    take(s, "salt", c.corpus.preprocess.salt);
    take(s, "vocab_size", c.corpus.preprocess.vocab_size);
    take(s, "min_freq", c.corpus.preprocess.min_freq);
  }
  if (j.contains("eval")) {
    const auto& s = j["eval"];
    check_section("eval", s, defaults["eval"]);
    take(s, "checkpoint", c.eval.checkpoint);
    take(s, "split", c.eval.split);
    take(s, "max_queries", c.eval.max_queries);
    take(s, "normalize", c.eval.normalize);
    take(s, "decode", c.eval.decode);
    take(s, "top_k", c.eval.top_k);
    take(s, "max_len", c.eval.max_len);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    check_section("synth", s, defaults["synth"]);
    take(s, "n_videos", c.synth.n_videos);
    take(s, "duration_s", c.synth.duration_s);
    take(s, "vocab_size", c.synth.vocab_size);
    take(s, "dim", c.synth.dim);
    take(s, "planted_rule", c.synth.planted_rule);
    take(s, "T1", c.synth.T1);
    take(s, "T2", c.synth.T2);
    take(s, "eval_fraction", c.synth.eval_fraction);
    take(s, "frame_noise", c.synth.frame_noise);
    take(s, "spam_prob", c.synth.spam_prob);
    take(s, "min_context", c.synth.min_context);
    take(s, "max_context", c.synth.max_context);
    take(s, "min_response", c.synth.min_response);
    take(s, "max_response", c.synth.max_response);
  }

  c.model.validate();
  c.training.validate();
  if (c.corpus.T1 <= 0 || c.corpus.T1 >= c.corpus.T2) throw ConfigError("corpus: need 0 < T1 < T2");
  if (c.eval.decode != "greedy" && c.eval.decode != "top_k") throw ConfigError("eval.decode must be greedy or top_k");
  if (c.eval.top_k == 0) throw ConfigError("eval.top_k must be positive");
  try {
    c.synth.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  auto j = read_json(path);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto defaults = RunConfig{}.to_json();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + o + "'");
    const auto key = o.substr(0, eq), text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      if (!defaults.contains(key) || defaults[key].is_object()) throw ConfigError("unknown config key " + key);
      j[key] = value;
      continue;
    }
    const auto section = key.substr(0, dot), field = key.substr(dot + 1);
    if (!defaults.contains(section) || !defaults[section].is_object() || !defaults[section].contains(field))
      throw ConfigError("unknown config key " + key);
    j[section][field] = value;
  }
  return RunConfig::from_json(j);
}

namespace {

struct Context {
  RunConfig cfg;
  fs::path out;
  std::size_t threads = 1;
  std::optional<bool> uniform;  // explicit --uniform-aggregation
  std::ostream& log;

  fs::path corpus_dir() const { return cfg.corpus.dir.empty() ? out / "corpus" : fs::path(cfg.corpus.dir); }
  void make_dirs() const {
    for (auto sub : {"corpus", "checkpoints", "reports", "logs"}) fs::create_directories(out / sub);
  }
};

// The corpus fixes the vocabulary and the input embedding width.
ModelConfig model_for(const Context& ctx, const corpus::Corpus& c) {
  auto m = ctx.cfg.model;
  m.vocab_size = c.vocab.size();
  m.input_embed_dim = c.embed_dim;
  if (ctx.uniform) m.uniform_aggregation = *ctx.uniform;
  m.validate();
  return m;
}

corpus::Corpus open_corpus(const Context& ctx) {
  auto c = corpus::load_corpus(ctx.corpus_dir());
  if (c.vocab.size() <= corpus::Vocabulary::kNumSpecial)
    throw DataError("corpus " + ctx.corpus_dir().string() + " has no vocabulary (run preprocess or synth)");
  return c;
}

json snapshot(const Context& ctx, const std::string& stage) {
  return {{"stage", stage}, {"run_config", ctx.cfg.to_json()}};
}

int cmd_synth(const Context& ctx) {
  auto sc = ctx.cfg.synth;
  sc.seed = ctx.cfg.seed;
  const auto dir = ctx.corpus_dir();
  fs::remove_all(dir);
  auto planted = corpus::synth_corpus(sc, dir);
  ctx.log << "synth: " << sc.n_videos << " videos, " << planted.size() << " planted windows -> " << dir << '\n';
  return 0;
}

int cmd_preprocess(const Context& ctx) {
  if (ctx.cfg.corpus.raw.empty()) throw ConfigError("preprocess needs corpus.raw (the input corpus directory)");
  const auto dir = ctx.corpus_dir();
  auto summary = corpus::preprocess_corpus(ctx.cfg.corpus.raw, dir, ctx.cfg.corpus.preprocess);
  auto c = corpus::load_corpus(dir);
  std::size_t clips = 0, empty_ctx = 0;
  for (const auto& w : c.windows("", ctx.cfg.corpus.T1, ctx.cfg.corpus.T2)) {
    ++clips;
    empty_ctx += w.empty_context();
  }
  json report{{"videos", json::array()},
              {"dropped_empty", summary.dropped_empty},
              {"rejected_negative", summary.rejected_negative},
              {"vocab_size", summary.vocab_size},
              {"emotes", summary.emotes.size()},
              {"clips", clips},
              {"clips_empty_context", empty_ctx}};
  for (const auto& v : summary.videos)
    report["videos"].push_back({{"id", v.id}, {"start", v.start}, {"kept", v.kept}, {"empty_input", v.empty_input}});
  write_json(ctx.out / "reports" / "preprocess.json", report);
  ctx.log << "preprocess: " << summary.videos.size() << " videos, " << clips << " clips (" << empty_ctx
          << " with empty context), vocabulary " << summary.vocab_size << '\n';
  return 0;
}

int cmd_pretrain(const Context& ctx) {
  auto c = open_corpus(ctx);
  auto mcfg = model_for(ctx, c);
  auto tcfg = ctx.cfg.training;
  tcfg.seed = ctx.cfg.seed;
  SfatModel<float> model(mcfg, ctx.cfg.seed);
  std::vector<corpus::TokenSequence> seqs;
  for (const auto& t : c.texts("train")) seqs.push_back(corpus::tokenize(t, c.vocab, mcfg.p_c, false));
  if (seqs.empty()) throw DataError("no training-split comments to pretrain on");
  const auto ckpt = ctx.out / "checkpoints" / "pretrain";
  Adam opt(tcfg.adam);
  auto result = pretrain(model, seqs, tcfg, &opt, [&](std::size_t epoch) {
    if (tcfg.checkpoint_every && (epoch + 1) % tcfg.checkpoint_every == 0)
      save_checkpoint(ckpt, model, nullptr, {epoch + 1, opt.steps()}, ctx.cfg.seed, snapshot(ctx, "pretrain"));
  });
  save_checkpoint(ckpt, model, nullptr, {tcfg.pretrain_epochs, opt.steps()}, ctx.cfg.seed, snapshot(ctx, "pretrain"));
  write_loss_csv(ctx.out / "logs" / "pretrain_loss.csv", result.curve);
  ctx.log << "pretrain: " << result.sequences << " comments (" << result.skipped << " unmaskable), loss "
          << result.first_loss << " -> " << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << ", "
          << ckpt << '\n';
  return 0;
}

int cmd_train(const Context& ctx) {
  auto c = open_corpus(ctx);
  auto mcfg = model_for(ctx, c);
  auto tcfg = ctx.cfg.training;
  tcfg.seed = ctx.cfg.seed;

  fs::path init = tcfg.init_checkpoint;
  if (init.empty() && fs::exists(ctx.out / "checkpoints" / "pretrain" / "manifest.json"))
    init = ctx.out / "checkpoints" / "pretrain";
  if (init.empty() && !tcfg.skip_pretrain)
    throw ConfigError("train needs a pretrained encoder: run pretrain, set training.init_checkpoint, or set "
                      "training.skip_pretrain=true");

  std::optional<SfatModel<float>> model;
  Adam opt(tcfg.adam);
  TrainState state;
  if (!init.empty()) {
    auto cp = load_checkpoint(init);
    auto stored = cp.model_config;
    stored.uniform_aggregation = mcfg.uniform_aggregation;
    stored.dropout = mcfg.dropout;
    if (stored.to_json() != mcfg.to_json())
      throw ConfigError("checkpoint " + init.string() + " was built with a different model configuration");
    model.emplace(std::move(*cp.model));
    model->set_uniform_aggregation(mcfg.uniform_aggregation);
    model->set_dropout(mcfg.dropout);
    if (cp.extra.value("stage", "") == "train" && cp.optimizer) {  // resume
      opt = std::move(*cp.optimizer);
      state = cp.state;
    }
    ctx.log << "train: starting from " << init << " (epoch " << state.epoch << ")\n";
  } else {
    model.emplace(mcfg, ctx.cfg.seed);
  }

  PrepareStats stats;
  auto examples = prepare_examples(c.windows("train", ctx.cfg.corpus.T1, ctx.cfg.corpus.T2), c.vocab, mcfg.n_c_train,
                                   mcfg.p_c, mcfg.p_r, tcfg.include_empty_context, &stats);
  const auto ckpt = ctx.out / "checkpoints" / "train";
  auto result = train(*model, opt, examples, tcfg, state, [&](const TrainState& s) {
    if (tcfg.checkpoint_every && s.epoch % tcfg.checkpoint_every == 0)
      save_checkpoint(ckpt, *model, &opt, s, ctx.cfg.seed, snapshot(ctx, "train"));
  });
  save_checkpoint(ckpt, *model, &opt, result.state, ctx.cfg.seed, snapshot(ctx, "train"));
  write_loss_csv(ctx.out / "logs" / "train_loss.csv", result.curve);
  ctx.log << "train: " << examples.size() << " windows (" << stats.empty_context << " empty-context, "
          << stats.empty_response << " empty-response skipped), final epoch loss "
          << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << ", " << ckpt << '\n';
  return 0;
}

SfatModel<float> load_eval_model(const Context& ctx, const corpus::Corpus& c) {
  if (ctx.cfg.eval.checkpoint.empty())
    throw ConfigError("missing required field eval.checkpoint (use --set eval.checkpoint=DIR)");
  auto cp = load_checkpoint(ctx.cfg.eval.checkpoint);
  if (cp.model_config.vocab_size != c.vocab.size())
    throw ConfigError("checkpoint vocabulary size " + std::to_string(cp.model_config.vocab_size) +
                      " does not match the corpus (" + std::to_string(c.vocab.size()) + ")");
  auto model = std::move(*cp.model);
  if (ctx.uniform) model.set_uniform_aggregation(*ctx.uniform);
  return model;
}

eval::EvalConfig eval_config(const Context& ctx, const ModelConfig& m) {
  eval::EvalConfig e;
  e.split = ctx.cfg.eval.split;
  e.T1 = ctx.cfg.corpus.T1;
  e.T2 = ctx.cfg.corpus.T2;
  e.n_c = m.n_c_eval;
  e.p_c = m.p_c;
  e.p_r = m.p_r;
  e.seed = ctx.cfg.seed;
  e.normalize = ctx.cfg.eval.normalize;
  e.threads = ctx.threads;
  e.max_queries = ctx.cfg.eval.max_queries;
  e.checkpoint = ctx.cfg.eval.checkpoint;
  return e;
}

int cmd_evaluate(const Context& ctx) {
  if (ctx.cfg.eval.checkpoint.empty())
    throw ConfigError("missing required field eval.checkpoint (use --set eval.checkpoint=DIR)");
  auto c = open_corpus(ctx);
  auto model = load_eval_model(ctx, c);
  auto report = eval::evaluate(model, c, eval_config(ctx, model.config()));
  auto j = report.to_json();
  j["config"] = ctx.cfg.to_json();
  j["uniform_aggregation"] = model.config().uniform_aggregation;
  write_json(ctx.out / "reports" / "eval.json", j);
  ctx.log << report.table();
  return 0;
}

int cmd_generate(const Context& ctx) {
  if (ctx.cfg.eval.checkpoint.empty())
    throw ConfigError("missing required field eval.checkpoint (use --set eval.checkpoint=DIR)");
  auto c = open_corpus(ctx);
  auto model = load_eval_model(ctx, c);
  const auto& m = model.config();
  const auto strategy = ctx.cfg.eval.decode == "greedy" ? DecodeStrategy::greedy()
                                                         : DecodeStrategy::top_k(ctx.cfg.eval.top_k, ctx.cfg.seed);
  const std::size_t max_len = ctx.cfg.eval.max_len ? ctx.cfg.eval.max_len : m.p_r;
  std::ofstream out(ctx.out / "reports" / "generated.jsonl", std::ios::trunc);
  std::size_t n = 0;
  NoGradGuard guard;
  for (const auto& w : c.windows(ctx.cfg.eval.split, ctx.cfg.corpus.T1, ctx.cfg.corpus.T2)) {
    if (w.empty_context()) continue;
    if (ctx.cfg.eval.max_queries && n == ctx.cfg.eval.max_queries) break;
    auto sample = corpus::sample_context(w, m.n_c_eval, c.vocab, m.p_c);
    auto inputs = encode_inputs(sample, w.frame_rows, model, ForwardMode::eval());
    auto g = generate(inputs.context, inputs.video(), model, strategy, max_len, &c.vocab);
    out << json{{"window_id", w.id()}, {"generated_text", g.text}, {"logprob", g.total_logprob}}.dump() << '\n';
    ++n;
  }
  ctx.log << "generate: " << n << " comments -> " << (ctx.out / "reports" / "generated.jsonl") << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frame-weighted comment generation for live video", "sfat"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  std::size_t threads = 1;
  std::vector<std::string> overrides;
  std::optional<bool> normalize, uniform;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "seed for every random stream (overrides the config)");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--set", overrides, "section.key=value override (repeatable)")->take_all();
  app.add_option("--normalize-ll", normalize, "length-normalize candidate log-likelihoods");
  app.add_option("--uniform-aggregation", uniform, "replace frame aggregation by a plain average");

  const std::vector<std::pair<const char*, const char*>> commands{
      {"synth", "write a planted-key-frame synthetic corpus"},
      {"preprocess", "trim, segment, anonymize and build the vocabulary"},
      {"pretrain", "masked-token pretraining of the comment encoder"},
      {"train", "comment generation training"},
      {"evaluate", "candidate ranking evaluation"},
      {"generate", "decode one comment per evaluation window"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto cfg = load_run_config(config_path, overrides);
    if (seed) cfg.seed = *seed;
    if (normalize) cfg.eval.normalize = *normalize;
    if (uniform) cfg.model.uniform_aggregation = *uniform;
    Context ctx{cfg, out_dir, threads, uniform, out};
    ctx.make_dirs();
    write_json(ctx.out / "logs" / (command + "_config.json"), cfg.to_json());
    if (command == "synth") return cmd_synth(ctx);
    if (command == "preprocess") return cmd_preprocess(ctx);
    if (command == "pretrain") return cmd_pretrain(ctx);
    if (command == "train") return cmd_train(ctx);
    if (command == "evaluate") return cmd_evaluate(ctx);
    return cmd_generate(ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << command << " failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << command << " failed: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace sfat::cli
