#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfat/corpus/types.hpp"
#include "sfat/corpus/vocabulary.hpp"
#include "sfat/model/decoder.hpp"
#include "sfat/training/adam.hpp"

namespace sfat {

struct TrainingConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 100;
  std::size_t train_epochs = 200;
  double mask_prob = 0.15;
  AdamOptions adam;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;         // empty: no periodic checkpoints
  std::size_t checkpoint_every = 0;   // epochs; 0 = only at the end
  bool include_empty_context = false;
  bool skip_pretrain = false;
  std::string init_checkpoint;        // start stage two from here

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct LossRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
};
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows);

// ---- MLM ------------------------------------------------------------------

struct MaskedSequence {
  std::vector<TokenId> ids;            // same length as the input, MASK substituted
  std::vector<std::size_t> positions;  // masked positions, ascending
};

/// Masks each ordinary token with a per-token rate calibrated so that the
/// expected masked fraction, including the forced single mask used when
/// nothing was drawn, equals p (or exactly one mask when n·p < 1).
MaskedSequence mask_for_mlm(std::span<const TokenId> ids, double p, std::mt19937_64& rng);

// Per-token probability q with E[max(Binomial(n, q), 1)] = n·p.
double calibrated_mask_rate(std::size_t n, double p);

struct PretrainResult {
  std::vector<LossRow> curve;     // one row per optimizer step
  std::vector<double> epoch_loss;
  double first_loss = 0.0;
  std::size_t sequences = 0;
  std::size_t skipped = 0;        // no maskable token
};

/// Stage one: masked-token prediction with the comment encoder and its MLM head.
PretrainResult pretrain(SfatModel<float>& model, const std::vector<corpus::TokenSequence>& sequences,
                        const TrainingConfig& config, Adam* optimizer = nullptr,
                        const std::function<void(std::size_t epoch)>& on_epoch = {});

// Fraction of masked tokens predicted exactly (eval mode, fixed seed).
double mlm_accuracy(const SfatModel<float>& model, const std::vector<corpus::TokenSequence>& sequences, double p,
                    std::uint64_t seed);

// ---- Stage two --------------------------------------------------------------

struct TrainExample {
  std::string window_id;
  corpus::ContextSample context;
  corpus::Matrix frames;
  std::vector<corpus::TokenSequence> responses;  // BOS..EOS, padded to p_r
};

struct PrepareStats {
  std::size_t windows = 0;
  std::size_t empty_context = 0;
  std::size_t empty_response = 0;
};

/// Tokenizes windows into examples with n_c context slots. Windows without a
/// response are dropped; empty-context windows only when `keep_empty_context`.
std::vector<TrainExample> prepare_examples(const std::vector<corpus::ClipWindow>& windows,
                                           const corpus::Vocabulary& vocab, std::size_t n_c, std::size_t p_c,
                                           std::size_t p_r, bool keep_empty_context, PrepareStats* stats = nullptr);

/// Uniform choice among the response comments, fixed by (seed, window, epoch).
/// Returns nullopt for an empty response window.
std::optional<std::size_t> select_target(const corpus::ClipWindow& window, std::uint64_t seed, std::size_t epoch);
std::optional<std::size_t> select_target(const std::string& window_id, std::size_t n_responses, std::uint64_t seed,
                                         std::size_t epoch);

struct TrainState {
  std::size_t epoch = 0;  // next epoch to run
  std::size_t step = 0;   // optimizer steps taken so far
};

struct TrainResult {
  std::vector<LossRow> curve;
  std::vector<double> epoch_loss;
  TrainState state;
};

/// One optimizer step over `batch`; returns the mean target loss. The target
/// per example and every dropout mask derive from (seed, epoch, step, index).
double train_step(SfatModel<float>& model, Adam& optimizer, const std::vector<const TrainExample*>& batch,
                  const TrainingConfig& config, std::size_t epoch, std::size_t step);

/// Stage two: epoch-shuffled batches, teacher forcing, Adam. Resumes from
/// `state` and calls `on_epoch` after each finished epoch. A non-finite loss
/// raises TrainingError naming the batch.
TrainResult train(SfatModel<float>& model, Adam& optimizer, const std::vector<TrainExample>& examples,
                  const TrainingConfig& config, TrainState state = {},
                  const std::function<void(const TrainState&)>& on_epoch = {});

// ---- Checkpoints --------------------------------------------------------------

struct Checkpoint {
  ModelConfig model_config;
  nlohmann::json extra;  // config snapshot and free-form metadata
  TrainState state;
  std::uint64_t seed = 0;
  std::optional<SfatModel<float>> model;
  std::optional<Adam> optimizer;
};

/// Writes manifest.json and params.sfeb (parameters in lexicographic order,
/// then optimizer moments) under `dir`.
void save_checkpoint(const std::filesystem::path& dir, const SfatModel<float>& model, const Adam* optimizer,
                     const TrainState& state, std::uint64_t seed, const nlohmann::json& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace sfat
