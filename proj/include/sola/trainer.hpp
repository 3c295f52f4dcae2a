#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sola/feature_store.hpp"
#include "sola/model.hpp"
#include "sola/similarity.hpp"

namespace sola {

struct TrainConfig {
  ModelConfig model;
  MatchConfig match;
  int window_len = 64;
  int batch_size = 256;
  int epochs = 10;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Treat the un-projected branch as a constant when differentiating.
  bool stop_gradient_plain_branch = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// Batch-mean similarity-matching loss over `windows` (each W x m).
double batch_loss(const SolaParams& params, const std::vector<Mat>& windows,
                  const TrainConfig& cfg);

/// Same loss, with the plain (row) branch computed from `plain` and the
/// projected (column) branch from `projected`. With plain == projected this
/// is batch_loss. Lets a numerical oracle hold the plain branch fixed.
double split_branch_loss(const SolaParams& plain, const SolaParams& projected,
                         const std::vector<Mat>& windows, const TrainConfig& cfg);

/// Loss and exact reverse-mode gradient. Throws NumericsError naming the
/// first non-finite tensor.
LossAndGrad loss_and_grad(const SolaParams& params, const std::vector<Mat>& windows,
                          const TrainConfig& cfg);

/// Central differences (L(p + h) - L(p - h)) / 2h per scalar. Under
/// stop-gradient only the projected branch sees the perturbation.
GradientSet finite_diff_grad(const SolaParams& params, const std::vector<Mat>& windows,
                             const TrainConfig& cfg, double h_fd);

/// Largest |a - b| / max(1e-8, |a| + |b|) over all entries.
double max_relative_error(const GradientSet& a, const GradientSet& b);

struct AdamState {
  ParamTensors first_moment;
  ParamTensors second_moment;

  static AdamState zeros_like(const ParamTensors& params);
};

/// One bias-corrected Adam update; `step` counts from 1.
void adam_step(SolaParams& params, const GradientSet& grads, AdamState& state,
               const TrainConfig& cfg, long long step);

/// Element-wise mean of the predicted TSMs of `windows` after refinement and
/// gathering.
Tsm average_predicted_tsm(const SolaParams& params, const std::vector<Mat>& windows,
                          const TrainConfig& cfg);

struct TrainHistory {
  std::vector<double> step_loss;
  std::vector<int> step_epoch;              // 1-based epoch of each step
  std::vector<double> epoch_mean_loss;      // one per epoch
  std::vector<double> epoch_tsm_distance;   // one per epoch, measured after it
  double initial_tsm_distance = 0.0;        // before the first update
};

/// Videos with at least W snippets.
std::vector<const FeatureSequence*> eligible_videos(const std::vector<FeatureSequence>& corpus,
                                                    int window_len);

/// Steps per epoch: ceil(sum over eligible videos of (L - W + 1) / batch), i.e.
/// one epoch draws as many windows as there are distinct window positions.
long long steps_per_epoch(const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg);

/// Samples batch_size windows: video uniform with replacement, start uniform.
std::vector<Mat> sample_batch(const std::vector<const FeatureSequence*>& videos,
                              const TrainConfig& cfg, std::mt19937_64& rng);

struct TrainResult {
  SolaParams params;
  TrainHistory history;
};

/// Adam on the similarity-matching loss. Deterministic in (corpus, cfg).
TrainResult train(const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg);
/// Continues from given parameters (used by tests and the CLI gradient gate).
TrainResult train(const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg,
                  SolaParams initial);

/// CSV with columns step,loss,epoch,avg_tsm_distance. Row 0 carries the
/// pre-training distance; the distance column is filled on the last step of
/// each epoch.
std::string history_to_csv(const TrainHistory& history);

}  // namespace sola
