#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sola/feature_store.hpp"
#include "sola/model.hpp"
#include "sola/similarity.hpp"

namespace sola {

/// Runs the refinement stack over a whole sequence in one pass.
FeatureSequence transform(const SolaParams& params, const FeatureSequence& seq);
std::vector<FeatureSequence> transform_corpus(const SolaParams& params,
                                              const std::vector<FeatureSequence>& corpus);

/// Symmetric rescaled-cosine TSM with unit diagonal.
Tsm compute_tsm(const Mat& rows);
Tsm compute_tsm(const FeatureSequence& seq);

/// Element-wise mean of the TSMs of `samples_per_video` random windows from
/// each video with at least `window_len` snippets.
Tsm average_tsm(const std::vector<FeatureSequence>& corpus, int window_len, int samples_per_video,
                std::uint64_t seed);

struct DecayCurve {
  std::vector<double> mean;      // index d - 1
  std::vector<long long> count;  // index d - 1

  int d_max() const { return static_cast<int>(mean.size()); }
};

/// Mean rescaled cosine between snippets d apart inside sampled windows,
/// for d = 1 .. d_max.
DecayCurve similarity_decay(const std::vector<FeatureSequence>& corpus, int d_max, int window_len,
                            int samples_per_video, std::uint64_t seed);

/// Population standard deviation of the strict upper triangle of the TSM.
double temporal_sensitivity(const FeatureSequence& seq);
double corpus_sensitivity(const std::vector<FeatureSequence>& corpus);

/// Binary linear probe. Labels are 1 for foreground, 0 for background.
struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  int epochs_run = 0;
  std::vector<double> test_curve;
};

struct ProbeConfig {
  int epochs = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

/// L2-normalizes rows, then fits a logistic-regression layer by full-batch
/// gradient descent. Throws DataError when the training labels hold one class.
ProbeResult linear_probe(const Mat& train_feats, const std::vector<int>& train_labels,
                         const Mat& test_feats, const std::vector<int>& test_labels,
                         const ProbeConfig& cfg);

struct ProbeSplit {
  Mat train_feats;
  std::vector<int> train_labels;
  Mat test_feats;
  std::vector<int> test_labels;
};

/// Assigns every snippet of every video to the test split with probability
/// `test_fraction`. The same seed yields the same assignment for any corpus
/// of the same shape, so original and transformed features share a split.
ProbeSplit split_snippets(const std::vector<FeatureSequence>& corpus,
                          const std::vector<SegmentLabels>& labels, double test_fraction,
                          std::uint64_t seed);

/// Writes `tsm` as "csv" or "pgm". Any other tag is a ConfigError.
void export_heatmap(const Tsm& tsm, const std::filesystem::path& path, const std::string& format);

std::string decay_to_csv(const DecayCurve& curve);
std::string probe_to_csv(const ProbeResult& result);

}  // namespace sola
