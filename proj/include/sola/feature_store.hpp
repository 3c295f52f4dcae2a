#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sola/tensor.hpp"

namespace sola {

/// An L x m matrix of snippet features; row t is the snippet at time t.
/// Stored as 32-bit floats, the way released feature files usually are.
struct FeatureSequence {
  MatF data;
  std::string video_id;
  int snippet_stride_alpha = 1;

  int length() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }

  /// Widened copy for numerical work.
  Mat as_double() const { return data.cast<double>(); }
};

/// Throws DataError / ShapeError if the sequence is empty or has non-finite
/// entries.
void validate(const FeatureSequence& seq);

// ---------------------------------------------------------------------------
// NPY v1.0 container

/// Reads a 2-D C-order "<f4" or "<f8" array. 64-bit input is rounded to float.
FeatureSequence load_array_file(const std::filesystem::path& path);

/// Writes NPY v1.0, "<f4", C order, shape (L, m). The file appears atomically.
void save_array_file(const FeatureSequence& seq, const std::filesystem::path& path);

/// Encodes/decodes the container in memory. load_array_file and
/// save_array_file are thin wrappers around these.
std::string encode_npy(const MatF& data);
MatF decode_npy(const std::string& bytes);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticSpec {
  int length_L = 256;
  int dim_m = 32;
  int n_segments = 4;
  int min_seg_len = 8;
  double video_component_weight = 1.0;    // c
  double segment_component_weight = 0.5;  // a
  double noise_weight = 0.2;              // b
  double background_fraction = 0.5;

  /// Throws SpecError when the recipe is infeasible.
  void validate() const;
};

enum class SnippetLabel : std::uint8_t { foreground = 1, background = 0 };

struct SegmentLabels {
  std::vector<SnippetLabel> label;
  std::vector<int> segment_id;

  int length() const { return static_cast<int>(label.size()); }
};

/// Draws one video: x_t = c*g + a*p_k + b*eps_t, rescaled to unit norm, with
/// g shared by the whole video and p_k shared within segment k.
std::pair<FeatureSequence, SegmentLabels> generate_synthetic(const SyntheticSpec& spec,
                                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Windows

struct FeatureWindow {
  Mat data;  // W x m
  std::string source_video;
  int start_index = 0;
};

/// Uniform start in [0, L - W]. Throws TooShortError when L < W.
FeatureWindow sample_window(const FeatureSequence& seq, int window_len, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Corpus directories: one .npy per video plus an optional "videos.tsv"
// (filename TAB alpha, '#' comments) and "labels.csv".

inline constexpr const char* kVideoListName = "videos.tsv";
inline constexpr const char* kLabelsName = "labels.csv";

std::vector<FeatureSequence> load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::vector<FeatureSequence>& corpus, const std::filesystem::path& dir);

/// labels.csv rows: video_id,index,label,segment_id with label in
/// {foreground, background}.
void save_labels(const std::vector<std::string>& video_ids,
                 const std::vector<SegmentLabels>& labels,
                 const std::filesystem::path& path);
std::vector<SegmentLabels> load_labels(const std::filesystem::path& path,
                                       const std::vector<FeatureSequence>& corpus);

// ---------------------------------------------------------------------------
// Small file helpers shared by every writer in the project.

/// Writes to a sibling temp file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace sola
