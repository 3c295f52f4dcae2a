#pragma once

#include <filesystem>
#include <string>

#include "sola/model.hpp"
#include "sola/tensor.hpp"

namespace sola {

inline constexpr double kCosineEps = 1e-8;
inline constexpr double kProbClamp = 1e-7;

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Temporal self-similarity matrix. When `diagonal_defined` is false the
/// diagonal holds NaN and is skipped by every reduction.
struct Tsm {
  Mat values;
  ValueRange range;
  bool diagonal_defined = true;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool counted(Eigen::Index i, Eigen::Index j) const { return diagonal_defined || i != j; }
};

enum class GatherMode { mean_pool, strided };

struct MatchConfig {
  double K = 16.0;
  int step_s = 2;
  GatherMode gather_mode = GatherMode::mean_pool;

  void validate() const;
};

/// sigmoid(K / d^2). Strictly decreasing in d, tends to 1/2.
double target_similarity(double d, double K);

/// Non-overlapping pooling of width s; the trailing W mod s rows are dropped.
Mat gather(const Mat& z, int s, GatherMode mode = GatherMode::mean_pool);

/// (cos(u, v) + 1) / 2 with the norms padded by kCosineEps, clamped to [0, 1].
double rescaled_cosine(const Eigen::Ref<const RowVec>& u, const Eigen::Ref<const RowVec>& v);

/// n x n target with entry (i, j) = target_similarity(s * |i - j|, K).
/// Distances are in snippet units of the window before gathering.
Tsm build_target_tsm(int n, const MatchConfig& cfg);

/// Entry (i, j) compares the plain row i with the projected row j, so the
/// result is not symmetric in general.
Tsm predicted_tsm(const Mat& gathered, const ParamTensors& params);

/// Mean soft-target binary cross entropy over counted positions. Predictions
/// are clamped to [kProbClamp, 1 - kProbClamp].
double sm_loss(const Tsm& target, const Tsm& pred);

/// Mean binary entropy of the counted entries, the minimum of sm_loss(target, .).
double mean_entropy(const Tsm& target);

/// Frobenius norm of (a - b) over positions counted in both.
double tsm_distance(const Tsm& a, const Tsm& b);

/// Row-major CSV, 9 significant digits, excluded diagonal as an empty field.
std::string tsm_to_csv(const Tsm& tsm);
Tsm tsm_from_csv(const std::string& text);

/// Binary PGM (P5); v -> round(255 v). Excluded diagonal cells are black.
std::string tsm_to_pgm(const Tsm& tsm);

}  // namespace sola
