#include "sola/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sola/errors.hpp"
#include "sola/parallel.hpp"

namespace sola {

FeatureSequence transform(const SolaParams& params, const FeatureSequence& seq) {
  validate(seq);
  FeatureSequence out;
  out.data = sola_forward(params, seq.as_double()).cast<float>();
  out.video_id = seq.video_id;
  out.snippet_stride_alpha = seq.snippet_stride_alpha;
  return out;
}

std::vector<FeatureSequence> transform_corpus(const SolaParams& params,
                                              const std::vector<FeatureSequence>& corpus) {
  std::vector<FeatureSequence> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t v) { out[v] = transform(params, corpus[v]); });
  return out;
}

Tsm compute_tsm(const Mat& rows) {
  if (rows.rows() < 2) throw ShapeError("TSM needs at least 2 rows");
  const Eigen::Index n = rows.rows();
  const Vec pad = rows.rowwise().norm().array() + kCosineEps;
  const Mat unit = pad.cwiseInverse().asDiagonal() * rows;
  const Mat cos = unit * unit.transpose();
  Tsm t;
  t.values.resize(n, n);
  t.range = {0.0, 1.0};
  t.diagonal_defined = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    t.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::clamp(0.5 * (cos(i, j) + 1.0), 0.0, 1.0);
      t.values(i, j) = v;
      t.values(j, i) = v;
    }
  }
  return t;
}

Tsm compute_tsm(const FeatureSequence& seq) { return compute_tsm(seq.as_double()); }

namespace {

std::vector<Mat> sample_windows(const std::vector<FeatureSequence>& corpus, int window_len,
                                int samples_per_video, std::uint64_t seed) {
  if (samples_per_video < 1) throw ConfigError("samples per video must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<Mat> windows;
  for (const auto& seq : corpus) {
    if (seq.length() < window_len) continue;
    for (int s = 0; s < samples_per_video; ++s) windows.push_back(sample_window(seq, window_len, rng).data);
  }
  if (windows.empty()) {
    throw ConfigError("no video has at least " + std::to_string(window_len) + " snippets");
  }
  return windows;
}

}  // namespace

Tsm average_tsm(const std::vector<FeatureSequence>& corpus, int window_len, int samples_per_video,
                std::uint64_t seed) {
  if (window_len < 2) throw ConfigError("window length must be at least 2");
  const auto windows = sample_windows(corpus, window_len, samples_per_video, seed);
  std::vector<Tsm> each(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) { each[i] = compute_tsm(windows[i]); });
  Tsm avg = each.front();
  for (std::size_t i = 1; i < each.size(); ++i) avg.values += each[i].values;
  avg.values /= static_cast<double>(each.size());
  return avg;
}

DecayCurve similarity_decay(const std::vector<FeatureSequence>& corpus, int d_max, int window_len,
                            int samples_per_video, std::uint64_t seed) {
  if (d_max < 1) throw ConfigError("d_max must be at least 1");
  if (d_max >= window_len) throw ConfigError("d_max must be smaller than the window length");
  if (corpus.empty()) throw ConfigError("empty corpus");
  const auto windows = sample_windows(corpus, window_len, samples_per_video, seed);

  DecayCurve curve;
  curve.mean.assign(static_cast<std::size_t>(d_max), 0.0);
  curve.count.assign(static_cast<std::size_t>(d_max), 0);
  for (const Mat& w : windows) {
    const Tsm t = compute_tsm(w);
    for (int d = 1; d <= d_max; ++d) {
      for (Eigen::Index i = 0; i + d < w.rows(); ++i) {
        curve.mean[d - 1] += t.values(i, i + d);
        ++curve.count[d - 1];
      }
    }
  }
  for (int d = 0; d < d_max; ++d) curve.mean[d] /= static_cast<double>(curve.count[d]);
  return curve;
}

double temporal_sensitivity(const FeatureSequence& seq) {
  const Tsm t = compute_tsm(seq);
  const Eigen::Index n = t.rows();
  if (n < 2) return 0.0;
  // Shifting by one entry keeps a constant triangle at exactly zero.
  const double shift = t.values(0, 1);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) sum += t.values(i, j) - shift;
  }
  const double count = static_cast<double>(n * (n - 1) / 2);
  const double mean = sum / count;
  double var = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = t.values(i, j) - shift - mean;
      var += d * d;
    }
  }
  return std::sqrt(var / count);
}

double corpus_sensitivity(const std::vector<FeatureSequence>& corpus) {
  if (corpus.empty()) throw ConfigError("empty corpus");
  std::vector<double> each(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t v) { each[v] = temporal_sensitivity(corpus[v]); });
  double total = 0.0;
  for (double s : each) total += s;
  return total / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// Linear probe

namespace {

Mat normalize_rows(const Mat& x) {
  const Vec pad = x.rowwise().norm().array() + kCosineEps;
  return pad.cwiseInverse().asDiagonal() * x;
}

double accuracy(const Mat& x, const std::vector<int>& y, const Vec& w, double b) {
  if (x.rows() == 0) return 0.0;
  const Vec score = (x * w).array() + b;
  long long hits = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) hits += (score[i] > 0) == (y[i] == 1);
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

void check_labels(const Mat& x, const std::vector<int>& y, const char* which) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) {
    throw ShapeError(std::string(which) + " labels do not match the feature rows");
  }
  for (int v : y) {
    if (v != 0 && v != 1) throw DataError(std::string(which) + " labels must be 0 or 1");
  }
}

}  // namespace

ProbeResult linear_probe(const Mat& train_feats, const std::vector<int>& train_labels,
                         const Mat& test_feats, const std::vector<int>& test_labels,
                         const ProbeConfig& cfg) {
  check_labels(train_feats, train_labels, "training");
  check_labels(test_feats, test_labels, "test");
  if (train_feats.rows() == 0) throw DataError("empty training set");
  if (test_feats.rows() > 0 && test_feats.cols() != train_feats.cols()) {
    throw ShapeError("train and test feature dims differ");
  }
  long long positives = 0;
  for (int v : train_labels) positives += v;
  if (positives == 0 || positives == static_cast<long long>(train_labels.size())) {
    throw DataError("training labels contain a single class");
  }
  if (cfg.epochs < 0 || !(cfg.learning_rate > 0)) throw ConfigError("bad probe settings");

  const Mat x = normalize_rows(train_feats);
  const Mat x_test = normalize_rows(test_feats);
  Vec y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = train_labels[i];

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> init(-0.01, 0.01);
  Vec w(x.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = init(rng);
  double b = 0.0;

  ProbeResult result;
  const double n = static_cast<double>(x.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Vec score = (x * w).array() + b;
    const Vec resid = score.unaryExpr([](double s) { return 1.0 / (1.0 + std::exp(-s)); }) - y;
    w -= cfg.learning_rate * (x.transpose() * resid) / n;
    b -= cfg.learning_rate * resid.sum() / n;
    result.test_curve.push_back(accuracy(x_test, test_labels, w, b));
  }
  result.epochs_run = cfg.epochs;
  result.train_accuracy = accuracy(x, train_labels, w, b);
  result.test_accuracy = accuracy(x_test, test_labels, w, b);
  return result;
}

ProbeSplit split_snippets(const std::vector<FeatureSequence>& corpus,
                          const std::vector<SegmentLabels>& labels, double test_fraction,
                          std::uint64_t seed) {
  if (corpus.size() != labels.size()) throw ShapeError("one label set per video required");
  if (!(test_fraction >= 0 && test_fraction <= 1)) throw ConfigError("test fraction must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution to_test(test_fraction);

  std::vector<std::pair<int, int>> train_rows, test_rows;  // (video, index)
  for (std::size_t v = 0; v < corpus.size(); ++v) {
    if (labels[v].length() != corpus[v].length()) throw ShapeError("labels do not match video length");
    for (int t = 0; t < corpus[v].length(); ++t) {
      (to_test(rng) ? test_rows : train_rows).emplace_back(static_cast<int>(v), t);
    }
  }
  const int m = corpus.empty() ? 0 : corpus.front().dim();
  auto fill = [&](const std::vector<std::pair<int, int>>& rows, Mat& feats, std::vector<int>& y) {
    feats.resize(static_cast<Eigen::Index>(rows.size()), m);
    y.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto [v, t] = rows[r];
      if (corpus[v].dim() != m) throw ShapeError("videos have different feature dims");
      feats.row(static_cast<Eigen::Index>(r)) = corpus[v].data.row(t).cast<double>();
      y[r] = labels[v].label[t] == SnippetLabel::foreground ? 1 : 0;
    }
  };
  ProbeSplit split;
  fill(train_rows, split.train_feats, split.train_labels);
  fill(test_rows, split.test_feats, split.test_labels);
  return split;
}

// ---------------------------------------------------------------------------

void export_heatmap(const Tsm& tsm, const std::filesystem::path& path, const std::string& format) {
  if (format == "csv") {
    atomic_write(path, tsm_to_csv(tsm));
  } else if (format == "pgm") {
    atomic_write(path, tsm_to_pgm(tsm));
  } else {
    throw ConfigError("unsupported heatmap format '" + format + "' (use csv or pgm)");
  }
}

std::string decay_to_csv(const DecayCurve& curve) {
  std::string out = "d,mean,count\n";
  char buf[64];
  for (int d = 1; d <= curve.d_max(); ++d) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%lld\n", d, curve.mean[d - 1], curve.count[d - 1]);
    out += buf;
  }
  return out;
}

std::string probe_to_csv(const ProbeResult& result) {
  std::string out = "epoch,test_acc\n";
  char buf[64];
  for (std::size_t e = 0; e < result.test_curve.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, result.test_curve[e]);
    out += buf;
  }
  return out;
}

}  // namespace sola
