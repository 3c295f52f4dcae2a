#include "sola/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sola/errors.hpp"
#include "sola/parallel.hpp"

namespace sola {

void TrainConfig::validate() const {
  model.validate();
  match.validate();
  if (window_len < 2 * match.step_s) {
    throw ConfigError("window_len must be at least 2 * step_s");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
}

namespace {

// Activations of one window kept for the backward pass.
struct Forward {
  Mat pre1;       // conv1 output before relu, W x h
  Mat hidden;     // relu(pre1)
  Mat gathered;   // n x m
  Mat proj_pre;   // gathered * W1 + b1
  Mat proj_hid;   // relu(proj_pre)
  Mat projected;  // n x m
};

Forward run_forward(const SolaParams& params, const Mat& window, const MatchConfig& match) {
  Forward f;
  f.pre1 = conv1d_same(window, params.conv1_w, params.conv1_b);
  f.hidden = f.pre1.cwiseMax(0.0);
  Mat z = conv1d_same(f.hidden, params.conv2_w, params.conv2_b);
  if (params.residual_enabled) z += window;
  f.gathered = gather(z, match.step_s, match.gather_mode);
  f.proj_pre = f.gathered * params.proj1_w;
  f.proj_pre.rowwise() += params.proj1_b.transpose();
  f.proj_hid = f.proj_pre.cwiseMax(0.0);
  f.projected = f.proj_hid * params.proj2_w;
  f.projected.rowwise() += params.proj2_b.transpose();
  return f;
}

void check_window(const Mat& w, const TrainConfig& cfg) {
  if (w.rows() != cfg.window_len || w.cols() != cfg.model.dim_m) {
    throw ShapeError("window is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                     ", expected " + std::to_string(cfg.window_len) + "x" +
                     std::to_string(cfg.model.dim_m));
  }
}

// Accumulates the conv gradients for y = conv1d_same(x, weight, bias) given
// dy; adds the input gradient into dx when requested.
void conv_backward(const Mat& x, const ConvWeight& weight, const Mat& dy, ConvWeight& dweight,
                   Vec& dbias, Mat* dx) {
  const Eigen::Index len = x.rows();
  const int k = weight.kernel();
  const int half = (k - 1) / 2;
  dbias += dy.colwise().sum().transpose();
  for (int j = 0; j < k; ++j) {
    const int off = j - half;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -off);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - off);
    if (t1 <= t0) continue;
    const Eigen::Index n = t1 - t0;
    dweight.taps[j].noalias() += x.middleRows(t0 + off, n).transpose() * dy.middleRows(t0, n);
    if (dx) dx->middleRows(t0 + off, n).noalias() += dy.middleRows(t0, n) * weight.taps[j].transpose();
  }
}

struct WindowResult {
  double loss = 0.0;
  GradientSet grads;
};

WindowResult window_loss_grad(const SolaParams& params, const Mat& window, const Tsm& target,
                              const TrainConfig& cfg, double scale) {
  const Forward f = run_forward(params, window, cfg.match);
  const Mat& g = f.gathered;
  const Mat& p = f.projected;
  const Eigen::Index n = g.rows();

  const Vec g_norm = g.rowwise().norm();
  const Vec p_norm = p.rowwise().norm();
  const Vec g_pad = g_norm.array() + kCosineEps;
  const Vec p_pad = p_norm.array() + kCosineEps;
  const Mat dots = g * p.transpose();

  // dL/dc for each counted pair, with c the raw cosine; q = dL/dc / (|g_i| |p_j|)
  // using the padded norms.
  Mat q = Mat::Zero(n, n);
  double loss = 0.0;
  const double count = static_cast<double>(n * (n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double denom = g_pad[i] * p_pad[j];
      const double raw = 0.5 * (dots(i, j) / denom + 1.0);
      const double prob = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
      const double lam = target.values(i, j);
      loss += -lam * std::log(prob) - (1.0 - lam) * std::log(1.0 - prob);
      if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;  // flat under the clamp
      const double dprob = (-lam / prob + (1.0 - lam) / (1.0 - prob)) * scale / count;
      q(i, j) = 0.5 * dprob / denom;
    }
  }

  WindowResult out;
  out.loss = loss / count;
  out.grads = ParamTensors::zeros_like(params);
  GradientSet& gr = out.grads;

  const Mat qd = q.cwiseProduct(dots);
  // Projected side: d c_ij / d p_j = g_i / (|g_i||p_j|) - c_ij p_j / (|p_j| (|p_j|+eps)).
  Mat dp = q.transpose() * g;
  const Vec col_terms = qd.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p_norm[j] > 0) dp.row(j) -= (col_terms[j] / (p_pad[j] * p_norm[j])) * p.row(j);
  }

  Mat dg = Mat::Zero(n, g.cols());
  if (!cfg.stop_gradient_plain_branch) {
    dg = q * p;
    const Vec row_terms = qd.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (g_norm[i] > 0) dg.row(i) -= (row_terms[i] / (g_pad[i] * g_norm[i])) * g.row(i);
    }
  }

  // Projector.
  gr.proj2_w.noalias() = f.proj_hid.transpose() * dp;
  gr.proj2_b = dp.colwise().sum().transpose();
  Mat dproj_pre = dp * params.proj2_w.transpose();
  dproj_pre = dproj_pre.cwiseProduct((f.proj_pre.array() > 0.0).cast<double>().matrix());
  gr.proj1_w.noalias() = g.transpose() * dproj_pre;
  gr.proj1_b = dproj_pre.colwise().sum().transpose();
  dg.noalias() += dproj_pre * params.proj1_w.transpose();

  // Gather.
  const int s = cfg.match.step_s;
  Mat dz = Mat::Zero(window.rows(), window.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    if (cfg.match.gather_mode == GatherMode::strided) {
      dz.row(r * s) = dg.row(r);
    } else {
      for (int o = 0; o < s; ++o) dz.row(r * s + o) = dg.row(r) / s;
    }
  }

  // Refinement stack; the residual path carries no parameters.
  Mat dhidden = Mat::Zero(f.hidden.rows(), f.hidden.cols());
  conv_backward(f.hidden, params.conv2_w, dz, gr.conv2_w, gr.conv2_b, &dhidden);
  const Mat dpre1 = dhidden.cwiseProduct((f.pre1.array() > 0.0).cast<double>().matrix());
  conv_backward(window, params.conv1_w, dpre1, gr.conv1_w, gr.conv1_b, nullptr);
  return out;
}

double window_split_loss(const SolaParams& plain, const SolaParams& projected, const Mat& window,
                         const Tsm& target, const MatchConfig& match) {
  const Mat g_plain = gather(sola_forward(plain, window), match.step_s, match.gather_mode);
  const Mat g_proj = gather(sola_forward(projected, window), match.step_s, match.gather_mode);
  const Mat p = proj_forward(projected, g_proj);
  Tsm pred;
  pred.values.resize(g_plain.rows(), g_plain.rows());
  pred.diagonal_defined = false;
  for (Eigen::Index i = 0; i < g_plain.rows(); ++i) {
    for (Eigen::Index j = 0; j < g_plain.rows(); ++j) {
      pred.values(i, j) = i == j ? std::numeric_limits<double>::quiet_NaN()
                                 : rescaled_cosine(g_plain.row(i), p.row(j));
    }
  }
  return sm_loss(target, pred);
}

int gathered_length(const TrainConfig& cfg) { return cfg.window_len / cfg.match.step_s; }

void add_into(ParamTensors& acc, const ParamTensors& x) {
  std::vector<std::span<const double>> src;
  x.for_each_tensor(ParamTensors::ConstVisitor(
      [&](const std::string&, const std::vector<int>&, std::span<const double> v) {
        src.push_back(v);
      }));
  std::size_t idx = 0;
  acc.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string&, const std::vector<int>&, std::span<double> v) {
        const auto& s = src[idx++];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += s[i];
      }));
}

}  // namespace

double split_branch_loss(const SolaParams& plain, const SolaParams& projected,
                         const std::vector<Mat>& windows, const TrainConfig& cfg) {
  if (windows.empty()) throw ShapeError("empty batch");
  const Tsm target = build_target_tsm(gathered_length(cfg), cfg.match);
  std::vector<double> losses(windows.size());
  parallel_for(windows.size(), [&](std::size_t b) {
    check_window(windows[b], cfg);
    losses[b] = window_split_loss(plain, projected, windows[b], target, cfg.match);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(windows.size());
}

double batch_loss(const SolaParams& params, const std::vector<Mat>& windows,
                  const TrainConfig& cfg) {
  return split_branch_loss(params, params, windows, cfg);
}

LossAndGrad loss_and_grad(const SolaParams& params, const std::vector<Mat>& windows,
                          const TrainConfig& cfg) {
  if (windows.empty()) throw ShapeError("empty batch");
  const Tsm target = build_target_tsm(gathered_length(cfg), cfg.match);
  const double scale = 1.0 / static_cast<double>(windows.size());
  std::vector<WindowResult> parts(windows.size());
  parallel_for(windows.size(), [&](std::size_t b) {
    check_window(windows[b], cfg);
    parts[b] = window_loss_grad(params, windows[b], target, cfg, scale);
  });

  LossAndGrad out;
  out.grads = ParamTensors::zeros_like(params);
  for (const auto& part : parts) {
    out.loss += part.loss;
    add_into(out.grads, part.grads);
  }
  out.loss *= scale;

  if (!std::isfinite(out.loss)) throw NumericsError("non-finite value in tensor 'loss'");
  out.grads.for_each_tensor(ParamTensors::ConstVisitor(
      [](const std::string& name, const std::vector<int>&, std::span<const double> v) {
        for (double x : v) {
          if (!std::isfinite(x)) throw NumericsError("non-finite value in gradient of '" + name + "'");
        }
      }));
  return out;
}

GradientSet finite_diff_grad(const SolaParams& params, const std::vector<Mat>& windows,
                             const TrainConfig& cfg, double h_fd) {
  if (!(h_fd > 0)) throw DomainError("finite-difference step must be positive");
  GradientSet grads = ParamTensors::zeros_like(params);
  SolaParams probe = params;

  // Flat views of the probe parameters and the output, visited in the same order.
  std::vector<std::span<double>> probe_views, grad_views;
  probe.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string&, const std::vector<int>&, std::span<double> v) {
        probe_views.push_back(v);
      }));
  grads.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string&, const std::vector<int>&, std::span<double> v) {
        grad_views.push_back(v);
      }));

  auto loss_at = [&]() {
    return cfg.stop_gradient_plain_branch ? split_branch_loss(params, probe, windows, cfg)
                                          : batch_loss(probe, windows, cfg);
  };
  for (std::size_t t = 0; t < probe_views.size(); ++t) {
    for (std::size_t i = 0; i < probe_views[t].size(); ++i) {
      const double saved = probe_views[t][i];
      probe_views[t][i] = saved + h_fd;
      const double up = loss_at();
      probe_views[t][i] = saved - h_fd;
      const double down = loss_at();
      probe_views[t][i] = saved;
      grad_views[t][i] = (up - down) / (2.0 * h_fd);
    }
  }
  return grads;
}

double max_relative_error(const GradientSet& a, const GradientSet& b) {
  std::vector<std::span<const double>> bv;
  b.for_each_tensor(ParamTensors::ConstVisitor(
      [&](const std::string&, const std::vector<int>&, std::span<const double> v) {
        bv.push_back(v);
      }));
  double worst = 0.0;
  std::size_t idx = 0;
  a.for_each_tensor(ParamTensors::ConstVisitor(
      [&](const std::string&, const std::vector<int>&, std::span<const double> v) {
        const auto& w = bv.at(idx++);
        if (w.size() != v.size()) throw ShapeError("gradient sets are not congruent");
        for (std::size_t i = 0; i < v.size(); ++i) {
          const double rel = std::abs(v[i] - w[i]) / std::max(1e-8, std::abs(v[i]) + std::abs(w[i]));
          worst = std::max(worst, rel);
        }
      }));
  return worst;
}

// ---------------------------------------------------------------------------

AdamState AdamState::zeros_like(const ParamTensors& params) {
  return AdamState{ParamTensors::zeros_like(params), ParamTensors::zeros_like(params)};
}

void adam_step(SolaParams& params, const GradientSet& grads, AdamState& state,
               const TrainConfig& cfg, long long step) {
  if (step < 1) throw DomainError("Adam step index starts at 1");
  std::vector<std::span<const double>> gv;
  std::vector<std::span<double>> mv, vv;
  grads.for_each_tensor(ParamTensors::ConstVisitor(
      [&](const std::string&, const std::vector<int>&, std::span<const double> v) { gv.push_back(v); }));
  state.first_moment.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string&, const std::vector<int>&, std::span<double> v) { mv.push_back(v); }));
  state.second_moment.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string&, const std::vector<int>&, std::span<double> v) { vv.push_back(v); }));

  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  std::size_t t = 0;
  params.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string& name, const std::vector<int>&, std::span<double> p) {
        if (gv.at(t).size() != p.size() || mv.at(t).size() != p.size()) {
          throw ShapeError("Adam state is not congruent with '" + name + "'");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double g = gv[t][i];
          double& m = mv[t][i];
          double& v = vv[t][i];
          m = b1 * m + (1.0 - b1) * g;
          v = b2 * v + (1.0 - b2) * g * g;
          p[i] -= cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
        }
        ++t;
      }));
}

// ---------------------------------------------------------------------------

Tsm average_predicted_tsm(const SolaParams& params, const std::vector<Mat>& windows,
                          const TrainConfig& cfg) {
  if (windows.empty()) throw ShapeError("empty batch");
  std::vector<Tsm> each(windows.size());
  parallel_for(windows.size(), [&](std::size_t b) {
    check_window(windows[b], cfg);
    const Mat g = gather(sola_forward(params, windows[b]), cfg.match.step_s, cfg.match.gather_mode);
    each[b] = predicted_tsm(g, params);
  });
  Tsm avg = each.front();
  for (std::size_t b = 1; b < each.size(); ++b) avg.values += each[b].values;
  avg.values /= static_cast<double>(each.size());
  return avg;
}

std::vector<const FeatureSequence*> eligible_videos(const std::vector<FeatureSequence>& corpus,
                                                    int window_len) {
  std::vector<const FeatureSequence*> out;
  for (const auto& seq : corpus) {
    if (seq.length() >= window_len) out.push_back(&seq);
  }
  return out;
}

long long steps_per_epoch(const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg) {
  long long windows = 0;
  for (const auto* seq : eligible_videos(corpus, cfg.window_len)) windows += seq->length() - cfg.window_len + 1;
  return (windows + cfg.batch_size - 1) / cfg.batch_size;
}

std::vector<Mat> sample_batch(const std::vector<const FeatureSequence*>& videos,
                              const TrainConfig& cfg, std::mt19937_64& rng) {
  if (videos.empty()) throw ConfigError("no video is long enough for the window length");
  std::uniform_int_distribution<std::size_t> pick(0, videos.size() - 1);
  std::vector<Mat> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    batch.push_back(sample_window(*videos[pick(rng)], cfg.window_len, rng).data);
  }
  return batch;
}

TrainResult train(const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg) {
  cfg.validate();
  return train(corpus, cfg, init_params(cfg.model, cfg.seed));
}

TrainResult train(const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg,
                  SolaParams initial) {
  cfg.validate();
  if (!(initial.config() == cfg.model)) throw ConfigError("initial parameters do not match the model config");
  TrainResult result{std::move(initial), {}};
  if (cfg.epochs == 0) return result;

  const auto videos = eligible_videos(corpus, cfg.window_len);
  if (videos.empty()) {
    throw ConfigError("no video has at least " + std::to_string(cfg.window_len) + " snippets");
  }
  for (const auto* v : videos) {
    if (v->dim() != cfg.model.dim_m) throw ShapeError("video '" + v->video_id + "' has the wrong feature dim");
  }

  // Separate streams for training batches and the fixed monitoring batch.
  std::seed_seq train_seq{cfg.seed, std::uint64_t{0x5a}};
  std::seed_seq monitor_seq{cfg.seed, std::uint64_t{0xa5}};
  std::mt19937_64 rng(train_seq);
  std::mt19937_64 monitor_rng(monitor_seq);
  const std::vector<Mat> monitor = sample_batch(videos, cfg, monitor_rng);
  const Tsm target = build_target_tsm(gathered_length(cfg), cfg.match);

  TrainHistory& h = result.history;
  h.initial_tsm_distance = tsm_distance(average_predicted_tsm(result.params, monitor, cfg), target);

  AdamState state = AdamState::zeros_like(result.params);
  const long long per_epoch = steps_per_epoch(corpus, cfg);
  long long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (long long s = 0; s < per_epoch; ++s) {
      const std::vector<Mat> batch = sample_batch(videos, cfg, rng);
      const LossAndGrad lg = loss_and_grad(result.params, batch, cfg);
      adam_step(result.params, lg.grads, state, cfg, ++step);
      h.step_loss.push_back(lg.loss);
      h.step_epoch.push_back(epoch);
      sum += lg.loss;
    }
    h.epoch_mean_loss.push_back(sum / static_cast<double>(per_epoch));
    h.epoch_tsm_distance.push_back(tsm_distance(average_predicted_tsm(result.params, monitor, cfg), target));
  }
  return result;
}

std::string history_to_csv(const TrainHistory& history) {
  std::string out = "step,loss,epoch,avg_tsm_distance\n";
  char buf[64];
  if (history.step_loss.empty()) return out;
  std::snprintf(buf, sizeof buf, "0,,0,%.17g\n", history.initial_tsm_distance);
  out += buf;
  for (std::size_t s = 0; s < history.step_loss.size(); ++s) {
    const int epoch = history.step_epoch[s];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,", s + 1, history.step_loss[s], epoch);
    out += buf;
    const bool last_of_epoch = s + 1 == history.step_loss.size() || history.step_epoch[s + 1] != epoch;
    if (last_of_epoch) {
      std::snprintf(buf, sizeof buf, "%.17g", history.epoch_tsm_distance.at(static_cast<std::size_t>(epoch - 1)));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace sola
