#include "sola/model.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "sola/errors.hpp"
#include "sola/feature_store.hpp"

namespace sola {

void ModelConfig::validate() const {
  if (dim_m < 1 || hidden_h < 1) throw ConfigError("model dims must be positive");
  if (kernel_k % 2 == 0) {
    throw ConfigError("kernel size " + std::to_string(kernel_k) + " is even");
  }
  if (kernel_k < 1 || kernel_k > 7) {
    throw ConfigError("kernel size must be one of 1, 3, 5, 7");
  }
}

ConvWeight ConvWeight::zeros(int k, int c_in, int c_out) {
  ConvWeight w;
  w.taps.assign(static_cast<std::size_t>(k), Mat::Zero(c_in, c_out));
  return w;
}

ParamTensors ParamTensors::zeros_like(const ParamTensors& like) {
  ParamTensors z;
  z.conv1_w = ConvWeight::zeros(like.conv1_w.kernel(), like.conv1_w.in_channels(),
                                like.conv1_w.out_channels());
  z.conv1_b = Vec::Zero(like.conv1_b.size());
  z.conv2_w = ConvWeight::zeros(like.conv2_w.kernel(), like.conv2_w.in_channels(),
                                like.conv2_w.out_channels());
  z.conv2_b = Vec::Zero(like.conv2_b.size());
  z.proj1_w = Mat::Zero(like.proj1_w.rows(), like.proj1_w.cols());
  z.proj1_b = Vec::Zero(like.proj1_b.size());
  z.proj2_w = Mat::Zero(like.proj2_w.rows(), like.proj2_w.cols());
  z.proj2_b = Vec::Zero(like.proj2_b.size());
  return z;
}

namespace {

// Taps are contiguous per tap but not across taps, so each tap is visited as
// its own slice of the k x c_in x c_out tensor.
template <typename Self, typename Fn>
void visit_tensors(Self& self, Fn&& fn) {
  auto conv = [&](const std::string& name, auto& w) {
    const std::vector<int> shape{w.kernel(), w.in_channels(), w.out_channels()};
    for (auto& tap : w.taps) fn(name, shape, tap.data(), static_cast<std::size_t>(tap.size()));
  };
  auto mat = [&](const std::string& name, auto& m) {
    fn(name, std::vector<int>{static_cast<int>(m.rows()), static_cast<int>(m.cols())}, m.data(),
       static_cast<std::size_t>(m.size()));
  };
  auto vec = [&](const std::string& name, auto& v) {
    fn(name, std::vector<int>{static_cast<int>(v.size())}, v.data(),
       static_cast<std::size_t>(v.size()));
  };
  conv("conv1_w", self.conv1_w);
  vec("conv1_b", self.conv1_b);
  conv("conv2_w", self.conv2_w);
  vec("conv2_b", self.conv2_b);
  mat("proj1_w", self.proj1_w);
  vec("proj1_b", self.proj1_b);
  mat("proj2_w", self.proj2_w);
  vec("proj2_b", self.proj2_b);
}

}  // namespace

void ParamTensors::for_each_tensor_mut(const Visitor& fn) {
  visit_tensors(*this, [&](const std::string& name, const std::vector<int>& shape, double* p,
                           std::size_t n) { fn(name, shape, std::span<double>(p, n)); });
}

void ParamTensors::for_each_tensor(const ConstVisitor& fn) const {
  visit_tensors(*this, [&](const std::string& name, const std::vector<int>& shape,
                           const double* p, std::size_t n) {
    fn(name, shape, std::span<const double>(p, n));
  });
}

std::size_t ParamTensors::size() const {
  std::size_t n = 0;
  for_each_tensor(ConstVisitor(
      [&](const std::string&, const std::vector<int>&, std::span<const double> v) {
        n += v.size();
      }));
  return n;
}

bool ParamTensors::all_finite() const {
  bool ok = true;
  for_each_tensor(ConstVisitor(
      [&](const std::string&, const std::vector<int>&, std::span<const double> v) {
        for (double x : v) ok = ok && std::isfinite(x);
      }));
  return ok;
}

ModelConfig SolaParams::config() const {
  return ModelConfig{conv1_w.in_channels(), conv1_w.out_channels(), conv1_w.kernel(),
                     residual_enabled};
}

SolaParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int k = cfg.kernel_k;
  const int m = cfg.dim_m;
  const int h = cfg.hidden_h;
  std::mt19937_64 rng(seed);

  auto fill = [&](Mat& w, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  };

  SolaParams p;
  p.residual_enabled = cfg.residual_enabled;
  p.conv1_w = ConvWeight::zeros(k, m, h);
  for (Mat& tap : p.conv1_w.taps) fill(tap, k * m);
  p.conv1_b = Vec::Zero(h);
  p.conv2_w = ConvWeight::zeros(k, h, m);
  for (Mat& tap : p.conv2_w.taps) fill(tap, k * h);
  p.conv2_b = Vec::Zero(m);
  p.proj1_w = Mat::Zero(m, m);
  fill(p.proj1_w, m);
  p.proj1_b = Vec::Zero(m);
  p.proj2_w = Mat::Zero(m, m);
  fill(p.proj2_w, m);
  p.proj2_b = Vec::Zero(m);
  return p;
}

Mat conv1d_same(const Mat& x, const ConvWeight& weight, const Vec& bias) {
  const int k = weight.kernel();
  if (k < 1 || k % 2 == 0) throw ShapeError("convolution kernel must have odd size");
  if (x.cols() != weight.in_channels()) {
    throw ShapeError("convolution input has " + std::to_string(x.cols()) + " channels, kernel expects " +
                     std::to_string(weight.in_channels()));
  }
  if (bias.size() != weight.out_channels()) throw ShapeError("convolution bias size mismatch");

  const Eigen::Index len = x.rows();
  const int half = (k - 1) / 2;
  Mat y = bias.transpose().replicate(len, 1);
  for (int j = 0; j < k; ++j) {
    const int off = j - half;
    // Output rows t with 0 <= t + off < len.
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -off);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - off);
    if (t1 <= t0) continue;
    y.middleRows(t0, t1 - t0).noalias() += x.middleRows(t0 + off, t1 - t0) * weight.taps[j];
  }
  return y;
}

Mat sola_forward(const SolaParams& params, const Mat& window) {
  if (window.cols() != params.conv1_w.in_channels()) {
    throw ShapeError("window width " + std::to_string(window.cols()) +
                     " does not match model dim " + std::to_string(params.conv1_w.in_channels()));
  }
  const Mat hidden = conv1d_same(window, params.conv1_w, params.conv1_b).cwiseMax(0.0);
  Mat z = conv1d_same(hidden, params.conv2_w, params.conv2_b);
  if (params.residual_enabled) z += window;
  return z;
}

Mat proj_forward(const ParamTensors& params, const Mat& z) {
  if (z.cols() != params.proj1_w.rows()) throw ShapeError("projector input width mismatch");
  Mat u = z * params.proj1_w;
  u.rowwise() += params.proj1_b.transpose();
  Mat out = u.cwiseMax(0.0) * params.proj2_w;
  out.rowwise() += params.proj2_b.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string encode_checkpoint(const SolaParams& params) {
  const ModelConfig cfg = params.config();
  std::string out = "SOLA1 " + std::to_string(cfg.kernel_k) + " " + std::to_string(cfg.hidden_h) +
                    " " + std::to_string(cfg.dim_m) + " " + (cfg.residual_enabled ? "1" : "0") +
                    "\n";
  std::string pending;
  params.for_each_tensor(ParamTensors::ConstVisitor(
      [&](const std::string& name, const std::vector<int>& shape, std::span<const double> v) {
        // Conv tensors arrive one tap at a time; write the record line once.
        if (name != pending) {
          out += name + " " + std::to_string(shape.size());
          for (int d : shape) out += " " + std::to_string(d);
          out += "\n";
          pending = name;
        }
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
      }));
  return out;
}

SolaParams decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("checkpoint truncated");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  std::istringstream header(next_line());
  std::string magic;
  ModelConfig cfg;
  int residual = -1;
  if (!(header >> magic >> cfg.kernel_k >> cfg.hidden_h >> cfg.dim_m >> residual) ||
      magic != "SOLA1" || (residual != 0 && residual != 1)) {
    throw FormatError("bad checkpoint header");
  }
  cfg.residual_enabled = residual == 1;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  SolaParams p = init_params(cfg, 0);
  std::string current;
  p.for_each_tensor_mut(ParamTensors::Visitor(
      [&](const std::string& name, const std::vector<int>& shape, std::span<double> v) {
        if (name != current) {
          std::istringstream rec(next_line());
          std::string got;
          std::size_t rank = 0;
          rec >> got >> rank;
          if (!rec || got != name) throw FormatError("expected tensor '" + name + "', found '" + got + "'");
          std::vector<int> dims(rank);
          for (int& d : dims) rec >> d;
          if (!rec || dims != shape) {
            throw FormatError("tensor '" + name + "' shape does not match the header");
          }
          current = name;
        }
        const std::size_t n = v.size() * sizeof(double);
        if (bytes.size() - pos < n) throw FormatError("checkpoint payload truncated");
        std::memcpy(v.data(), bytes.data() + pos, n);
        pos += n;
      }));
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint payload");
  if (!p.all_finite()) throw FormatError("checkpoint holds non-finite parameters");
  return p;
}

void save_checkpoint(const SolaParams& params, const std::filesystem::path& path) {
  atomic_write(path, encode_checkpoint(params));
}

SolaParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

SolaParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  SolaParams p = load_checkpoint(path);
  const ModelConfig got = p.config();
  if (!(got == expected)) {
    throw ConfigError("checkpoint config (k=" + std::to_string(got.kernel_k) +
                      ", h=" + std::to_string(got.hidden_h) + ", m=" + std::to_string(got.dim_m) +
                      ") does not match expected (k=" + std::to_string(expected.kernel_k) +
                      ", h=" + std::to_string(expected.hidden_h) +
                      ", m=" + std::to_string(expected.dim_m) + ")");
  }
  return p;
}

}  // namespace sola
