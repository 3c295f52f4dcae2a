#include "sola/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <vector>

#include "sola/errors.hpp"

namespace sola {

void MatchConfig::validate() const {
  if (!(K > 0)) throw ConfigError("K must be positive");
  if (step_s < 1) throw ConfigError("step size must be at least 1");
}

double target_similarity(double d, double K) {
  if (!(d > 0)) throw DomainError("target similarity is undefined for interval d <= 0");
  if (!(K > 0)) throw DomainError("K must be positive");
  return 1.0 / (1.0 + std::exp(-K / (d * d)));
}

Mat gather(const Mat& z, int s, GatherMode mode) {
  if (s < 1) throw ShapeError("step size must be at least 1");
  if (z.rows() < s) {
    throw ShapeError("cannot gather " + std::to_string(z.rows()) + " rows with step " +
                     std::to_string(s));
  }
  const Eigen::Index n = z.rows() / s;
  Mat out(n, z.cols());
  for (Eigen::Index g = 0; g < n; ++g) {
    if (mode == GatherMode::strided) {
      out.row(g) = z.row(g * s);
    } else {
      out.row(g) = z.middleRows(g * s, s).colwise().mean();
    }
  }
  return out;
}

double rescaled_cosine(const Eigen::Ref<const RowVec>& u, const Eigen::Ref<const RowVec>& v) {
  const double c = u.dot(v) / ((u.norm() + kCosineEps) * (v.norm() + kCosineEps));
  return std::clamp(0.5 * (c + 1.0), 0.0, 1.0);
}

Tsm build_target_tsm(int n, const MatchConfig& cfg) {
  if (n < 2) throw ShapeError("target TSM needs at least 2 positions");
  cfg.validate();
  Tsm t;
  t.values.resize(n, n);
  t.range = {0.5, 1.0};
  t.diagonal_defined = false;
  for (int i = 0; i < n; ++i) {
    t.values(i, i) = std::numeric_limits<double>::quiet_NaN();
    for (int j = i + 1; j < n; ++j) {
      const double v = target_similarity(static_cast<double>(cfg.step_s) * (j - i), cfg.K);
      t.values(i, j) = v;
      t.values(j, i) = v;
    }
  }
  return t;
}

Tsm predicted_tsm(const Mat& gathered, const ParamTensors& params) {
  if (gathered.rows() < 2) throw ShapeError("predicted TSM needs at least 2 positions");
  const Mat projected = proj_forward(params, gathered);
  const Eigen::Index n = gathered.rows();
  Tsm t;
  t.values.resize(n, n);
  t.range = {0.0, 1.0};
  t.diagonal_defined = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      t.values(i, j) = i == j ? std::numeric_limits<double>::quiet_NaN()
                              : rescaled_cosine(gathered.row(i), projected.row(j));
    }
  }
  return t;
}

namespace {

void require_same_shape(const Tsm& a, const Tsm& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("TSM shapes differ: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log(1 - p);
  return h;
}

}  // namespace

double sm_loss(const Tsm& target, const Tsm& pred) {
  require_same_shape(target, pred);
  double total = 0.0;
  long long count = 0;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      if (!target.counted(i, j) || !pred.counted(i, j)) continue;
      const double lam = target.values(i, j);
      const double p = std::clamp(pred.values(i, j), kProbClamp, 1.0 - kProbClamp);
      total += -lam * std::log(p) - (1.0 - lam) * std::log(1.0 - p);
      ++count;
    }
  }
  if (count == 0) throw ShapeError("no positions to compare");
  return total / static_cast<double>(count);
}

double mean_entropy(const Tsm& target) {
  double total = 0.0;
  long long count = 0;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      if (!target.counted(i, j)) continue;
      total += binary_entropy(target.values(i, j));
      ++count;
    }
  }
  if (count == 0) throw ShapeError("no positions to reduce");
  return total / static_cast<double>(count);
}

double tsm_distance(const Tsm& a, const Tsm& b) {
  require_same_shape(a, b);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (!a.counted(i, j) || !b.counted(i, j)) continue;
      const double d = a.values(i, j) - b.values(i, j);
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

std::string tsm_to_csv(const Tsm& tsm) {
  std::string out;
  char buf[32];
  for (Eigen::Index i = 0; i < tsm.rows(); ++i) {
    for (Eigen::Index j = 0; j < tsm.cols(); ++j) {
      if (j > 0) out.push_back(',');
      if (!tsm.counted(i, j)) continue;
      std::snprintf(buf, sizeof buf, "%.9g", tsm.values(i, j));
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

Tsm tsm_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  bool has_empty = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const std::string field = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                              : comma - start);
      if (field.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        has_empty = true;
      } else {
        try {
          row.push_back(std::stod(field));
        } catch (const std::logic_error&) {
          throw FormatError("bad TSM CSV field '" + field + "'");
        }
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw FormatError("ragged TSM CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty TSM CSV");

  Tsm t;
  t.values.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const bool empty = std::isnan(rows[i][j]);
      if (empty && i != j) throw FormatError("empty TSM CSV field off the diagonal");
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  t.diagonal_defined = !has_empty;
  return t;
}

std::string tsm_to_pgm(const Tsm& tsm) {
  std::string out = "P5\n" + std::to_string(tsm.cols()) + " " + std::to_string(tsm.rows()) +
                    "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(tsm.values.size()));
  for (Eigen::Index i = 0; i < tsm.rows(); ++i) {
    for (Eigen::Index j = 0; j < tsm.cols(); ++j) {
      long px = 0;
      if (tsm.counted(i, j)) px = std::lround(255.0 * std::clamp(tsm.values(i, j), 0.0, 1.0));
      out.push_back(static_cast<char>(static_cast<unsigned char>(px)));
    }
  }
  return out;
}

}  // namespace sola
