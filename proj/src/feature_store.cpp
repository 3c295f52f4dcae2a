#include "sola/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <sstream>

#include "sola/errors.hpp"

namespace sola {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "array payloads are read and written as raw little-endian bytes");

void validate(const FeatureSequence& seq) {
  if (seq.data.rows() < 1 || seq.data.cols() < 1) {
    throw ShapeError("feature sequence '" + seq.video_id + "' is empty");
  }
  if (!seq.data.allFinite()) {
    throw DataError("feature sequence '" + seq.video_id + "' has non-finite entries");
  }
}

// ---------------------------------------------------------------------------
// NPY

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPreambleLen = kMagicLen + 2 + 2;

struct NpyHeader {
  std::string descr;
  bool fortran_order = false;
  std::vector<long long> shape;
};

NpyHeader parse_header(const std::string& text) {
  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");

  NpyHeader h;
  std::smatch m;
  if (!std::regex_search(text, m, descr_re)) throw FormatError("npy header has no 'descr'");
  h.descr = m[1];
  if (!std::regex_search(text, m, order_re)) throw FormatError("npy header has no 'fortran_order'");
  h.fortran_order = m[1] == "True";
  if (!std::regex_search(text, m, shape_re)) throw FormatError("npy header has no 'shape'");

  std::stringstream dims(m[1]);
  std::string item;
  while (std::getline(dims, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item.substr(first), &used);
      if (v < 0) throw FormatError("negative npy dimension");
      h.shape.push_back(v);
    } catch (const std::logic_error&) {
      throw FormatError("bad npy shape entry '" + item + "'");
    }
  }
  return h;
}

}  // namespace

std::string encode_npy(const MatF& data) {
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                     std::to_string(data.rows()) + ", " + std::to_string(data.cols()) + "), }";
  // Pad with spaces so the payload starts on a 64-byte boundary; '\n' ends it.
  const std::size_t unpadded = kPreambleLen + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');

  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto hlen = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(hlen & 0xff));
  out.push_back(static_cast<char>(hlen >> 8));
  out += dict;
  const auto* raw = reinterpret_cast<const char*>(data.data());
  out.append(raw, raw + sizeof(float) * static_cast<std::size_t>(data.size()));
  return out;
}

MatF decode_npy(const std::string& bytes) {
  if (bytes.size() < kPreambleLen || bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0) {
    throw FormatError("missing npy magic");
  }
  if (bytes[kMagicLen] != '\x01' || bytes[kMagicLen + 1] != '\x00') {
    throw FormatError("unsupported npy version (expected 1.0)");
  }
  const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < kPreambleLen + hlen) throw FormatError("truncated npy header");
  const std::string text = bytes.substr(kPreambleLen, hlen);
  if (text.empty() || text.back() != '\n') throw FormatError("npy header not newline-terminated");

  const NpyHeader h = parse_header(text);
  if (h.fortran_order) throw UnsupportedLayout("Fortran-order arrays are not supported");
  if (h.shape.size() != 2) {
    throw UnsupportedLayout("expected a 2-D array, got " + std::to_string(h.shape.size()) + "-D");
  }
  if (h.descr != "<f4" && h.descr != "<f8") {
    throw UnsupportedLayout("unsupported element type '" + h.descr + "'");
  }

  const auto rows = static_cast<Eigen::Index>(h.shape[0]);
  const auto cols = static_cast<Eigen::Index>(h.shape[1]);
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  const std::size_t width = h.descr == "<f4" ? 4 : 8;
  const std::size_t offset = kPreambleLen + hlen;
  if (bytes.size() - offset != count * width) {
    throw FormatError("npy payload size does not match header shape");
  }

  MatF out(rows, cols);
  const char* payload = bytes.data() + offset;
  if (width == 4) {
    std::memcpy(out.data(), payload, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      std::memcpy(&v, payload + 8 * i, 8);
      out.data()[i] = static_cast<float>(v);
    }
  }
  return out;
}

FeatureSequence load_array_file(const fs::path& path) {
  FeatureSequence seq;
  seq.data = decode_npy(read_file(path));
  seq.video_id = path.stem().string();
  if (!seq.data.allFinite()) {
    throw DataError(path.string() + ": array contains non-finite entries");
  }
  return seq;
}

void save_array_file(const FeatureSequence& seq, const fs::path& path) {
  atomic_write(path, encode_npy(seq.data));
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  if (length_L < 1 || dim_m < 1) throw SpecError("length and dim must be positive");
  if (n_segments < 1) throw SpecError("n_segments must be at least 1");
  if (min_seg_len < 1) throw SpecError("min_seg_len must be at least 1");
  if (static_cast<long long>(n_segments) * min_seg_len > length_L) {
    throw SpecError("n_segments * min_seg_len exceeds length");
  }
  if (video_component_weight < 0 || segment_component_weight < 0 || noise_weight < 0) {
    throw SpecError("component weights must be nonnegative");
  }
  if (video_component_weight == 0 && segment_component_weight == 0 && noise_weight == 0) {
    throw SpecError("component weights are all zero");
  }
  if (!(background_fraction >= 0 && background_fraction <= 1)) {
    throw SpecError("background_fraction must lie in [0, 1]");
  }
}

std::pair<FeatureSequence, SegmentLabels> generate_synthetic(const SyntheticSpec& spec,
                                                             std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int L = spec.length_L;
  const int m = spec.dim_m;
  const int n = spec.n_segments;

  // Random composition of the slack on top of the minimum lengths.
  const int slack = L - n * spec.min_seg_len;
  std::uniform_int_distribution<int> cut(0, slack);
  std::vector<int> cuts(static_cast<std::size_t>(n - 1));
  for (int& c : cuts) c = cut(rng);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(slack);
  std::vector<int> seg_len(static_cast<std::size_t>(n));
  int prev = 0;
  for (int k = 0; k < n; ++k) {
    seg_len[k] = spec.min_seg_len + cuts[k] - prev;
    prev = cuts[k];
  }

  auto draw = [&] {
    Vec v(m);
    for (int i = 0; i < m; ++i) v[i] = gauss(rng);
    return v;
  };
  const Vec g = draw();
  std::vector<Vec> protos;
  protos.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) protos.push_back(draw());

  int n_background = 0;
  if (spec.background_fraction > 0) {
    n_background = std::clamp(static_cast<int>(std::lround(spec.background_fraction * n)), 1, n);
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_background(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n_background; ++i) is_background[order[i]] = true;

  FeatureSequence seq;
  seq.data.resize(L, m);
  seq.video_id = "synthetic";
  SegmentLabels labels;
  labels.label.reserve(static_cast<std::size_t>(L));
  labels.segment_id.reserve(static_cast<std::size_t>(L));

  int t = 0;
  for (int k = 0; k < n; ++k) {
    for (int r = 0; r < seg_len[k]; ++r, ++t) {
      Vec x = spec.video_component_weight * g + spec.segment_component_weight * protos[k];
      if (spec.noise_weight > 0) x += spec.noise_weight * draw();
      const double norm = x.norm();
      if (!(norm > 0)) throw DataError("synthetic row has zero norm");
      seq.data.row(t) = (x / norm).cast<float>().transpose();
      labels.label.push_back(is_background[k] ? SnippetLabel::background
                                              : SnippetLabel::foreground);
      labels.segment_id.push_back(k);
    }
  }
  return {std::move(seq), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Windows

FeatureWindow sample_window(const FeatureSequence& seq, int window_len, std::mt19937_64& rng) {
  if (window_len < 1) throw ShapeError("window length must be positive");
  if (seq.length() < window_len) {
    throw TooShortError("video '" + seq.video_id + "' has " + std::to_string(seq.length()) +
                        " snippets, window needs " + std::to_string(window_len));
  }
  std::uniform_int_distribution<int> pick(0, seq.length() - window_len);
  FeatureWindow w;
  w.start_index = pick(rng);
  w.data = seq.data.middleRows(w.start_index, window_len).cast<double>();
  w.source_video = seq.video_id;
  return w;
}

// ---------------------------------------------------------------------------
// Corpus directories

std::vector<FeatureSequence> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<FeatureSequence> corpus;
  const fs::path list = dir / kVideoListName;
  if (fs::exists(list)) {
    std::istringstream in(read_file(list));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      const std::string name = line.substr(0, tab);
      int alpha = 1;
      if (tab != std::string::npos) {
        try {
          alpha = std::stoi(line.substr(tab + 1));
        } catch (const std::logic_error&) {
          throw FormatError(list.string() + ":" + std::to_string(lineno) + ": bad alpha");
        }
        if (alpha < 1) throw FormatError(list.string() + ":" + std::to_string(lineno) + ": alpha < 1");
      }
      FeatureSequence seq = load_array_file(dir / name);
      seq.snippet_stride_alpha = alpha;
      corpus.push_back(std::move(seq));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".npy") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) corpus.push_back(load_array_file(f));
  }
  return corpus;
}

void save_corpus(const std::vector<FeatureSequence>& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  std::string list = "# filename\talpha\n";
  for (const auto& seq : corpus) {
    const std::string name = seq.video_id + ".npy";
    save_array_file(seq, dir / name);
    list += name + "\t" + std::to_string(seq.snippet_stride_alpha) + "\n";
  }
  atomic_write(dir / kVideoListName, list);
}

void save_labels(const std::vector<std::string>& video_ids,
                 const std::vector<SegmentLabels>& labels, const fs::path& path) {
  if (video_ids.size() != labels.size()) throw ShapeError("one label set per video required");
  std::string out = "video_id,index,label,segment_id\n";
  for (std::size_t v = 0; v < labels.size(); ++v) {
    for (int t = 0; t < labels[v].length(); ++t) {
      out += video_ids[v] + "," + std::to_string(t) + "," +
             (labels[v].label[t] == SnippetLabel::foreground ? "foreground" : "background") + "," +
             std::to_string(labels[v].segment_id[t]) + "\n";
    }
  }
  atomic_write(path, out);
}

std::vector<SegmentLabels> load_labels(const fs::path& path,
                                       const std::vector<FeatureSequence>& corpus) {
  std::map<std::string, SegmentLabels> by_video;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);  // header
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string vid, idx, lab, seg;
    if (!std::getline(row, vid, ',') || !std::getline(row, idx, ',') ||
        !std::getline(row, lab, ',') || !std::getline(row, seg, ',')) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    SegmentLabels& sl = by_video[vid];
    if (std::stoi(idx) != sl.length()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": indices out of order");
    }
    if (lab == "foreground") {
      sl.label.push_back(SnippetLabel::foreground);
    } else if (lab == "background") {
      sl.label.push_back(SnippetLabel::background);
    } else {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown label '" + lab + "'");
    }
    sl.segment_id.push_back(std::stoi(seg));
  }

  std::vector<SegmentLabels> out;
  out.reserve(corpus.size());
  for (const auto& seq : corpus) {
    auto it = by_video.find(seq.video_id);
    if (it == by_video.end()) throw DataError("no labels for video '" + seq.video_id + "'");
    if (it->second.length() != seq.length()) {
      throw DataError("label count for '" + seq.video_id + "' does not match its length");
    }
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

void atomic_write(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw IoError(path.string() + ": write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError(path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sola
