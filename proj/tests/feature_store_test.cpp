#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "sola/errors.hpp"
#include "sola/evaluation.hpp"
#include "sola/feature_store.hpp"
#include "test_support.hpp"

using namespace sola;
using sola::testing::TempDir;

namespace {

// Builds an NPY v1.0 file by hand so the reader is not checked against the writer.
std::string handmade_npy(const std::string& dict, const std::string& payload) {
  std::string header = dict;
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(static_cast<char>(header.size() & 0xff));
  out.push_back(static_cast<char>(header.size() >> 8));
  return out + header + payload;
}

template <typename T>
std::string raw(std::initializer_list<T> values) {
  std::string out;
  for (T v : values) out.append(reinterpret_cast<const char*>(&v), sizeof(T));
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("load_array_file reads a float32 C-order matrix") {
  TempDir dir;
  const auto bytes = handmade_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }",
                                   raw<float>({1, 2, 3, 4}));
  write_bytes(dir / "a.npy", bytes);
  const FeatureSequence seq = load_array_file(dir / "a.npy");
  CHECK(seq.length() == 2);
  CHECK(seq.dim() == 2);
  CHECK(seq.data(0, 0) == 1.0f);
  CHECK(seq.data(0, 1) == 2.0f);
  CHECK(seq.data(1, 0) == 3.0f);
  CHECK(seq.data(1, 1) == 4.0f);
  CHECK(seq.video_id == "a");

  SUBCASE("save of a loaded file is byte-identical") {
    save_array_file(seq, dir / "b.npy");
    CHECK(read_file(dir / "b.npy") == bytes);
  }
}

TEST_CASE("float64 input is narrowed with round-to-nearest") {
  TempDir dir;
  const double v = 0.1;  // not representable in float
  write_bytes(dir / "d.npy", handmade_npy("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 2), }",
                                          raw<double>({v, -3.5})));
  const FeatureSequence seq = load_array_file(dir / "d.npy");
  CHECK(seq.data(0, 0) == static_cast<float>(v));
  CHECK(seq.data(0, 1) == -3.5f);
}

TEST_CASE("load_array_file rejects bad containers") {
  TempDir dir;
  SUBCASE("1-D shape") {
    write_bytes(dir / "x.npy", handmade_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (5,), }",
                                            raw<float>({1, 2, 3, 4, 5})));
    CHECK_THROWS_AS(load_array_file(dir / "x.npy"), UnsupportedLayout);
  }
  SUBCASE("Fortran order") {
    write_bytes(dir / "x.npy", handmade_npy("{'descr': '<f4', 'fortran_order': True, 'shape': (2, 2), }",
                                            raw<float>({1, 2, 3, 4})));
    CHECK_THROWS_AS(load_array_file(dir / "x.npy"), UnsupportedLayout);
  }
  SUBCASE("integer dtype") {
    write_bytes(dir / "x.npy", handmade_npy("{'descr': '<i4', 'fortran_order': False, 'shape': (1, 1), }",
                                            raw<int>({7})));
    CHECK_THROWS_AS(load_array_file(dir / "x.npy"), UnsupportedLayout);
  }
  SUBCASE("bad magic") {
    write_bytes(dir / "x.npy", "NOTNUMPY-garbage-garbage");
    CHECK_THROWS_AS(load_array_file(dir / "x.npy"), FormatError);
  }
  SUBCASE("truncated payload") {
    write_bytes(dir / "x.npy", handmade_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }",
                                            raw<float>({1, 2, 3})));
    CHECK_THROWS_AS(load_array_file(dir / "x.npy"), FormatError);
  }
  SUBCASE("non-finite entries") {
    write_bytes(dir / "x.npy", handmade_npy("{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }",
                                            raw<float>({1, NAN})));
    CHECK_THROWS_AS(load_array_file(dir / "x.npy"), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_array_file(dir / "nope.npy"), IoError); }
}

TEST_CASE("save_array_file header and errors") {
  TempDir dir;
  FeatureSequence zeros;
  zeros.data = MatF::Zero(3, 4);
  save_array_file(zeros, dir / "z.npy");
  const std::string bytes = read_file(dir / "z.npy");
  CHECK(bytes.find("'shape': (3, 4)") != std::string::npos);
  CHECK((bytes.size() - 3 * 4 * 4) % 64 == 0);  // payload aligned
  CHECK(std::filesystem::exists(dir / "z.npy.tmp") == false);

  CHECK_THROWS_AS(save_array_file(zeros, dir / "no" / "such" / "dir.npy"), IoError);
}

TEST_CASE("array-file round trip is bit-exact on random matrices") {
  TempDir dir;
  std::mt19937_64 rng(11);
  std::normal_distribution<float> g(0.0f, 10.0f);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureSequence seq;
    seq.data.resize(1 + trial % 7, 1 + (trial * 5) % 16);
    for (Eigen::Index i = 0; i < seq.data.size(); ++i) seq.data.data()[i] = g(rng);
    save_array_file(seq, dir / "r.npy");
    const FeatureSequence back = load_array_file(dir / "r.npy");
    REQUIRE(back.data.rows() == seq.data.rows());
    REQUIRE(back.data.cols() == seq.data.cols());
    CHECK(std::memcmp(back.data.data(), seq.data.data(), sizeof(float) * seq.data.size()) == 0);
  }
}

TEST_CASE("generate_synthetic contract") {
  SyntheticSpec spec;
  spec.length_L = 120;
  spec.dim_m = 16;
  spec.n_segments = 5;
  spec.min_seg_len = 6;

  const auto [seq, labels] = generate_synthetic(spec, 3);
  REQUIRE(seq.length() == 120);
  REQUIRE(labels.length() == 120);
  for (int t = 0; t < seq.length(); ++t) CHECK(seq.data.row(t).cast<double>().norm() == doctest::Approx(1.0).epsilon(1e-5));

  // Contiguous segments with the minimum length, labels constant within each.
  std::vector<int> lengths(5, 0);
  for (int t = 0; t < 120; ++t) {
    if (t > 0) CHECK(labels.segment_id[t] >= labels.segment_id[t - 1]);
    ++lengths.at(labels.segment_id[t]);
    if (t > 0 && labels.segment_id[t] == labels.segment_id[t - 1]) CHECK(labels.label[t] == labels.label[t - 1]);
  }
  for (int len : lengths) CHECK(len >= 6);

  std::set<int> background;
  for (int t = 0; t < 120; ++t) {
    if (labels.label[t] == SnippetLabel::background) background.insert(labels.segment_id[t]);
  }
  CHECK(background.size() == 3);  // round(0.5 * 5) rounds half away from zero

  SUBCASE("deterministic") {
    const auto [again, again_labels] = generate_synthetic(spec, 3);
    CHECK(again.data == seq.data);
    CHECK(again_labels.segment_id == labels.segment_id);
    const auto [other, other_labels] = generate_synthetic(spec, 4);
    CHECK(other.data != seq.data);
  }
}

TEST_CASE("background count is clamped to at least one") {
  SyntheticSpec spec;
  spec.length_L = 40;
  spec.dim_m = 4;
  spec.n_segments = 4;
  spec.min_seg_len = 2;
  spec.background_fraction = 0.05;
  const auto [seq, labels] = generate_synthetic(spec, 1);
  std::set<int> background;
  for (int t = 0; t < 40; ++t) {
    if (labels.label[t] == SnippetLabel::background) background.insert(labels.segment_id[t]);
  }
  CHECK(background.size() == 1);

  spec.background_fraction = 0.0;
  const auto [seq0, labels0] = generate_synthetic(spec, 1);
  for (auto l : labels0.label) CHECK(l == SnippetLabel::foreground);
}

TEST_CASE("pure video component gives identical rows and zero sensitivity") {
  SyntheticSpec spec;
  spec.length_L = 30;
  spec.dim_m = 8;
  spec.n_segments = 3;
  spec.min_seg_len = 5;
  spec.video_component_weight = 1.0;
  spec.segment_component_weight = 0.0;
  spec.noise_weight = 0.0;
  const auto [seq, labels] = generate_synthetic(spec, 9);
  for (int t = 1; t < 30; ++t) CHECK(seq.data.row(t) == seq.data.row(0));
  CHECK(temporal_sensitivity(seq) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("pure segment component matches brute-force pairwise cosine") {
  SyntheticSpec spec;
  spec.length_L = 24;
  spec.dim_m = 8;
  spec.n_segments = 3;
  spec.min_seg_len = 4;
  spec.video_component_weight = 0.0;
  spec.segment_component_weight = 1.0;
  spec.noise_weight = 0.0;
  const auto [seq, labels] = generate_synthetic(spec, 21);
  const Mat x = seq.as_double();

  // One representative row per segment gives cos(p_j, p_k).
  std::vector<int> first(3, -1);
  for (int t = 0; t < 24; ++t) {
    if (first[labels.segment_id[t]] < 0) first[labels.segment_id[t]] = t;
  }
  for (int i = 0; i < 24; ++i) {
    for (int j = 0; j < 24; ++j) {
      const double cos = sola::testing::naive_cosine(x, i, x, j);
      const int si = labels.segment_id[i];
      const int sj = labels.segment_id[j];
      if (si == sj) {
        CHECK(cos == doctest::Approx(1.0).epsilon(1e-6));
      } else {
        CHECK(cos == doctest::Approx(sola::testing::naive_cosine(x, first[si], x, first[sj])).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("infeasible synthetic specs are rejected") {
  SyntheticSpec spec;
  spec.length_L = 10;
  spec.n_segments = 4;
  spec.min_seg_len = 3;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), SpecError);
  spec.min_seg_len = 2;
  spec.video_component_weight = spec.segment_component_weight = spec.noise_weight = 0.0;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), SpecError);
  spec.video_component_weight = -1.0;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), SpecError);
}

TEST_CASE("sample_window bounds and uniformity") {
  FeatureSequence seq;
  seq.data.resize(10, 3);
  for (int t = 0; t < 10; ++t) seq.data.row(t).setConstant(static_cast<float>(t));
  std::mt19937_64 rng(5);

  SUBCASE("L == W always starts at 0") {
    for (int i = 0; i < 50; ++i) {
      const FeatureWindow w = sample_window(seq, 10, rng);
      CHECK(w.start_index == 0);
      CHECK(w.data == seq.as_double());
    }
  }
  SUBCASE("too short") { CHECK_THROWS_AS(sample_window(seq, 11, rng), TooShortError); }
  SUBCASE("start histogram within 3 sigma of the multinomial expectation") {
    constexpr int kDraws = 100000;
    std::vector<int> hist(7, 0);
    for (int i = 0; i < kDraws; ++i) {
      const FeatureWindow w = sample_window(seq, 4, rng);
      REQUIRE(w.start_index >= 0);
      REQUIRE(w.start_index <= 6);
      CHECK(w.data(0, 0) == w.start_index);  // contiguous rows from the start
      CHECK(w.data(3, 0) == w.start_index + 3);
      ++hist[w.start_index];
    }
    const double p = 1.0 / 7.0;
    const double sigma = std::sqrt(kDraws * p * (1 - p));
    for (int c : hist) CHECK(std::abs(c - kDraws * p) < 3 * sigma);
  }
}

TEST_CASE("corpus directories round-trip with the video list and labels") {
  TempDir dir;
  SyntheticSpec spec;
  spec.length_L = 20;
  spec.dim_m = 4;
  spec.n_segments = 2;
  spec.min_seg_len = 3;
  std::vector<FeatureSequence> corpus;
  std::vector<SegmentLabels> labels;
  std::vector<std::string> ids;
  for (int v = 0; v < 3; ++v) {
    auto [seq, lab] = generate_synthetic(spec, static_cast<std::uint64_t>(v));
    seq.video_id = "vid" + std::to_string(v);
    seq.snippet_stride_alpha = 8 + v;
    ids.push_back(seq.video_id);
    corpus.push_back(seq);
    labels.push_back(lab);
  }
  save_corpus(corpus, dir.path());
  save_labels(ids, labels, dir / kLabelsName);

  const auto back = load_corpus(dir.path());
  REQUIRE(back.size() == 3);
  for (int v = 0; v < 3; ++v) {
    CHECK(back[v].video_id == ids[v]);
    CHECK(back[v].snippet_stride_alpha == 8 + v);
    CHECK(back[v].data == corpus[v].data);
  }
  const auto lab_back = load_labels(dir / kLabelsName, back);
  for (int v = 0; v < 3; ++v) {
    CHECK(lab_back[v].label == labels[v].label);
    CHECK(lab_back[v].segment_id == labels[v].segment_id);
  }

  SUBCASE("comment lines in the video list are skipped") {
    atomic_write(dir / kVideoListName, "# header\nvid2.npy\t4\n# trailing\n");
    const auto one = load_corpus(dir.path());
    REQUIRE(one.size() == 1);
    CHECK(one[0].video_id == "vid2");
    CHECK(one[0].snippet_stride_alpha == 4);
  }
}
