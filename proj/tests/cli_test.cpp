#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <string>

#include "sola/evaluation.hpp"
#include "sola/feature_store.hpp"
#include "sola/model.hpp"
#include "test_support.hpp"

using namespace sola;
using sola::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(SOLA_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int count_npy(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".npy";
  return n;
}

// Residual on with a zero second conv: the refinement stack is the identity.
void write_identity_checkpoint(const fs::path& path, int m) {
  SolaParams p = init_params(ModelConfig{m, 4, 3, true}, 0);
  for (Mat& tap : p.conv2_w.taps) tap.setZero();
  save_checkpoint(p, path);
}

void write_constant_corpus(const fs::path& dir, int videos, int len, int m) {
  std::vector<FeatureSequence> corpus;
  for (int v = 0; v < videos; ++v) {
    FeatureSequence s;
    s.data = MatF::Constant(len, m, 0.25f);
    s.video_id = "c" + std::to_string(v);
    corpus.push_back(s);
  }
  save_corpus(corpus, dir);
}

}  // namespace

TEST_CASE("synth") {
  TempDir dir;
  const RunResult r = run("synth --videos 10 --length 128 --dim 32 --segments 4 --seed 7 --out " + q(dir / "c"));
  REQUIRE(r.exit_code == 0);
  CHECK(count_npy(dir / "c") == 10);
  const auto corpus = load_corpus(dir / "c");
  REQUIRE(corpus.size() == 10);
  for (const auto& seq : corpus) {
    CHECK(seq.length() == 128);
    CHECK(seq.dim() == 32);
  }
  CHECK(load_labels(dir / "c" / kLabelsName, corpus).size() == 10);

  SUBCASE("rerun from the manifest reproduces every byte") {
    REQUIRE(run("synth --manifest " + q(dir / "c" / "manifest.json") + " --out " + q(dir / "d")).exit_code == 0);
    for (const auto& e : fs::directory_iterator(dir / "c")) {
      const std::string name = e.path().filename().string();
      if (name == "manifest.json") continue;
      CHECK(read_file(e.path()) == read_file(dir / "d" / name));
    }
  }
  SUBCASE("usage errors leave no output behind") {
    const RunResult bad = run("synth --segments 0 --out " + q(dir / "e"));
    CHECK(bad.exit_code != 0);
    CHECK(bad.output.find("usage error") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "e"));
    CHECK(run("synth --seed 1").exit_code != 0);
    CHECK(run("synth --out " + q(dir / "no" / "such" / "parent")).exit_code != 0);
  }
  SUBCASE("refuses to replace a foreign non-empty directory") {
    fs::create_directories(dir / "mine");
    atomic_write(dir / "mine" / "keep.txt", "x");
    CHECK(run("synth --videos 1 --out " + q(dir / "mine")).exit_code != 0);
    CHECK(fs::exists(dir / "mine" / "keep.txt"));
  }
}

TEST_CASE("train, transform, eval and tsm on one corpus") {
  TempDir dir;
  REQUIRE(run("synth --videos 4 --length 64 --dim 8 --segments 4 --min-seg-len 4 --seed 3 --out " + q(dir / "c"))
              .exit_code == 0);
  const std::string train_flags = "train --corpus " + q(dir / "c") +
                                  " --hidden 8 --window-len 16 --batch-size 8 --epochs 2 --seed 5";

  SUBCASE("train writes a checkpoint, history and manifest") {
    const RunResult r = run(train_flags + " --grad-check --out " + q(dir / "t"));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("gradient check") != std::string::npos);
    CHECK(load_checkpoint(dir / "t" / "checkpoint.sola").config() == ModelConfig{8, 8, 3, true});
    const std::string hist = read_file(dir / "t" / "history.csv");
    CHECK(hist.rfind("step,loss,epoch,avg_tsm_distance\n0,,0,", 0) == 0);
    int last_epoch = 0;
    std::size_t pos = hist.find('\n', hist.find('\n') + 1) + 1;
    while (pos < hist.size()) {
      const std::size_t end = hist.find('\n', pos);
      const std::string line = hist.substr(pos, end - pos);
      const std::size_t c1 = line.find(',');
      const std::size_t c2 = line.find(',', c1 + 1);
      const int epoch = std::stoi(line.substr(c2 + 1));
      CHECK(epoch >= last_epoch);
      last_epoch = epoch;
      pos = end + 1;
    }
    CHECK(last_epoch == 2);

    SUBCASE("rerun from the manifest is bit-identical") {
      REQUIRE(run("train --manifest " + q(dir / "t" / "manifest.json") + " --out " + q(dir / "t2")).exit_code == 0);
      CHECK(read_file(dir / "t" / "checkpoint.sola") == read_file(dir / "t2" / "checkpoint.sola"));
      CHECK(read_file(dir / "t" / "history.csv") == read_file(dir / "t2" / "history.csv"));
    }
    SUBCASE("transform keeps file count and shapes") {
      REQUIRE(run("transform --corpus " + q(dir / "c") + " --checkpoint " + q(dir / "t" / "checkpoint.sola") +
                  " --out " + q(dir / "x"))
                  .exit_code == 0);
      const auto before = load_corpus(dir / "c");
      const auto after = load_corpus(dir / "x");
      REQUIRE(after.size() == before.size());
      for (std::size_t i = 0; i < after.size(); ++i) {
        CHECK(after[i].video_id == before[i].video_id);
        CHECK(after[i].length() == before[i].length());
        CHECK(after[i].dim() == before[i].dim());
      }
      CHECK(fs::exists(dir / "x" / kLabelsName));
    }
    SUBCASE("eval reports original and transformed side by side") {
      const RunResult e = run("eval --corpus " + q(dir / "c") + " --checkpoint " +
                              q(dir / "t" / "checkpoint.sola") + " --window-len 16 --decay-max 4 --probe-seeds 3 --out " +
                              q(dir / "e"));
      REQUIRE(e.exit_code == 0);
      const std::string metrics = read_file(dir / "e" / "metrics.csv");
      CHECK(metrics.rfind("metric,original,transformed\nsensitivity,", 0) == 0);
      CHECK(metrics.find("probe_test_accuracy_median,") != std::string::npos);
      CHECK(metrics.find("decay_d4,") != std::string::npos);
    }
    SUBCASE("predicted and average heatmaps") {
      const std::string ckpt = q(dir / "t" / "checkpoint.sola");
      CHECK(run("tsm --predicted --corpus " + q(dir / "c") + " --checkpoint " + ckpt +
                " --window-len 16 --out " + q(dir / "p"))
                .exit_code == 0);
      CHECK(read_file(dir / "p" / "predicted.pgm").rfind("P5\n8 8\n255\n", 0) == 0);
      CHECK(run("tsm --average --format csv --corpus " + q(dir / "c") + " --checkpoint " + ckpt +
                " --window-len 16 --out " + q(dir / "a"))
                .exit_code == 0);
      CHECK(tsm_from_csv(read_file(dir / "a" / "average.csv")).values.rows() == 16);
    }
  }
  SUBCASE("a failing gradient check aborts before training") {
    const RunResult r = run(train_flags + " --grad-check --grad-check-tol 0 --out " + q(dir / "t"));
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("gradient check failed") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "t"));
  }
  SUBCASE("invalid kernel is a usage error") {
    const RunResult r = run(train_flags + " --kernel 4 --out " + q(dir / "t"));
    CHECK(r.exit_code == 2);
    CHECK_FALSE(fs::exists(dir / "t"));
  }
  SUBCASE("missing checkpoint") {
    const RunResult r = run("transform --corpus " + q(dir / "c") + " --checkpoint " + q(dir / "nope.sola") +
                            " --out " + q(dir / "x"));
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("checkpoint not found") != std::string::npos);
  }
  SUBCASE("identity checkpoint reproduces its input") {
    write_identity_checkpoint(dir / "id.sola", 8);
    REQUIRE(run("transform --corpus " + q(dir / "c") + " --checkpoint " + q(dir / "id.sola") + " --out " +
                q(dir / "x"))
                .exit_code == 0);
    const auto before = load_corpus(dir / "c");
    const auto after = load_corpus(dir / "x");
    for (std::size_t i = 0; i < after.size(); ++i) {
      CHECK((after[i].data - before[i].data).cwiseAbs().maxCoeff() <= 1e-6f);
    }
  }
  SUBCASE("single-class labels make the probe fail with a diagnostic") {
    write_identity_checkpoint(dir / "id.sola", 8);
    const auto corpus = load_corpus(dir / "c");
    std::vector<std::string> ids;
    std::vector<SegmentLabels> labels;
    for (const auto& seq : corpus) {
      ids.push_back(seq.video_id);
      SegmentLabels l;
      l.label.assign(static_cast<std::size_t>(seq.length()), SnippetLabel::foreground);
      l.segment_id.assign(static_cast<std::size_t>(seq.length()), 0);
      labels.push_back(l);
    }
    save_labels(ids, labels, dir / "one.csv");
    const RunResult r = run("eval --corpus " + q(dir / "c") + " --checkpoint " + q(dir / "id.sola") +
                            " --labels " + q(dir / "one.csv") + " --window-len 16 --out " + q(dir / "e"));
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("single class") != std::string::npos);
  }
}

TEST_CASE("eval on a constant corpus reports zero sensitivity") {
  TempDir dir;
  write_constant_corpus(dir / "c", 2, 32, 4);
  write_identity_checkpoint(dir / "id.sola", 4);
  REQUIRE(run("eval --corpus " + q(dir / "c") + " --checkpoint " + q(dir / "id.sola") +
              " --probe-seeds 0 --window-len 16 --decay-max 2 --out " + q(dir / "e"))
              .exit_code == 0);
  const std::string metrics = read_file(dir / "e" / "metrics.csv");
  CHECK(metrics.find("sensitivity,0,0\n") != std::string::npos);
}

TEST_CASE("tsm") {
  TempDir dir;
  SUBCASE("target heatmap is symmetric with the brightest band beside the diagonal") {
    REQUIRE(run("tsm --target --n 32 --step 2 --K 16 --out " + q(dir / "t")).exit_code == 0);
    const std::string pgm = read_file(dir / "t" / "target.pgm");
    const std::string header = "P5\n32 32\n255\n";
    REQUIRE(pgm.size() == header.size() + 32 * 32);
    auto px = [&](int i, int j) { return static_cast<unsigned char>(pgm[header.size() + i * 32 + j]); };
    for (int i = 0; i < 32; ++i) {
      for (int j = 0; j < 32; ++j) {
        CHECK(px(i, j) == px(j, i));
        if (i != j && std::abs(i - j) > 1) CHECK(px(i, j) <= px(i, i + (j > i ? 1 : -1)));
      }
    }
    CHECK(px(0, 1) == 250);  // round(255 * 0.98201379)
  }
  SUBCASE("average over a constant corpus is all white") {
    write_constant_corpus(dir / "c", 2, 20, 3);
    REQUIRE(run("tsm --average --window-len 8 --corpus " + q(dir / "c") + " --out " + q(dir / "a")).exit_code == 0);
    const std::string pgm = read_file(dir / "a" / "average.pgm");
    const std::string header = "P5\n8 8\n255\n";
    REQUIRE(pgm.size() == header.size() + 64);
    for (std::size_t i = header.size(); i < pgm.size(); ++i) CHECK(static_cast<unsigned char>(pgm[i]) == 255);
  }
  SUBCASE("conflicting or missing modes are usage errors") {
    CHECK(run("tsm --target --checkpoint x.sola --out " + q(dir / "t")).exit_code == 2);
    CHECK(run("tsm --target --average --out " + q(dir / "t")).exit_code == 2);
    CHECK(run("tsm --out " + q(dir / "t")).exit_code == 2);
    CHECK_FALSE(fs::exists(dir / "t"));
  }
}
