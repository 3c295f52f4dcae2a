// sola: synth, train, transform, eval and tsm subcommands.
//
// Every run writes manifest.json next to its outputs. Passing that file back
// through --manifest restores every flag it recorded; flags given explicitly
// on the command line still win, which is how a rerun picks a new --out.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sola/errors.hpp"
#include "sola/evaluation.hpp"
#include "sola/feature_store.hpp"
#include "sola/model.hpp"
#include "sola/similarity.hpp"
#include "sola/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kManifestName = "manifest.json";

struct UsageError : sola::Error {
  using sola::Error::Error;
};

// ---------------------------------------------------------------------------
// Flag registry: binds CLI11 options to variables and to manifest keys.

class FlagSet {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& section,
                   const std::string& key, T& var, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, var, help)->capture_default_str();
    entries_.push_back({section, key, opt, [&var] { return json(var); },
                        [&var](const json& j) { var = j.get<T>(); }});
    return opt;
  }

  CLI::Option* add_bool(CLI::App* app, const std::string& flag, const std::string& section,
                        const std::string& key, bool& var, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, var, help)->default_str(var ? "true" : "false");
    entries_.push_back({section, key, opt, [&var] { return json(var); },
                        [&var](const json& j) { var = j.get<bool>(); }});
    return opt;
  }

  /// Fills every flag not given on the command line from the manifest.
  void apply(const json& manifest) const {
    for (const Entry& e : entries_) {
      if (e.opt->count() > 0) continue;
      const json& section = e.section.empty() ? manifest : manifest.value(e.section, json::object());
      if (section.contains(e.key)) e.set(section.at(e.key));
    }
  }

  void write_into(json& manifest) const {
    for (const Entry& e : entries_) {
      if (e.section.empty()) {
        manifest[e.key] = e.get();
      } else {
        manifest[e.section][e.key] = e.get();
      }
    }
  }

  bool given(const std::string& key) const {
    for (const Entry& e : entries_)
      if (e.key == key) return e.opt->count() > 0;
    return false;
  }

 private:
  struct Entry {
    std::string section;
    std::string key;
    CLI::Option* opt;
    std::function<json()> get;
    std::function<void(const json&)> set;
  };
  std::vector<Entry> entries_;
};

struct Common {
  std::string out;
  std::string manifest;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* app, FlagSet& flags, Common& c, bool needs_seed = true) {
  flags.add(app, "--out", "paths", "out", c.out, "output directory");
  app->add_option("--manifest", c.manifest, "rerun with the flags recorded in this manifest.json");
  if (needs_seed) flags.add(app, "--seed", "", "seed", c.seed, "random seed");
}

json read_manifest(const std::string& path, const std::string& command) {
  json m;
  try {
    m = json::parse(sola::read_file(path));
  } catch (const json::exception& e) {
    throw sola::FormatError("manifest " + path + ": " + e.what());
  }
  if (m.value("command", "") != command) {
    throw UsageError("manifest " + path + " was written by '" + m.value("command", "?") + "', not '" +
                     command + "'");
  }
  return m;
}

json new_manifest(const std::string& command, const FlagSet& flags) {
  json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  flags.write_into(m);
  return m;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Output directories are assembled in a sibling staging directory and moved
// into place only once complete. An existing target is replaced only when it
// looks like an earlier sola output.
class StagedDir {
 public:
  explicit StagedDir(const std::string& out) : target_(out) {
    if (out.empty()) throw UsageError("--out is required");
    if (fs::exists(target_) && !fs::is_directory(target_)) {
      throw sola::IoError(out + " exists and is not a directory");
    }
    if (fs::exists(target_) && !fs::is_empty(target_) && !fs::exists(target_ / kManifestName)) {
      throw sola::IoError(out + " is not empty and holds no " + std::string(kManifestName) +
                          "; refusing to replace it");
    }
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw sola::IoError("parent directory of " + out + " does not exist");
    std::random_device rd;
    staging_ = parent / (target_.filename().string() + ".partial-" + std::to_string(rd()));
    fs::create_directories(staging_);
  }
  ~StagedDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  fs::path operator/(const std::string& name) const { return staging_ / name; }
  const fs::path& path() const { return staging_; }

  void commit() {
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

std::vector<sola::FeatureSequence> require_corpus(const std::string& dir) {
  if (dir.empty()) throw UsageError("--corpus is required");
  if (!fs::is_directory(dir)) throw sola::IoError("corpus directory not found: " + dir);
  auto corpus = sola::load_corpus(dir);
  if (corpus.empty()) throw sola::DataError("corpus " + dir + " holds no array files");
  return corpus;
}

sola::SolaParams require_checkpoint(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(path)) throw sola::IoError("checkpoint not found: " + path);
  return sola::load_checkpoint(path);
}

void check_dim(const sola::SolaParams& p, const std::vector<sola::FeatureSequence>& corpus) {
  const int m = p.config().dim_m;
  for (const auto& seq : corpus) {
    if (seq.dim() != m) {
      throw sola::ShapeError("video " + seq.video_id + " has " + std::to_string(seq.dim()) +
                             " channels but the checkpoint expects " + std::to_string(m));
    }
  }
}

void copy_labels(const std::string& corpus_dir, const StagedDir& out) {
  const fs::path labels = fs::path(corpus_dir) / sola::kLabelsName;
  if (fs::exists(labels)) sola::atomic_write(out / sola::kLabelsName, sola::read_file(labels));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

sola::GatherMode parse_gather(const std::string& s) {
  if (s == "mean_pool") return sola::GatherMode::mean_pool;
  if (s == "strided") return sola::GatherMode::strided;
  throw UsageError("--gather-mode must be mean_pool or strided");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  int videos = 10;
  sola::SyntheticSpec spec;
};

void setup_synth(CLI::App* app, FlagSet& f, SynthArgs& a) {
  add_common(app, f, a.common);
  f.add(app, "--videos", "config", "videos", a.videos, "number of videos")->check(CLI::PositiveNumber);
  f.add(app, "--length", "config", "length", a.spec.length_L, "snippets per video");
  f.add(app, "--dim", "config", "dim", a.spec.dim_m, "feature channels");
  f.add(app, "--segments", "config", "segments", a.spec.n_segments, "segments per video");
  f.add(app, "--min-seg-len", "config", "min_seg_len", a.spec.min_seg_len, "shortest segment");
  f.add(app, "--video-weight", "config", "video_weight", a.spec.video_component_weight,
        "weight c of the per-video component");
  f.add(app, "--segment-weight", "config", "segment_weight", a.spec.segment_component_weight,
        "weight a of the per-segment component");
  f.add(app, "--noise-weight", "config", "noise_weight", a.spec.noise_weight,
        "weight b of the per-snippet noise");
  f.add(app, "--background-fraction", "config", "background_fraction", a.spec.background_fraction,
        "fraction of segments labelled background");
}

void run_synth(const SynthArgs& a, const FlagSet& f) {
  try {
    a.spec.validate();
  } catch (const sola::SpecError& e) {
    throw UsageError(e.what());
  }
  StagedDir out(a.common.out);
  std::seed_seq seq{a.common.seed};
  std::vector<std::uint32_t> seeds(static_cast<std::size_t>(a.videos));
  seq.generate(seeds.begin(), seeds.end());

  std::vector<sola::FeatureSequence> corpus;
  std::vector<sola::SegmentLabels> labels;
  std::vector<std::string> ids;
  for (int v = 0; v < a.videos; ++v) {
    auto [video, lab] = sola::generate_synthetic(a.spec, seeds[static_cast<std::size_t>(v)]);
    char id[32];
    std::snprintf(id, sizeof id, "video_%04d", v);
    video.video_id = id;
    ids.push_back(id);
    corpus.push_back(std::move(video));
    labels.push_back(std::move(lab));
  }
  sola::save_corpus(corpus, out.path());
  sola::save_labels(ids, labels, out / sola::kLabelsName);
  sola::atomic_write(out / kManifestName, dump(new_manifest("synth", f)));
  out.commit();
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string corpus;
  std::string gather = "mean_pool";
  sola::TrainConfig cfg;
  bool grad_check = false;
  double grad_check_tol = 1e-4;
};

void setup_train(CLI::App* app, FlagSet& f, TrainArgs& a) {
  add_common(app, f, a.common);
  f.add(app, "--corpus", "paths", "corpus", a.corpus, "input corpus directory");
  sola::TrainConfig& c = a.cfg;
  f.add(app, "--hidden", "config", "hidden_h", c.model.hidden_h, "hidden channels of the conv stack");
  f.add(app, "--kernel", "config", "kernel_k", c.model.kernel_k, "conv kernel size, odd, 1..7");
  f.add_bool(app, "--residual,!--no-residual", "config", "residual_enabled", c.model.residual_enabled,
             "add the input back after the conv stack");
  f.add(app, "--K", "config", "K", c.match.K, "target similarity constant");
  f.add(app, "--step", "config", "step_s", c.match.step_s, "gathering step s");
  f.add(app, "--gather-mode", "config", "gather_mode", a.gather, "mean_pool or strided");
  f.add(app, "--window-len", "config", "window_len", c.window_len, "window length W in snippets");
  f.add(app, "--batch-size", "config", "batch_size", c.batch_size, "windows per step");
  f.add(app, "--epochs", "config", "epochs", c.epochs, "training epochs");
  f.add(app, "--learning-rate", "config", "learning_rate", c.learning_rate, "Adam learning rate");
  f.add(app, "--adam-beta1", "config", "adam_beta1", c.adam_beta1, "Adam beta1");
  f.add(app, "--adam-beta2", "config", "adam_beta2", c.adam_beta2, "Adam beta2");
  f.add(app, "--adam-eps", "config", "adam_eps", c.adam_eps, "Adam epsilon");
  f.add_bool(app, "--stop-gradient,!--no-stop-gradient", "config", "stop_gradient_plain_branch",
             c.stop_gradient_plain_branch, "treat the un-projected branch as constant");
  f.add_bool(app, "--grad-check", "config", "grad_check", a.grad_check,
             "compare analytic and finite-difference gradients before training");
  f.add(app, "--grad-check-tol", "config", "grad_check_tol", a.grad_check_tol,
        "largest accepted relative gradient error");
}

void grad_check(const std::vector<sola::FeatureSequence>& corpus, const sola::TrainConfig& cfg,
                double tol) {
  sola::TrainConfig small = cfg;
  small.batch_size = 2;
  const auto videos = sola::eligible_videos(corpus, cfg.window_len);
  std::mt19937_64 rng(cfg.seed);
  const auto windows = sola::sample_batch(videos, small, rng);
  const sola::SolaParams p = sola::init_params(cfg.model, cfg.seed);
  const double err =
      sola::max_relative_error(sola::loss_and_grad(p, windows, small).grads,
                               sola::finite_diff_grad(p, windows, small, 1e-4));
  std::fprintf(stderr, "sola: gradient check relative error %.3g (tolerance %.3g)\n", err, tol);
  if (!(err < tol)) throw sola::NumericsError("gradient check failed: relative error " + fmt(err));
}

void run_train(TrainArgs& a, const FlagSet& f) {
  a.cfg.match.gather_mode = parse_gather(a.gather);
  a.cfg.seed = a.common.seed;
  try {
    a.cfg.model.validate();
  } catch (const sola::ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto corpus = require_corpus(a.corpus);
  a.cfg.model.dim_m = corpus.front().dim();
  try {
    a.cfg.validate();
  } catch (const sola::ConfigError& e) {
    throw UsageError(e.what());
  }
  if (a.grad_check) grad_check(corpus, a.cfg, a.grad_check_tol);

  StagedDir out(a.common.out);
  const sola::TrainResult r = sola::train(corpus, a.cfg);
  sola::save_checkpoint(r.params, out / "checkpoint.sola");
  sola::atomic_write(out / "history.csv", sola::history_to_csv(r.history));
  json m = new_manifest("train", f);
  m["config"]["dim_m"] = a.cfg.model.dim_m;
  sola::atomic_write(out / kManifestName, dump(m));
  out.commit();
}

// ---------------------------------------------------------------------------
// transform

struct TransformArgs {
  Common common;
  std::string corpus;
  std::string checkpoint;
};

void setup_transform(CLI::App* app, FlagSet& f, TransformArgs& a) {
  add_common(app, f, a.common, false);
  f.add(app, "--corpus", "paths", "corpus", a.corpus, "input corpus directory");
  f.add(app, "--checkpoint", "paths", "checkpoint", a.checkpoint, "trained checkpoint");
}

void run_transform(const TransformArgs& a, const FlagSet& f) {
  const sola::SolaParams p = require_checkpoint(a.checkpoint);
  const auto corpus = require_corpus(a.corpus);
  check_dim(p, corpus);
  StagedDir out(a.common.out);
  sola::save_corpus(sola::transform_corpus(p, corpus), out.path());
  copy_labels(a.corpus, out);
  sola::atomic_write(out / kManifestName, dump(new_manifest("transform", f)));
  out.commit();
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::string corpus;
  std::string checkpoint;
  std::string labels;
  int probe_seeds = 5;
  sola::ProbeConfig probe;
  double test_fraction = 0.3;
  int decay_max = 16;
  int window_len = 64;
  int samples_per_video = 4;
};

void setup_eval(CLI::App* app, FlagSet& f, EvalArgs& a) {
  add_common(app, f, a.common);
  f.add(app, "--corpus", "paths", "corpus", a.corpus, "original corpus directory");
  f.add(app, "--checkpoint", "paths", "checkpoint", a.checkpoint, "trained checkpoint");
  f.add(app, "--labels", "paths", "labels", a.labels, "labels CSV (default: <corpus>/labels.csv)");
  f.add(app, "--probe-seeds", "config", "probe_seeds", a.probe_seeds, "probe repetitions");
  f.add(app, "--probe-epochs", "config", "probe_epochs", a.probe.epochs, "probe epochs");
  f.add(app, "--probe-lr", "config", "probe_lr", a.probe.learning_rate, "probe learning rate");
  f.add(app, "--test-fraction", "config", "test_fraction", a.test_fraction,
        "share of snippets held out for the probe");
  f.add(app, "--decay-max", "config", "decay_max", a.decay_max, "largest offset of the decay curve");
  f.add(app, "--window-len", "config", "window_len", a.window_len, "window length for the decay curve");
  f.add(app, "--samples-per-video", "config", "samples_per_video", a.samples_per_video,
        "windows drawn per video for the decay curve");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void run_eval(EvalArgs& a, const FlagSet& f) {
  if (a.probe_seeds < 0) throw UsageError("--probe-seeds must be non-negative");
  const sola::SolaParams p = require_checkpoint(a.checkpoint);
  const auto original = require_corpus(a.corpus);
  check_dim(p, original);
  const auto refined = sola::transform_corpus(p, original);

  std::vector<std::pair<std::string, std::pair<double, double>>> rows;
  rows.push_back({"sensitivity", {sola::corpus_sensitivity(original), sola::corpus_sensitivity(refined)}});

  const fs::path labels_path = a.labels.empty() ? fs::path(a.corpus) / sola::kLabelsName : fs::path(a.labels);
  if (a.probe_seeds > 0) {
    if (!fs::exists(labels_path)) throw sola::IoError("labels not found: " + labels_path.string());
    const auto labels = sola::load_labels(labels_path, original);
    std::vector<double> before, after;
    for (int s = 0; s < a.probe_seeds; ++s) {
      const std::uint64_t seed = a.common.seed + static_cast<std::uint64_t>(s);
      sola::ProbeConfig pc = a.probe;
      pc.seed = seed;
      const auto s0 = sola::split_snippets(original, labels, a.test_fraction, seed);
      const auto s1 = sola::split_snippets(refined, labels, a.test_fraction, seed);
      const auto r0 = sola::linear_probe(s0.train_feats, s0.train_labels, s0.test_feats, s0.test_labels, pc);
      const auto r1 = sola::linear_probe(s1.train_feats, s1.train_labels, s1.test_feats, s1.test_labels, pc);
      before.push_back(r0.test_accuracy);
      after.push_back(r1.test_accuracy);
      rows.push_back({"probe_test_accuracy_seed" + std::to_string(s), {r0.test_accuracy, r1.test_accuracy}});
    }
    rows.push_back({"probe_test_accuracy_median", {median(before), median(after)}});
  }

  if (a.decay_max > 0) {
    const auto d0 = sola::similarity_decay(original, a.decay_max, a.window_len, a.samples_per_video, a.common.seed);
    const auto d1 = sola::similarity_decay(refined, a.decay_max, a.window_len, a.samples_per_video, a.common.seed);
    for (int d = 1; d <= a.decay_max; ++d) {
      rows.push_back({"decay_d" + std::to_string(d), {d0.mean[d - 1], d1.mean[d - 1]}});
    }
  }

  std::string csv = "metric,original,transformed\n";
  for (const auto& [name, v] : rows) csv += name + "," + fmt(v.first) + "," + fmt(v.second) + "\n";

  StagedDir out(a.common.out);
  sola::atomic_write(out / "metrics.csv", csv);
  sola::atomic_write(out / kManifestName, dump(new_manifest("eval", f)));
  out.commit();
}

// ---------------------------------------------------------------------------
// tsm

struct TsmArgs {
  Common common;
  bool target = false;
  bool predicted = false;
  bool average = false;
  int n = 32;
  int step = 2;
  double K = 16.0;
  std::string corpus;
  std::string checkpoint;
  int video = 0;
  int window_len = 64;
  int samples_per_video = 4;
  std::string format = "pgm";
};

void setup_tsm(CLI::App* app, FlagSet& f, TsmArgs& a) {
  add_common(app, f, a.common);
  f.add_bool(app, "--target", "config", "target", a.target, "target TSM of n gathered positions");
  f.add_bool(app, "--predicted", "config", "predicted", a.predicted,
             "predicted TSM of the first window of one video");
  f.add_bool(app, "--average", "config", "average", a.average, "average TSM over sampled windows");
  f.add(app, "--n", "config", "n", a.n, "size of the target TSM");
  f.add(app, "--step", "config", "step_s", a.step, "gathering step s");
  f.add(app, "--K", "config", "K", a.K, "target similarity constant");
  f.add(app, "--corpus", "paths", "corpus", a.corpus, "corpus directory");
  f.add(app, "--checkpoint", "paths", "checkpoint", a.checkpoint, "checkpoint");
  f.add(app, "--video", "config", "video", a.video, "video index for --predicted");
  f.add(app, "--window-len", "config", "window_len", a.window_len, "window length W");
  f.add(app, "--samples-per-video", "config", "samples_per_video", a.samples_per_video,
        "windows per video for --average");
  f.add(app, "--format", "config", "format", a.format, "pgm or csv")
      ->check(CLI::IsMember({"pgm", "csv"}));
}

void run_tsm(const TsmArgs& a, const FlagSet& f) {
  const int modes = int(a.target) + int(a.predicted) + int(a.average);
  if (modes != 1) throw UsageError("choose exactly one of --target, --predicted, --average");
  if (a.target && (!a.corpus.empty() || !a.checkpoint.empty())) {
    throw UsageError("--target takes no --corpus or --checkpoint");
  }
  if (a.average && (f.given("n") || f.given("K"))) throw UsageError("--average takes no --n or --K");

  sola::Tsm tsm;
  std::string name;
  if (a.target) {
    sola::MatchConfig mc{a.K, a.step};
    try {
      mc.validate();
    } catch (const sola::ConfigError& e) {
      throw UsageError(e.what());
    }
    tsm = sola::build_target_tsm(a.n, mc);
    name = "target";
  } else if (a.predicted) {
    const sola::SolaParams p = require_checkpoint(a.checkpoint);
    const auto corpus = require_corpus(a.corpus);
    check_dim(p, corpus);
    if (a.video < 0 || a.video >= static_cast<int>(corpus.size())) throw UsageError("--video out of range");
    const sola::FeatureSequence& seq = corpus[static_cast<std::size_t>(a.video)];
    if (seq.length() < a.window_len) throw sola::TooShortError("video shorter than --window-len");
    const sola::Mat window = seq.as_double().topRows(a.window_len);
    tsm = sola::predicted_tsm(sola::gather(sola::sola_forward(p, window), a.step), p);
    name = "predicted";
  } else {
    auto corpus = require_corpus(a.corpus);
    if (!a.checkpoint.empty()) {
      const sola::SolaParams p = require_checkpoint(a.checkpoint);
      check_dim(p, corpus);
      corpus = sola::transform_corpus(p, corpus);
    }
    tsm = sola::average_tsm(corpus, a.window_len, a.samples_per_video, a.common.seed);
    name = "average";
  }

  StagedDir out(a.common.out);
  sola::export_heatmap(tsm, out / (name + "." + a.format), a.format);
  sola::atomic_write(out / kManifestName, dump(new_manifest("tsm", f)));
  out.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal similarity matching for snippet feature refinement"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::map<std::string, FlagSet> flags;
  SynthArgs synth;
  TrainArgs train;
  TransformArgs transform;
  EvalArgs eval;
  TsmArgs tsm;
  CLI::App* c_synth = app.add_subcommand("synth", "write a synthetic corpus");
  CLI::App* c_train = app.add_subcommand("train", "train a refinement model");
  CLI::App* c_transform = app.add_subcommand("transform", "refine every video of a corpus");
  CLI::App* c_eval = app.add_subcommand("eval", "compare original and refined features");
  CLI::App* c_tsm = app.add_subcommand("tsm", "write TSM heatmaps");
  setup_synth(c_synth, flags["synth"], synth);
  setup_train(c_train, flags["train"], train);
  setup_transform(c_transform, flags["transform"], transform);
  setup_eval(c_eval, flags["eval"], eval);
  setup_tsm(c_tsm, flags["tsm"], tsm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  FlagSet& f = flags[command];
  try {
    const std::map<std::string, Common*> commons{{"synth", &synth.common},
                                                 {"train", &train.common},
                                                 {"transform", &transform.common},
                                                 {"eval", &eval.common},
                                                 {"tsm", &tsm.common}};
    const std::string& manifest = commons.at(command)->manifest;
    if (!manifest.empty()) f.apply(read_manifest(manifest, command));

    if (command == "synth") run_synth(synth, f);
    if (command == "train") run_train(train, f);
    if (command == "transform") run_transform(transform, f);
    if (command == "eval") run_eval(eval, f);
    if (command == "tsm") run_tsm(tsm, f);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "sola %s: usage error: %s\n", command.c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sola %s: error: %s\n", command.c_str(), e.what());
    return 1;
  }
  return 0;
}
