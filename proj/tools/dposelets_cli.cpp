// dposelets command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dposelets/harness/eval.hpp"
#include "dposelets/harness/experiments.hpp"
#include "dposelets/harness/io.hpp"
#include "dposelets/harness/pipeline.hpp"
#include "dposelets/harness/synth.hpp"

namespace fs = std::filesystem;
using namespace dposelets;
using namespace dposelets::harness;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

const auto t_start = std::chrono::steady_clock::now();

void log_line(const std::string& msg) {
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, msg.c_str());
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Common {
  std::uint64_t seed = 1;
  std::string out = ".";
};

std::vector<PoseletSpec> pick_specs(const std::vector<std::string>& names) {
  auto all = default_poselet_specs();
  if (names.empty()) return all;
  std::vector<PoseletSpec> out;
  for (const auto& n : names) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& s) { return s.name == n; });
    if (it == all.end()) throw Error(Errc::InvalidConfig, "unknown poselet '" + n + "'");
    out.push_back(*it);
  }
  return out;
}

std::shared_ptr<const convnet::PdfNetwork> load_network(const fs::path& path) {
  auto m = read_model(path);
  if (!m.extractor.network()) throw Error(Errc::ExtractorNotReady, path.string() + " holds no network");
  return m.extractor.network();
}

// gen-toy-corpus

struct GenArgs {
  ToyCorpusConfig cfg;
};

int run_gen(const GenArgs& a, const Common& c) {
  auto cfg = a.cfg;
  cfg.seed = c.seed;
  cfg.validate();
  log_line("rendering toy corpus");
  const auto corpus = generate_toy_corpus(cfg);
  write_toy_corpus(corpus, c.out);
  log_line("wrote " + std::to_string(corpus.train.size()) + " train, " + std::to_string(corpus.test.size()) +
           " test, " + std::to_string(corpus.pool.size()) + " pool images to " + c.out);
  return 0;
}

// train

struct TrainArgs {
  std::string mode = "hog";
  std::string corpus;
  std::string network;
  std::vector<std::string> poselets;
  std::size_t negatives = 4000;
  double lambda = 1e-4;
  int displaced = 6;
  bool scorer = true;
};

int run_train(const TrainArgs& a, const Common& c) {
  const auto mode = features::parse_feature_mode(a.mode);
  PipelineConfig cfg;
  cfg.reseed(c.seed);
  cfg.negatives = a.negatives;
  cfg.poselet.svm.lambda = a.lambda;
  cfg.poselet.displaced_per_positive = a.displaced;
  cfg.train_scorer = a.scorer;
  features::Extractor ex = features::Extractor::hog();
  if (mode == features::FeatureMode::Pdf) {
    if (a.network.empty()) throw Error(Errc::ExtractorNotReady, "--mode pdf needs --network");
    ex = features::Extractor::pdf(load_network(a.network));
  }
  const auto corpus = read_manifest(a.corpus);
  const auto specs = pick_specs(a.poselets);
  const auto seeds = make_seeds(corpus, specs);
  std::vector<PoseletReport> report;
  const auto model = train_poselet_model(corpus, seeds, ex, cfg, &report, log_line);
  const fs::path out(c.out);
  write_model(model, out / "model.dpsl");
  Table t;
  t.header = {"poselet", "train_pos", "train_neg", "held_out_ap"};
  for (const auto& r : report) {
    t.add({r.name, std::to_string(r.train_positives), std::to_string(r.train_negatives), fixed(r.held_out_ap)});
  }
  t.write(out / "poselets.tsv");
  log_line("wrote " + (out / "model.dpsl").string());
  return 0;
}

// bootstrap

struct BootstrapArgs {
  std::string corpus;
  std::string model;
  std::size_t per_class_max = 300;
  double bg_ratio = 2.0;
  int jitter_copies = 2;
};

int run_bootstrap(const BootstrapArgs& a, const Common& c) {
  PipelineConfig cfg;
  cfg.reseed(c.seed);
  cfg.dataset.per_class_max = a.per_class_max;
  cfg.dataset.bg_ratio = a.bg_ratio;
  cfg.dataset.jitter_copies = a.jitter_copies;
  const auto corpus = read_manifest(a.corpus);
  const auto model = read_model(a.model);
  const auto harvest = bootstrap_harvest(corpus, model, cfg, log_line);
  const auto entries = poselets::build_cnn_dataset(harvest, cfg.dataset);
  const auto samples = poselets::materialize(corpus, harvest, entries, cfg.dataset.jitter_copies, cfg.dataset.jitter);
  const fs::path out(c.out);
  write_patch_store(out / "patches", samples);
  std::map<int, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.label];
  Table t;
  t.header = {"label", "patches"};
  for (const auto& [label, n] : counts) {
    t.add({label == poselets::kBackground ? std::string("background") : std::to_string(label), std::to_string(n)});
  }
  t.write(out / "dataset.tsv");
  log_line("wrote " + std::to_string(samples.size()) + " patches to " + (out / "patches").string());
  return 0;
}

// train-cnn

struct CnnArgs {
  std::string patches;
  int classes = 0;
  int epochs = 8;
  double learning_rate = 0.01;
  int batch = 32;
};

int run_train_cnn(const CnnArgs& a, const Common& c) {
  PipelineConfig cfg;
  cfg.reseed(c.seed);
  cfg.sgd.epochs = a.epochs;
  cfg.sgd.learning_rate = a.learning_rate;
  cfg.sgd.batch_size = a.batch;
  cfg.sgd.validate();
  const auto samples = read_patch_store(a.patches);
  int k = a.classes;
  if (k <= 0) {
    for (const auto& s : samples) k = std::max(k, s.label + 1);
  }
  const auto res = train_cnn(samples, k, cfg, log_line);
  const fs::path out(c.out);
  detector::PoseletModel holder;
  holder.extractor = features::Extractor::pdf(res.network);
  write_model(holder, out / "network.dpsl");
  Table t;
  t.header = {"epoch", "loss"};
  for (std::size_t e = 0; e < res.report.epoch_loss.size(); ++e) {
    t.add({std::to_string(e + 1), fixed(res.report.epoch_loss[e])});
  }
  t.write(out / "training.tsv");
  Table s;
  s.header = {"samples", "classes", "train_accuracy"};
  s.add({std::to_string(res.samples), std::to_string(k + 1), fixed(res.train_accuracy)});
  s.write(out / "cnn.tsv");
  std::cout << s.to_tsv();
  return 0;
}

// detect

struct DetectArgs {
  std::string corpus;
  std::string model;
  detector::DetectConfig cfg;
};

int run_detect(const DetectArgs& a, const Common& c) {
  const auto corpus = read_manifest(a.corpus);
  const auto model = read_model(a.model);
  model.validate();
  const auto dets = detect_corpus(corpus, model, a.cfg, log_line);
  write_detections(fs::path(c.out) / "detections.tsv", dets);
  return 0;
}

// eval

struct EvalArgs {
  std::string detections;
  std::string corpus;
  std::string ap_mode = "cont";
  double iou = 0.5;
};

int run_eval(const EvalArgs& a, const Common& c) {
  const auto mode = parse_ap_mode(a.ap_mode);
  const auto corpus = read_manifest(a.corpus, false);
  auto dets = read_detections(a.detections);
  const auto rep = evaluate(std::move(dets), truths_of(corpus), a.iou, mode);
  const fs::path out(c.out);
  Table pr;
  pr.header = {"rank", "precision", "recall"};
  for (std::size_t i = 0; i < rep.curve.size(); ++i) {
    pr.add({std::to_string(i + 1), fixed(rep.curve[i].precision), fixed(rep.curve[i].recall)});
  }
  pr.write(out / "pr.tsv");
  Table s;
  s.header = {"ap_mode", "iou", "detections", "ap"};
  s.add({std::string(to_string(mode)), format_number(a.iou), std::to_string(rep.curve.size()), fixed(rep.ap)});
  s.write(out / "eval.tsv");
  std::cout << s.to_tsv();
  return 0;
}

// exp-jitter

struct JitterArgs {
  std::string corpus;
  std::string network;
  std::string poselet = "head_shoulders";
  JitterExperimentConfig cfg;
};

int run_exp_jitter(const JitterArgs& a, const Common& c) {
  auto cfg = a.cfg;
  cfg.seed = c.seed;
  cfg.svm.seed = c.seed;
  const auto corpus = read_manifest(a.corpus);
  const auto net = load_network(a.network);
  const auto seeds = make_seeds(corpus, pick_specs({a.poselet}));
  imaging::JitterConfig jitter;
  jitter.rng_seed = c.seed;
  log_line("collecting jittered patches");
  const auto data = collect_patches(corpus, seeds.front(), cfg.test_positives + cfg.top_positives,
                                    cfg.test_negatives + cfg.top_negatives, jitter, c.seed);
  const auto rows =
      experiment_jitter(data, features::Extractor::hog(), features::Extractor::pdf(net), cfg, log_line);
  const auto t = jitter_table(rows);
  t.write(fs::path(c.out) / "jitter.tsv");
  std::cout << t.to_tsv();
  return 0;
}

// exp-compare

struct CompareArgs {
  std::string corpus;
  std::string network;
  std::vector<std::string> poselets;
  CompareExperimentConfig cfg;
};

int run_exp_compare(const CompareArgs& a, const Common& c) {
  auto cfg = a.cfg;
  cfg.seed = c.seed;
  cfg.svm.seed = c.seed;
  const auto corpus = read_manifest(a.corpus);
  const auto net = load_network(a.network);
  const auto seeds = make_seeds(corpus, pick_specs(a.poselets));
  const auto rows = experiment_feature_compare(corpus, seeds, features::Extractor::hog(),
                                               features::Extractor::pdf(net), cfg, log_line);
  const auto t = compare_table(rows);
  t.write(fs::path(c.out) / "compare.tsv");
  std::cout << t.to_tsv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poselet training, bootstrapping and detection"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file of option values (sections per subcommand)");
  Common common;
  app.add_option("--seed", common.seed, "Random seed")->capture_default_str();
  app.add_option("--out", common.out, "Output directory")->capture_default_str();

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-toy-corpus", "Render the synthetic pose corpus");
  gen_cmd->add_option("--train-images", gen.cfg.train_images)->capture_default_str();
  gen_cmd->add_option("--test-images", gen.cfg.test_images)->capture_default_str();
  gen_cmd->add_option("--pool-images", gen.cfg.pool_images)->capture_default_str();
  gen_cmd->add_option("--pool-backgrounds", gen.cfg.pool_backgrounds)->capture_default_str();
  gen_cmd->add_option("--width", gen.cfg.width)->capture_default_str();
  gen_cmd->add_option("--height", gen.cfg.height)->capture_default_str();
  gen_cmd->add_option("--max-persons", gen.cfg.max_persons)->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train poselet classifiers");
  train_cmd->add_option("--mode", train.mode, "Feature mode")
      ->check(CLI::IsMember({"hog", "pdf"}))
      ->capture_default_str();
  train_cmd->add_option("--corpus", train.corpus, "Training manifest (JSONL)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--network", train.network, "Network file for --mode pdf")->check(CLI::ExistingFile);
  train_cmd->add_option("--poselets", train.poselets, "Poselet names (default: all)");
  train_cmd->add_option("--negatives", train.negatives, "Person-free negative patches")->capture_default_str();
  train_cmd->add_option("--lambda", train.lambda, "SVM regularization")->capture_default_str();
  train_cmd->add_option("--displaced", train.displaced, "Displaced negatives per positive")->capture_default_str();
  train_cmd->add_option("--scorer", train.scorer, "Train the hypothesis scorer")->capture_default_str();

  BootstrapArgs boot;
  auto* boot_cmd = app.add_subcommand("bootstrap", "Harvest weakly labelled patches with a HOG model");
  boot_cmd->add_option("--corpus", boot.corpus)->required()->check(CLI::ExistingFile);
  boot_cmd->add_option("--model", boot.model)->required()->check(CLI::ExistingFile);
  boot_cmd->add_option("--per-class-max", boot.per_class_max)->capture_default_str();
  boot_cmd->add_option("--bg-ratio", boot.bg_ratio)->capture_default_str();
  boot_cmd->add_option("--jitter-copies", boot.jitter_copies, "Jittered copies per harvested window")
      ->capture_default_str();

  CnnArgs cnn;
  auto* cnn_cmd = app.add_subcommand("train-cnn", "Train the PDF network on a patch store");
  cnn_cmd->add_option("--patches", cnn.patches, "Patch store directory")->required()->check(CLI::ExistingDirectory);
  cnn_cmd->add_option("--classes", cnn.classes, "Poselet classes (default: from labels)");
  cnn_cmd->add_option("--epochs", cnn.epochs)->capture_default_str();
  cnn_cmd->add_option("--learning-rate", cnn.learning_rate)->capture_default_str();
  cnn_cmd->add_option("--batch", cnn.batch)->capture_default_str();

  DetectArgs det;
  auto* det_cmd = app.add_subcommand("detect", "Detect persons on every image of a manifest");
  det_cmd->add_option("--corpus", det.corpus)->required()->check(CLI::ExistingFile);
  det_cmd->add_option("--model", det.model)->required()->check(CLI::ExistingFile);
  det_cmd->add_option("--stride", det.cfg.stride)->capture_default_str();
  det_cmd->add_option("--threshold", det.cfg.threshold)->capture_default_str();
  det_cmd->add_option("--nms-iou", det.cfg.nms_iou)->capture_default_str();
  det_cmd->add_option("--cluster-iou", det.cfg.cluster_iou)->capture_default_str();
  det_cmd->add_option("--final-nms-iou", det.cfg.final_nms_iou)->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Average precision of detections against a manifest");
  eval_cmd->add_option("--detections", ev.detections)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", ev.corpus)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ap-mode", ev.ap_mode)->check(CLI::IsMember({"cont", "11pt"}))->capture_default_str();
  eval_cmd->add_option("--iou", ev.iou)->capture_default_str();

  JitterArgs jit;
  auto* jit_cmd = app.add_subcommand("exp-jitter", "HOG vs PDF on jittered patches over a halving schedule");
  jit_cmd->add_option("--corpus", jit.corpus)->required()->check(CLI::ExistingFile);
  jit_cmd->add_option("--network", jit.network)->required()->check(CLI::ExistingFile);
  jit_cmd->add_option("--poselet", jit.poselet)->capture_default_str();
  jit_cmd->add_option("--rows", jit.cfg.rows)->capture_default_str();
  jit_cmd->add_option("--top-positives", jit.cfg.top_positives)->capture_default_str();
  jit_cmd->add_option("--top-negatives", jit.cfg.top_negatives)->capture_default_str();
  jit_cmd->add_option("--test-positives", jit.cfg.test_positives)->capture_default_str();
  jit_cmd->add_option("--test-negatives", jit.cfg.test_negatives)->capture_default_str();
  jit_cmd->add_option("--lambda", jit.cfg.svm.lambda, "SVM regularisation of the linear probes")->capture_default_str();

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("exp-compare", "HOG vs PDF AP against training-set fraction");
  cmp_cmd->add_option("--corpus", cmp.corpus)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--network", cmp.network)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--poselets", cmp.poselets, "Poselet names (default: all)");
  cmp_cmd->add_option("--max-positives", cmp.cfg.max_positives)->capture_default_str();
  cmp_cmd->add_option("--fractions", cmp.cfg.fractions, "Training-set fractions, comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen, common);
    if (*train_cmd) return run_train(train, common);
    if (*boot_cmd) return run_bootstrap(boot, common);
    if (*cnn_cmd) return run_train_cnn(cnn, common);
    if (*det_cmd) return run_detect(det, common);
    if (*eval_cmd) return run_eval(ev, common);
    if (*jit_cmd) return run_exp_jitter(jit, common);
    if (*cmp_cmd) return run_exp_compare(cmp, common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numeric_failure(e.code()) ? kNumeric : kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
