// famnet command-line tool: synthesize data, train and evaluate branches,
// run the ablation grid, and re-emit reports.

#include <omp.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "famnet/famnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void setup_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FAMNET_THREADS")) n = std::max(1, std::atoi(env));
  Eigen::setNbThreads(n);
  omp_set_num_threads(n);
}

std::string resolve_out(const std::string& out) {
  if (out.empty() || fs::path(out).is_absolute()) return out;
  if (const char* root = std::getenv("FAMNET_OUT_ROOT"))
    return (fs::path(root) / out).string();
  return out;
}

void write_resolved_config(const std::string& out_dir, const std::string& command,
                           const json& resolved, const std::vector<std::string>& overrides) {
  fs::create_directories(out_dir);
  json j;
  j["command"] = command;
  j["config"] = resolved;
  j["overrides"] = overrides;
  j["config_hash"] = famnet::config_hash(resolved);
  std::ofstream f((fs::path(out_dir) / "resolved_config.json").string());
  FAMNET_CHECK(f.good(), "cannot write resolved_config.json under '%s'", out_dir.c_str());
  f << j.dump(2) << "\n";
}

// Precedence: defaults < config file section < --set overrides < explicit flags.
json load_config_section(const std::string& config_path, const std::string& section,
                         const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    FAMNET_CHECK(f.good(), "cannot open config file '%s'", config_path.c_str());
    json file = json::parse(f);
    if (file.contains(section)) j = file.at(section);
  }
  for (const auto& kv : overrides) famnet::apply_override(j, kv);
  return j;
}

struct TrainCliFlags {
  std::string manifest, out, config;
  std::string branch = "2d", task = "dual", au_weights = "uniform";
  double lr = 1e-4, decay = 0.92;
  int epochs = 100, batch = 16, depth = 16, parallel = 1;
  double width = 1.0;
  uint64_t seed = 1;
  bool no_attention = false, no_apex_expand = false, no_augment = false;
  std::vector<std::string> overrides;
  std::string fold_subject;  // hidden: run exactly one fold
};

void add_train_flags(CLI::App* cmd, TrainCliFlags& f) {
  cmd->add_option("--manifest", f.manifest, "dataset manifest file")->required();
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--branch", f.branch, "2d|3d");
  cmd->add_option("--task", f.task, "single|dual");
  cmd->add_option("--lr", f.lr, "initial learning rate");
  cmd->add_option("--decay", f.decay, "exponential lr decay per epoch");
  cmd->add_option("--epochs", f.epochs, "training epochs per fold");
  cmd->add_option("--batch", f.batch, "batch size");
  cmd->add_option("--seed", f.seed, "base rng seed");
  cmd->add_option("--width", f.width, "backbone width multiplier");
  cmd->add_option("--depth", f.depth, "clip depth for the 3d branch");
  cmd->add_option("--au-weights", f.au_weights, "uniform|inverse_frequency");
  cmd->add_option("--parallel-folds", f.parallel, "fold worker processes");
  cmd->add_flag("--no-attention", f.no_attention, "plain backbone (baseline)");
  cmd->add_flag("--no-apex-expand", f.no_apex_expand, "disable apex-neighbor enrichment");
  cmd->add_flag("--no-augment", f.no_augment, "disable photometric augmentation");
  cmd->add_option("--config", f.config, "json config file");
  cmd->add_option("--set", f.overrides, "config override key=value")->take_all();
  cmd->add_option("--fold-subject", f.fold_subject)->group("");  // internal
}

json train_json_from_flags(const CLI::App* cmd, const TrainCliFlags& f) {
  json j = load_config_section(f.config, "train", f.overrides);
  auto set_if = [&](const char* flag, const char* key, const json& v) {
    if (cmd->count(flag) > 0) j[key] = v;
  };
  set_if("--branch", "branch", f.branch);
  set_if("--task", "task", f.task);
  set_if("--lr", "lr", f.lr);
  set_if("--decay", "lr_decay", f.decay);
  set_if("--epochs", "epochs", f.epochs);
  set_if("--batch", "batch_size", f.batch);
  set_if("--seed", "seed", f.seed);
  set_if("--width", "width", f.width);
  set_if("--depth", "clip_depth", f.depth);
  set_if("--au-weights", "au_weight_mode", f.au_weights);
  set_if("--parallel-folds", "parallel_folds", f.parallel);
  if (f.no_attention) j["use_attention"] = false;
  if (f.no_apex_expand) j["apex_expand"] = false;
  if (f.no_augment) j["augment"] = false;
  // pin every field in the resolved config
  json defaults = famnet::train_config_to_json(famnet::TrainConfig{});
  for (auto& [k, v] : defaults.items())
    if (!j.contains(k)) j[k] = v;
  return j;
}

// Runs fold workers as child processes, up to `parallel` at a time.
void run_parallel_folds(const std::vector<std::string>& subjects, int parallel, int argc,
                        char** argv) {
  std::vector<pid_t> running;
  auto wait_one = [&]() {
    int status = 0;
    pid_t pid = waitpid(-1, &status, 0);
    FAMNET_CHECK(pid > 0, "waitpid failed");
    FAMNET_CHECK(WIFEXITED(status) && WEXITSTATUS(status) == 0, "fold worker %d failed",
                 static_cast<int>(pid));
    running.erase(std::remove(running.begin(), running.end(), pid), running.end());
  };
  for (const auto& s : subjects) {
    while (static_cast<int>(running.size()) >= parallel) wait_one();
    pid_t pid = fork();
    FAMNET_CHECK(pid >= 0, "fork failed");
    if (pid == 0) {
      std::vector<char*> args;
      for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
      std::string flag = "--fold-subject";
      std::string val = s;
      args.push_back(flag.data());
      args.push_back(val.data());
      args.push_back(nullptr);
      execv("/proc/self/exe", args.data());
      _exit(127);
    }
    running.push_back(pid);
  }
  while (!running.empty()) wait_one();
}

int cmd_train(const CLI::App* cmd, const TrainCliFlags& flags, int argc, char** argv) {
  const std::string out = resolve_out(flags.out);
  json resolved = train_json_from_flags(cmd, flags);
  famnet::TrainConfig cfg = famnet::train_config_from_json(resolved);
  FAMNET_CHECK(cfg.branch != famnet::Branch::Fused,
               "train: the fused branch is evaluation-only; train 2d and 3d separately");

  famnet::Manifest manifest = famnet::Manifest::load(flags.manifest);
  famnet::FullFrameDetector detector;
  famnet::DatasetCache data(manifest, detector);

  if (!flags.fold_subject.empty()) {
    // internal single-fold mode used by --parallel-folds workers
    const auto folds = famnet::loso_folds(manifest);
    for (const auto& fold : folds)
      if (fold.test_subject == flags.fold_subject) {
        famnet::run_fold(cfg, data, fold,
                         (fs::path(out) / ("fold_" + fold.test_subject)).string());
        return 0;
      }
    throw famnet::Error(famnet::strformat("unknown fold subject '%s'", flags.fold_subject.c_str()));
  }

  write_resolved_config(out, "train", resolved, flags.overrides);
  famnet::MetricsReport report;
  if (cfg.parallel_folds > 1) {
    std::vector<std::string> subjects;
    for (const auto& fold : famnet::loso_folds(manifest)) subjects.push_back(fold.test_subject);
    run_parallel_folds(subjects, cfg.parallel_folds, argc, argv);
    report = famnet::aggregate_run_dir(data, out, famnet::config_hash(resolved));
  } else {
    report = famnet::run_loso(cfg, data, out);
  }
  famnet::logf("[train] done: pooled UAR=%.4f UF1=%.4f (fold-mean UAR=%.4f UF1=%.4f)\n",
               report.uar, report.uf1, report.uar_fold_mean, report.uf1_fold_mean);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_threads();
  CLI::App app{"famnet: dual-branch micro-expression recognition at desk scale"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out, synth_config;
  std::vector<std::string> synth_overrides;
  famnet::SyntheticSpec sspec;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--subjects", sspec.n_subjects, "number of subjects");
  synth->add_option("--per-subject", sspec.samples_per_subject, "samples per subject");
  synth->add_option("--frames", sspec.clip_len, "frames per clip");
  synth->add_option("--noise", sspec.noise_level, "pixel noise std");
  synth->add_option("--au-amplitude", sspec.au_amplitude, "peak AU blob brightness");
  synth->add_option("--distractors", sspec.distractors_per_subject, "distractor blobs per subject");
  synth->add_option("--distractor-strength", sspec.distractor_strength, "distractor amplitude");
  synth->add_option("--seed", sspec.rng_seed, "rng seed");
  synth->add_option("--width-px", sspec.image_w, "frame width");
  synth->add_option("--height-px", sspec.image_h, "frame height");
  synth->add_option("--config", synth_config, "json config file");
  synth->add_option("--set", synth_overrides, "config override key=value")->take_all();

  // --- train ---
  auto* train = app.add_subcommand("train", "LOSO training of one branch");
  TrainCliFlags tf;
  add_train_flags(train, tf);

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "evaluate a finished run (2d/3d/fused)");
  std::string ev_manifest, ev_out, ev_branch = "2d", ev_run, ev_run2d, ev_run3d;
  int ev_batch = 8;
  eval->add_option("--manifest", ev_manifest, "dataset manifest file")->required();
  eval->add_option("--out", ev_out, "output directory")->required();
  eval->add_option("--branch", ev_branch, "2d|3d|fused");
  eval->add_option("--run", ev_run, "run directory of a trained branch");
  eval->add_option("--ckpt2d", ev_run2d, "run directory of the trained 2d branch");
  eval->add_option("--ckpt3d", ev_run3d, "run directory of the trained 3d branch");
  eval->add_option("--batch", ev_batch, "evaluation batch size");

  // --- ablate ---
  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  std::string ab_manifest, ab_out, ab_rows = "baseline,single2d,dual2d,single3d,dual3d,famnet";
  std::string ab_config;
  std::vector<std::string> ab_overrides;
  ablate->add_option("--manifest", ab_manifest, "dataset manifest file")->required();
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->add_option("--rows", ab_rows, "comma-separated subset of rows");
  ablate->add_option("--config", ab_config, "json config file (train2d/train3d sections)");
  ablate->add_option("--set", ab_overrides, "override key=value (train2d.*/train3d.*)")
      ->take_all();

  // --- report ---
  auto* report = app.add_subcommand("report", "re-emit table and heatmap from metrics.json");
  std::string rp_metrics, rp_out;
  report->add_option("--metrics", rp_metrics, "metrics.json path")->required();
  report->add_option("--out", rp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion")
      return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) {
      const std::string out = resolve_out(synth_out);
      json j = load_config_section(synth_config, "synthetic", synth_overrides);
      // flags override file values
      auto set_if = [&](const char* flag, const char* key, const json& v) {
        if (synth->count(flag) > 0) j[key] = v;
      };
      set_if("--subjects", "n_subjects", sspec.n_subjects);
      set_if("--per-subject", "samples_per_subject", sspec.samples_per_subject);
      set_if("--frames", "clip_len", sspec.clip_len);
      set_if("--noise", "noise_level", sspec.noise_level);
      set_if("--au-amplitude", "au_amplitude", sspec.au_amplitude);
      set_if("--distractors", "distractors_per_subject", sspec.distractors_per_subject);
      set_if("--distractor-strength", "distractor_strength", sspec.distractor_strength);
      set_if("--seed", "rng_seed", sspec.rng_seed);
      set_if("--width-px", "image_w", sspec.image_w);
      set_if("--height-px", "image_h", sspec.image_h);
      famnet::SyntheticSpec spec;
      spec.n_subjects = j.value("n_subjects", spec.n_subjects);
      spec.samples_per_subject = j.value("samples_per_subject", spec.samples_per_subject);
      spec.clip_len = j.value("clip_len", spec.clip_len);
      spec.noise_level = j.value("noise_level", spec.noise_level);
      spec.au_amplitude = j.value("au_amplitude", spec.au_amplitude);
      spec.distractors_per_subject =
          j.value("distractors_per_subject", spec.distractors_per_subject);
      spec.distractor_strength = j.value("distractor_strength", spec.distractor_strength);
      spec.rng_seed = j.value("rng_seed", spec.rng_seed);
      spec.image_w = j.value("image_w", spec.image_w);
      spec.image_h = j.value("image_h", spec.image_h);
      json resolved = {{"n_subjects", spec.n_subjects},
                       {"samples_per_subject", spec.samples_per_subject},
                       {"clip_len", spec.clip_len},
                       {"noise_level", spec.noise_level},
                       {"au_amplitude", spec.au_amplitude},
                       {"distractors_per_subject", spec.distractors_per_subject},
                       {"distractor_strength", spec.distractor_strength},
                       {"rng_seed", spec.rng_seed},
                       {"image_w", spec.image_w},
                       {"image_h", spec.image_h}};
      famnet::Manifest m = famnet::generate_synthetic(spec, out);
      write_resolved_config(out, "synth", resolved, synth_overrides);
      famnet::logf("[synth] wrote %zu samples under %s\n", m.entries.size(), out.c_str());
      return 0;
    }
    if (train->parsed()) return cmd_train(train, tf, argc, argv);
    if (eval->parsed()) {
      const std::string out = resolve_out(ev_out);
      famnet::Manifest manifest = famnet::Manifest::load(ev_manifest);
      famnet::FullFrameDetector detector;
      famnet::DatasetCache data(manifest, detector);
      famnet::MetricsReport rep;
      if (ev_branch == "fused") {
        FAMNET_CHECK(!ev_run2d.empty(), "eval: fused mode requires --ckpt2d (2d run directory)");
        FAMNET_CHECK(!ev_run3d.empty(), "eval: fused mode requires --ckpt3d (3d run directory)");
        rep = famnet::eval_fused_runs(data, ev_run2d, ev_run3d, out, ev_batch);
      } else {
        FAMNET_CHECK(!ev_run.empty(), "eval: --run is required for branch %s", ev_branch.c_str());
        rep = famnet::reeval_run(data, ev_run, out, ev_batch);
      }
      write_resolved_config(out, "eval",
                            json{{"branch", ev_branch},
                                 {"run", ev_run},
                                 {"ckpt2d", ev_run2d},
                                 {"ckpt3d", ev_run3d},
                                 {"batch", ev_batch}},
                            {});
      famnet::logf("[eval] pooled UAR=%.4f UF1=%.4f\n", rep.uar, rep.uf1);
      return 0;
    }
    if (ablate->parsed()) {
      const std::string out = resolve_out(ab_out);
      famnet::Manifest manifest = famnet::Manifest::load(ab_manifest);
      famnet::FullFrameDetector detector;
      famnet::DatasetCache data(manifest, detector);
      famnet::AblationSpec spec;
      json whole = json::object();
      if (!ab_config.empty()) {
        std::ifstream cf(ab_config);
        FAMNET_CHECK(cf.good(), "ablate: cannot open config '%s'", ab_config.c_str());
        whole = json::parse(cf);
      }
      // overrides addressed as train2d.key / train3d.key
      for (const auto& kv : ab_overrides) famnet::apply_override(whole, kv);
      json j2f = whole.value("train2d", json::object());
      json j3f = whole.value("train3d", json::object());
      j2f["branch"] = "2d";
      j3f["branch"] = "3d";
      spec.base2d = famnet::train_config_from_json(j2f);
      spec.base3d = famnet::train_config_from_json(j3f);
      spec.rows.clear();
      std::istringstream rows(ab_rows);
      std::string row;
      while (std::getline(rows, row, ','))
        if (!row.empty()) spec.rows.push_back(row);
      write_resolved_config(out, "ablate",
                            json{{"train2d", famnet::train_config_to_json(spec.base2d)},
                                 {"train3d", famnet::train_config_to_json(spec.base3d)},
                                 {"rows", spec.rows}},
                            ab_overrides);
      famnet::run_ablation(spec, data, out);
      return 0;
    }
    if (report->parsed()) {
      const std::string out = resolve_out(rp_out);
      std::ifstream f(rp_metrics);
      FAMNET_CHECK(f.good(), "report: cannot open '%s'", rp_metrics.c_str());
      famnet::MetricsReport rep = famnet::report_from_json(json::parse(f));
      famnet::emit_report(rep, out);
      famnet::logf("[report] UAR=%.4f UF1=%.4f -> %s\n", rep.uar, rep.uf1, out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
