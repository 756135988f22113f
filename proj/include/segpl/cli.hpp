/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SEGPL_CLI_HPP_
#define SEGPL_CLI_HPP_

// Command-line front end: generate, train, eval, ood, attack, uncertainty.
// Every command writes its outputs plus one manifest.json into a run
// directory; `--from-manifest` replays a recorded command.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "segpl/checkpoint.hpp"
#include "segpl/datagen.hpp"
#include "segpl/error.hpp"
#include "segpl/evalsuite.hpp"
#include "segpl/trainer.hpp"

#ifndef SEGPL_VERSION
#define SEGPL_VERSION "0.1.0"
#endif

namespace segpl::cli {

namespace fs = std::filesystem;

inline constexpr const char* kOutputRootEnv = "SEGPL_OUTPUT_ROOT";
inline constexpr const char* kRunManifest = "manifest.json";

inline fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream os(p);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("failed to write " + p.string());
}

/// Exclusive use of a run directory for the lifetime of the object.
class RunDirectory {
 public:
  RunDirectory(fs::path dir, bool force) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create " + dir_.string() + ": " + ec.message());
    lock_ = dir_ / ".lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) throw ConfigError("run directory " + dir_.string() + " is locked by another process");
    std::fclose(f);
    if (fs::exists(dir_ / kRunManifest)) {
      if (!force) {
        fs::remove(lock_);
        throw ConfigError("run directory " + dir_.string() +
                          " already holds a manifest (use --force to replace the run)");
      }
      fs::remove(dir_ / kRunManifest);
    }
  }
  ~RunDirectory() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
  fs::path lock_;
};

/// Accumulates the run manifest; written once when the command finishes.
struct Manifest {
  nlohmann::json j;

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    j = {{"command", command},
         {"argv", argv},
         {"code_version", SEGPL_VERSION},
         {"started_at", utc_now()},
         {"outputs", nlohmann::json::object()},
         {"metrics", nlohmann::json::object()}};
  }
  void output(const std::string& key, const fs::path& p) { j["outputs"][key] = p.string(); }
  void write(const fs::path& dir) {
    j["finished_at"] = utc_now();
    write_json(dir / kRunManifest, j);
  }
};

inline std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("cannot parse ") + what + " value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

inline fs::path absolute_path(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

/// Options shared by the evaluation commands.
struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  bool force = false;
  std::optional<double> threshold;
  bool posterior_mean = false;
};

inline void add_eval_options(CLI::App* app, EvalOptions& o) {
  app->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  app->add_option("--data", o.data, "Dataset directory")->required();
  app->add_option("--out", o.out, "Run directory");
  app->add_flag("--force", o.force, "Replace an existing run in --out");
  app->add_option("--threshold", o.threshold, "Fixed binarisation threshold");
  app->add_flag("--posterior-mean", o.posterior_mean, "Binarise at the learned posterior mean");
}

struct Loaded {
  Checkpoint ck;
  Dataset data;
  ThresholdMode mode;
};

inline Loaded load_for_eval(const EvalOptions& o) {
  if (!fs::exists(o.checkpoint)) throw DataError("checkpoint " + o.checkpoint + " not found");
  Loaded l{load_checkpoint(o.checkpoint), ingest(o.data), {}};
  if (o.threshold && o.posterior_mean) {
    throw ConfigError("--threshold and --posterior-mean are mutually exclusive");
  }
  l.mode = o.threshold ? ThresholdMode::fixed(static_cast<float>(*o.threshold))
           : o.posterior_mean ? ThresholdMode::posterior_mean()
                              : default_threshold_mode(l.ck.config);
  if (l.mode.kind == ThresholdMode::Kind::kFixed && !(l.mode.value > 0.0f && l.mode.value < 1.0f)) {
    throw ConfigError("--threshold must lie in (0, 1)");
  }
  if (l.mode.kind == ThresholdMode::Kind::kPosteriorMean && !l.ck.model.has_threshold_head()) {
    throw CapabilityError("--posterior-mean needs a checkpoint with a threshold head");
  }
  return l;
}

inline fs::path run_dir(const std::string& out, const std::string& fallback) {
  return out.empty() ? output_root() / fallback : fs::path(out);
}

inline nlohmann::json sweep_json(const std::string& key, const std::vector<SweepPoint>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : pts) {
    a.push_back({{key, p.strength}, {"mean_iou", p.report.summary.mean},
                 {"std_iou", p.report.summary.std}, {"cases", p.report.summary.cases}});
  }
  return a;
}

int run(std::vector<std::string> args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

namespace detail {

inline std::vector<std::string> replay_args(const fs::path& manifest_path,
                                            const std::vector<std::string>& overrides) {
  const nlohmann::json m = read_json(manifest_path);
  if (!m.contains("argv") || !m["argv"].is_array()) {
    throw ConfigError(manifest_path.string() + " has no recorded argv");
  }
  std::vector<std::string> argv = m["argv"].get<std::vector<std::string>>();
  // Drop the recorded output location and --force; the caller decides those.
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--out") {
      ++i;
      continue;
    }
    if (argv[i].rfind("--out=", 0) == 0 || argv[i] == "--force") continue;
    kept.push_back(argv[i]);
  }
  kept.insert(kept.end(), overrides.begin(), overrides.end());
  return kept;
}

/// Rewrites path-valued options to absolute paths so a manifest is enough
/// to relaunch the command from anywhere.
inline std::vector<std::string> absolutise(std::vector<std::string> argv) {
  static const std::vector<std::string> path_opts = {"--data", "--config", "--checkpoint",
                                                     "--baseline", "--out"};
  for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
    if (std::find(path_opts.begin(), path_opts.end(), argv[i]) != path_opts.end()) {
      argv[i + 1] = absolute_path(argv[i + 1]).string();
    }
  }
  return argv;
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudo-label EM for semi-supervised segmentation", "segpl"};
  app.require_subcommand(0, 1);
  std::string from_manifest;
  std::string replay_out;
  bool replay_force = false;
  app.add_option("--from-manifest", from_manifest, "Re-run the command recorded in a manifest");
  app.add_option("--replay-out", replay_out, "Run directory for --from-manifest");
  app.add_flag("--replay-force", replay_force, "Replace an existing run for --from-manifest");

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  std::string gen_preset = "synthetic-fast", gen_config, gen_out;
  bool gen_force = false;
  std::optional<std::uint64_t> gen_seed;
  std::optional<double> gen_noise;
  std::optional<int> gen_size, gen_classes, gen_nl, gen_nu, gen_nv, gen_nt;
  std::optional<std::string> gen_texture;
  gen->add_option("--preset", gen_preset, "Dataset preset");
  gen->add_option("--config", gen_config, "JSON file mirroring the synthetic config");
  gen->add_option("--out", gen_out, "Output dataset directory");
  gen->add_flag("--force", gen_force, "Replace an existing dataset");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--noise-std", gen_noise);
  gen->add_option("--image-size", gen_size);
  gen->add_option("--num-classes", gen_classes);
  gen->add_option("--n-labelled", gen_nl);
  gen->add_option("--n-unlabelled", gen_nu);
  gen->add_option("--n-val", gen_nv);
  gen->add_option("--n-test", gen_nt);
  gen->add_option("--texture", gen_texture);

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_data, tr_preset, tr_config, tr_out;
  bool tr_force = false;
  std::optional<std::string> tr_variant, tr_prior;
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_steps, tr_batch, tr_ratio, tr_base, tr_depth, tr_val_every;
  std::optional<double> tr_lr, tr_alpha, tr_warmup, tr_threshold, tr_kl;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--preset", tr_preset, "brats-paper | carve-paper | synthetic-fast");
  tr->add_option("--config", tr_config, "JSON file mirroring the training config");
  tr->add_option("--out", tr_out, "Run directory");
  tr->add_flag("--force", tr_force);
  tr->add_option("--variant", tr_variant, "segpl | segpl_vi | supervised_only");
  tr->add_option("--prior", tr_prior, "Threshold prior as mu,sigma");
  tr->add_option("--seed", tr_seed);
  tr->add_option("--steps", tr_steps);
  tr->add_option("--batch", tr_batch);
  tr->add_option("--ratio", tr_ratio);
  tr->add_option("--lr", tr_lr);
  tr->add_option("--alpha", tr_alpha);
  tr->add_option("--warmup", tr_warmup, "alpha warm-up fraction");
  tr->add_option("--fixed-threshold", tr_threshold);
  tr->add_option("--kl-weight", tr_kl);
  tr->add_option("--base-width", tr_base);
  tr->add_option("--depth", tr_depth);
  tr->add_option("--val-every", tr_val_every);

  // evaluation commands
  EvalOptions ev_o, ood_o, att_o, unc_o;
  auto* ev = app.add_subcommand("eval", "Test-set IoU");
  add_eval_options(ev, ev_o);
  std::string ev_baseline;
  ev->add_option("--baseline", ev_baseline, "Per-case CSV of another model for Bland-Altman");

  auto* ood = app.add_subcommand("ood", "Out-of-distribution gamma sweep");
  add_eval_options(ood, ood_o);
  std::string ood_gammas = "0,0.25,0.5,0.75,1", ood_contrast = "0.5,1.5";
  double ood_noise = 0.3;
  std::uint64_t ood_seed = 0;
  ood->add_option("--gammas", ood_gammas);
  ood->add_option("--contrast", ood_contrast, "lo,hi multiplicative contrast range");
  ood->add_option("--noise-std", ood_noise);
  ood->add_option("--seed", ood_seed);

  auto* att = app.add_subcommand("attack", "FGSM epsilon sweep");
  add_eval_options(att, att_o);
  std::string att_eps = "0,0.005,0.01,0.02";
  att->add_option("--epsilons", att_eps);

  auto* unc = app.add_subcommand("uncertainty", "Monte-Carlo threshold uncertainty");
  add_eval_options(unc, unc_o);
  int unc_samples = kDefaultMcSamples;
  std::uint64_t unc_seed = 0;
  unc->add_option("--samples", unc_samples);
  unc->add_option("--seed", unc_seed);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (!from_manifest.empty()) {
      if (!app.get_subcommands().empty()) {
        throw ConfigError("--from-manifest cannot be combined with a subcommand");
      }
      std::vector<std::string> extra;
      if (!replay_out.empty()) extra = {"--out", replay_out};
      if (replay_force) extra.push_back("--force");
      return run(detail::replay_args(from_manifest, extra), out, err);
    }
    if (app.get_subcommands().empty()) {
      out << app.help();
      return static_cast<int>(ExitCode::kConfig);
    }
    // Recorded with the subcommand first and absolute paths.
    const std::vector<std::string> recorded = detail::absolutise(args);

    if (gen->parsed()) {
      SynthConfig sc = SynthConfig::preset(gen_preset);
      if (!gen_config.empty()) {
        nlohmann::json j = sc;
        j.update(read_json(gen_config));
        try {
          sc = j.get<SynthConfig>();
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(std::string("bad synthetic config: ") + e.what());
        }
      }
      if (gen_seed) sc.seed = *gen_seed;
      if (gen_noise) sc.noise_std = *gen_noise;
      if (gen_size) sc.image_size = *gen_size;
      if (gen_classes) sc.num_classes = *gen_classes;
      if (gen_nl) sc.n_labelled = *gen_nl;
      if (gen_nu) sc.n_unlabelled = *gen_nu;
      if (gen_nv) sc.n_val = *gen_nv;
      if (gen_nt) sc.n_test = *gen_nt;
      if (gen_texture) sc.texture = texture_from_string(*gen_texture);
      sc.validate();
      const fs::path dir = gen_out.empty() ? output_root() / "data" / gen_preset : fs::path(gen_out);
      const fs::path manifest = generate(sc, dir, gen_force);
      out << absolute_path(manifest).string() << "\n";
      return 0;
    }

    if (tr->parsed()) {
      TrainConfig tc = tr_preset.empty() ? TrainConfig{} : TrainConfig::preset(tr_preset);
      if (!tr_config.empty()) merge_json(read_json(tr_config), tc);
      if (tr_variant) tc.variant = variant_from_string(*tr_variant);
      if (tr_prior) {
        const auto p = parse_list(*tr_prior, "--prior");
        if (p.size() != 2) throw ConfigError("--prior expects mu,sigma");
        tc.prior = {p[0], p[1]};
      }
      if (tr_seed) tc.seed = *tr_seed;
      if (tr_steps) tc.total_steps = *tr_steps;
      if (tr_batch) tc.batch_size_labelled = *tr_batch;
      if (tr_ratio) tc.ratio_unlabelled = *tr_ratio;
      if (tr_lr) tc.learning_rate = *tr_lr;
      if (tr_alpha) tc.alpha = *tr_alpha;
      if (tr_warmup) tc.alpha_warmup_fraction = *tr_warmup;
      if (tr_threshold) tc.fixed_threshold = *tr_threshold;
      if (tr_kl) tc.kl_weight = *tr_kl;
      if (tr_base) tc.base_width = *tr_base;
      if (tr_depth) tc.depth = *tr_depth;
      if (tr_val_every) tc.val_every = *tr_val_every;
      tc.validate();

      const Dataset data = ingest(tr_data);
      if (data.labelled.size() == 0) throw DataError("dataset " + tr_data + " has no labelled split");
      RunDirectory rd(run_dir(tr_out, "train-" + to_string(tc.variant) + "-seed" +
                                          std::to_string(tc.seed)),
                      tr_force);
      Manifest m("train", recorded);
      m.j["config"] = tc;
      m.j["seed"] = tc.seed;
      m.j["preset"] = tr_preset;
      m.j["data"] = absolute_path(tr_data).string();

      UNet<float> model(tc.model_config(data.labelled.images.c(), data.num_classes()));
      model.check_input(data.labelled.images.shape());
      TrainResult result;
      try {
        result = train(model, data, tc);
      } catch (const TrainingDiverged& e) {
        const fs::path last = rd.path() / "last.ckpt";
        save_checkpoint(last, model, tc, {{"step", e.step()}});
        m.output("last_checkpoint", last);
        m.j["error"] = e.what();
        m.write(rd.path());
        err << "error: " << e.what() << "\nlast good parameters saved to " << last.string() << "\n";
        return static_cast<int>(ExitCode::kNumeric);
      }
      const fs::path final_ck = rd.path() / "final.ckpt";
      const fs::path log_csv = rd.path() / "train_log.csv";
      save_checkpoint(final_ck, model, tc, {{"step", tc.total_steps - 1}});
      result.log.write_csv(log_csv);
      m.output("final_checkpoint", final_ck);
      m.output("train_log", log_csv);
      if (!result.best_state.empty()) {
        UNet<float> best(model.config());
        best.load_state(result.best_state);
        const fs::path best_ck = rd.path() / "best.ckpt";
        save_checkpoint(best_ck, best, tc, {{"step", result.best_step}});
        m.output("best_checkpoint", best_ck);
        m.j["metrics"]["best_val_iou"] = *result.best_val_iou;
        m.j["metrics"]["best_step"] = result.best_step;
      }
      const auto& lastrec = result.log.records.back();
      m.j["metrics"]["final_loss"] = lastrec.loss.total;
      m.j["metrics"]["final_supervised"] = lastrec.loss.supervised;
      m.j["metrics"]["final_unsupervised"] = lastrec.loss.unsupervised;
      m.write(rd.path());
      out << absolute_path(rd.path() / kRunManifest).string() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      Loaded l = load_for_eval(ev_o);
      RunDirectory rd(run_dir(ev_o.out, "eval"), ev_o.force);
      Manifest m("eval", recorded);
      const EvalReport r = evaluate_iou(l.ck.model, l.data.test, l.mode);
      r.write_csv(rd.path() / "per_case.csv");
      m.output("per_case", rd.path() / "per_case.csv");
      nlohmann::json summary = r.summary_json();
      summary["threshold_mode"] = l.mode.str();
      if (!ev_baseline.empty()) {
        EvalReport base;
        std::ifstream is(ev_baseline);
        if (!is) throw DataError("cannot open baseline " + ev_baseline);
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          const auto comma = line.rfind(',');
          if (comma == std::string::npos) throw FormatError("bad baseline row '" + line + "'");
          const std::string v = line.substr(comma + 1);
          base.per_case.push_back(v.empty() ? std::nullopt : std::optional<double>(std::stod(v)));
        }
        csv::Writer w(rd.path() / "bland_altman.csv", {"mean", "difference"});
        for (const auto& [mean, diff] : bland_altman(r, base)) {
          w.row({csv::number(mean), csv::number(diff)});
        }
        m.output("bland_altman", rd.path() / "bland_altman.csv");
      }
      write_json(rd.path() / "summary.json", summary);
      m.output("summary", rd.path() / "summary.json");
      m.j["metrics"] = summary;
      m.write(rd.path());
      out << "mean IoU " << r.summary.mean << " +- " << r.summary.std << " over "
          << r.summary.cases << " cases\n";
      return 0;
    }

    if (ood->parsed()) {
      Loaded l = load_for_eval(ood_o);
      PerturbConfig pc;
      pc.gamma_grid = parse_list(ood_gammas, "--gammas");
      const auto cr = parse_list(ood_contrast, "--contrast");
      if (cr.size() != 2) throw ConfigError("--contrast expects lo,hi");
      pc.contrast_range = {cr[0], cr[1]};
      pc.noise_std = ood_noise;
      pc.seed = ood_seed;
      RunDirectory rd(run_dir(ood_o.out, "ood"), ood_o.force);
      Manifest m("ood", recorded);
      const auto pts = ood_sweep(l.ck.model, l.data.test, pc, l.mode);
      write_sweep_csv(rd.path() / "ood_curve.csv", "gamma", pts);
      m.output("curve", rd.path() / "ood_curve.csv");
      m.j["metrics"]["curve"] = sweep_json("gamma", pts);
      m.write(rd.path());
      for (const auto& p : pts) out << "gamma " << p.strength << " IoU " << p.report.summary.mean << "\n";
      return 0;
    }

    if (att->parsed()) {
      Loaded l = load_for_eval(att_o);
      AttackConfig ac;
      ac.epsilon_grid = parse_list(att_eps, "--epsilons");
      ac.validate();
      RunDirectory rd(run_dir(att_o.out, "attack"), att_o.force);
      Manifest m("attack", recorded);
      const auto pts = fgsm_sweep(l.ck.model, l.data.test, ac, l.mode);
      write_sweep_csv(rd.path() / "attack_curve.csv", "epsilon", pts);
      m.output("curve", rd.path() / "attack_curve.csv");
      m.j["metrics"]["curve"] = sweep_json("epsilon", pts);
      m.write(rd.path());
      for (const auto& p : pts) out << "epsilon " << p.strength << " IoU " << p.report.summary.mean << "\n";
      return 0;
    }

    if (unc->parsed()) {
      Loaded l = load_for_eval(unc_o);
      if (!l.ck.model.has_threshold_head()) {
        throw CapabilityError("checkpoint " + unc_o.checkpoint +
                              " was not trained with segpl_vi and has no threshold head");
      }
      RunDirectory rd(run_dir(unc_o.out, "uncertainty"), unc_o.force);
      Manifest m("uncertainty", recorded);
      const UncertaintyResult r = mc_uncertainty(l.ck.model, l.data.test, unc_samples, unc_seed);
      const fs::path maps = rd.path() / "frequency";
      fs::create_directories(maps);
      for (int b = 0; b < r.frequency.n(); ++b) {
        const std::string id = b < int(l.data.test.ids.size()) ? l.data.test.ids[b] : std::to_string(b);
        write_array(maps / (id + "_frequency"), r.frequency.slice(b, 1), ArrayKind::kImage);
        write_array(maps / (id + "_prob"), r.mean_prob.tensor().slice(b, 1), ArrayKind::kImage);
      }
      const nlohmann::json summary = {{"brier", r.brier}, {"samples", r.samples}, {"seed", unc_seed}};
      write_json(rd.path() / "summary.json", summary);
      m.output("summary", rd.path() / "summary.json");
      m.output("maps", maps);
      m.j["metrics"] = summary;
      m.write(rd.path());
      out << "Brier " << r.brier << " with " << r.samples << " samples\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}

}  // namespace segpl::cli

#endif  // SEGPL_CLI_HPP_
