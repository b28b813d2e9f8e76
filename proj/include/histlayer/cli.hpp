#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "histlayer/experiment.hpp"
#include "histlayer/gradcheck.hpp"
#include "histlayer/synthtex.hpp"

namespace histlayer {

namespace detail {

inline SplitData& pick_split(DataSplits& splits, Split which) {
  switch (which) {
    case Split::kTrain: return splits.train;
    case Split::kVal: return splits.val;
    case Split::kTest: return splits.test;
  }
  throw std::logic_error("pick_split: unknown split");
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"localized learnable histogram layers: synthetic texture benchmark tools"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic texture dataset");
  int gen_size = 7;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--size", gen_size, "image side")->check(CLI::IsMember({3, 7}));
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "run a multi-seed experiment from a JSON config");
  std::string train_config, train_out;
  train_cmd->add_option("--config", train_config, "experiment config JSON")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint JSON")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--out", eval_out, "directory for eval.json");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of all three architectures");
  std::uint64_t gc_seed = 0;
  double gc_step = 1e-5, gc_tol = 1e-5;
  gc_cmd->add_option("--seed", gc_seed, "seed for weights and the probe batch");
  gc_cmd->add_option("--step", gc_step, "central difference step");
  gc_cmd->add_option("--tol", gc_tol, "max relative error per parameter group");

  // fdr
  auto* fdr_cmd = app.add_subcommand("fdr", "per-class log Fisher discriminant ratio of a checkpoint's features");
  std::string fdr_ckpt, fdr_data, fdr_split = "test", fdr_out;
  fdr_cmd->add_option("--checkpoint", fdr_ckpt, "checkpoint JSON")->required();
  fdr_cmd->add_option("--data", fdr_data, "dataset directory")->required();
  fdr_cmd->add_option("--split", fdr_split, "train|val|test");
  fdr_cmd->add_option("--out", fdr_out, "directory for fdr.json");

  // report
  auto* report_cmd = app.add_subcommand("report", "merge per-seed CSVs from experiment directories");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report_cmd->add_option("dirs", report_dirs, "experiment directories")->required();
  report_cmd->add_option("--out", report_out, "output JSON file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      Dataset d = generate_dataset(gen_size, gen_seed);
      write_dataset(d, gen_out);
      std::printf("wrote %zu images (%dx%d, seed %llu) to %s\n", d.samples.size(), gen_size,
                  gen_size, static_cast<unsigned long long>(gen_seed), gen_out.c_str());
    } else if (*train_cmd) {
      std::ifstream in(train_config);
      if (!in) throw std::runtime_error("cannot open config " + train_config);
      ExperimentConfig cfg = config_from_json(nlohmann::json::parse(in));
      MetricsReport report = run_experiment(cfg);
      write_report_files(report, cfg.label, train_out);
      std::printf("%s: %.2f%% +- %.2f%% over %zu seeds (%.1fs)\n", report.experiment.c_str(),
                  report.mean_acc, report.std_acc, report.seeds.size(), report.runtime_s);
    } else if (*eval_cmd) {
      LoadedCheckpoint ckpt = load_checkpoint(eval_ckpt);
      Dataset d = load_dataset(eval_data);
      DataSplits splits = make_splits(d, ckpt.label);
      SplitData& split = detail::pick_split(splits, split_from_string(eval_split));
      EvalResult ev = evaluate(ckpt.model, split);
      ConfusionMatrix cm = confusion(ev.predictions, split.labels, ckpt.model.spec.num_classes);
      std::printf("%s split: loss %.6f, accuracy %.2f%% (%d samples)\n", eval_split.c_str(),
                  ev.loss, ev.accuracy_pct, split.count());
      if (!eval_out.empty()) {
        std::filesystem::create_directories(eval_out);
        std::vector<std::vector<long long>> counts(cm.classes);
        for (int t = 0; t < cm.classes; ++t) {
          counts[t].resize(cm.classes);
          for (int p = 0; p < cm.classes; ++p) counts[t][p] = cm.at(t, p);
        }
        nlohmann::json j{{"split", eval_split},
                         {"loss", ev.loss},
                         {"accuracy", ev.accuracy_pct},
                         {"confusion", counts}};
        std::ofstream out(std::filesystem::path(eval_out) / "eval.json");
        out << j.dump(2) << "\n";
      }
    } else if (*gc_cmd) {
      SplitMix64 rng(hash64(gc_seed, 99));
      Tensor batch(8, 1, 7, 7);
      for (auto& v : batch.values()) v = rng.next_double();
      std::vector<int> labels(8);
      for (auto& l : labels) l = static_cast<int>(rng.below(9));
      bool all_passed = true;
      double worst = 0.0;
      for (ModelVariant variant :
           {ModelVariant::kConvOnly, ModelVariant::kHistOnly, ModelVariant::kCombination}) {
        Model m = build_model(synthetic_model_spec(variant), gc_seed);
        GradCheckReport r = finite_diff_check(m, batch, labels, gc_step, gc_tol);
        for (const auto& g : r.groups) {
          std::printf("%-12s %-13s %.3e\n", variant_to_string(variant).c_str(), g.group.c_str(),
                      g.rel_err);
        }
        all_passed = all_passed && r.passed;
        worst = std::max(worst, r.max_rel_err);
      }
      std::printf("max relative error %.3e (tol %.1e): %s\n", worst, gc_tol,
                  all_passed ? "PASS" : "FAIL");
      return all_passed ? 0 : 1;
    } else if (*fdr_cmd) {
      LoadedCheckpoint ckpt = load_checkpoint(fdr_ckpt);
      Dataset d = load_dataset(fdr_data);
      DataSplits splits = make_splits(d, ckpt.label);
      SplitData& split = detail::pick_split(splits, split_from_string(fdr_split));
      Tensor feats = extract_features(ckpt.model, split.images);
      std::vector<double> log_fdr = fdr_per_class(feats, split.labels, ckpt.model.spec.num_classes);
      for (std::size_t c = 0; c < log_fdr.size(); ++c) {
        std::printf("class %zu: log FDR %.4f\n", c, log_fdr[c]);
      }
      if (!fdr_out.empty()) {
        std::filesystem::create_directories(fdr_out);
        std::ofstream out(std::filesystem::path(fdr_out) / "fdr.json");
        out << nlohmann::json{{"split", fdr_split}, {"log_fdr", log_fdr}}.dump(2) << "\n";
      }
    } else if (*report_cmd) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      nlohmann::json merged = merge_reports(dirs);
      if (report_out.empty()) {
        std::cout << merged.dump(2) << "\n";
      } else {
        std::ofstream out(report_out);
        if (!out) throw std::runtime_error("cannot open " + report_out);
        out << merged.dump(2) << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace histlayer
