#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "histlayer/metrics.hpp"
#include "histlayer/model.hpp"
#include "histlayer/synthtex.hpp"
#include "histlayer/train.hpp"

namespace histlayer {

enum class Regime { kGlobal, kLocal };           // 3x3 or 7x7 images
enum class LabelTarget { kBoth, kStatistical, kStructural };

inline int regime_size(Regime r) { return r == Regime::kGlobal ? 3 : 7; }

inline const char* regime_to_string(Regime r) { return r == Regime::kGlobal ? "global" : "local"; }

inline Regime regime_from_string(const std::string& s) {
  if (s == "global") return Regime::kGlobal;
  if (s == "local") return Regime::kLocal;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

inline const char* label_target_to_string(LabelTarget t) {
  switch (t) {
    case LabelTarget::kBoth: return "both";
    case LabelTarget::kStatistical: return "statistical";
    case LabelTarget::kStructural: return "structural";
  }
  throw std::logic_error("label_target_to_string: unknown target");
}

inline LabelTarget label_target_from_string(const std::string& s) {
  if (s == "both") return LabelTarget::kBoth;
  if (s == "statistical") return LabelTarget::kStatistical;
  if (s == "structural") return LabelTarget::kStructural;
  throw std::invalid_argument("unknown label target '" + s + "'");
}

inline int label_count(LabelTarget t) { return t == LabelTarget::kBoth ? 9 : 3; }

// joint = 3*structural + statistical
inline int project_label(int joint, LabelTarget t) {
  switch (t) {
    case LabelTarget::kBoth: return joint;
    case LabelTarget::kStatistical: return joint % 3;
    case LabelTarget::kStructural: return joint / 3;
  }
  throw std::logic_error("project_label: unknown target");
}

struct ExperimentConfig {
  std::string dataset_dir;
  Regime regime = Regime::kLocal;
  LabelTarget label = LabelTarget::kBoth;
  ModelVariant model = ModelVariant::kCombination;
  Binning binning = Binning::kRBF;
  bool normalize_count = true;
  bool sum_to_one = false;
  TrainConfig train;
  std::string name;

  std::string effective_name() const {
    if (!name.empty()) return name;
    return std::string(variant_to_string(model)) + "_" + regime_to_string(regime) + "_" +
           label_target_to_string(label) +
           (binning == Binning::kPiecewiseLinear ? "_linearbin" : "");
  }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.dataset_dir = j.at("dataset").get<std::string>();
  cfg.regime = regime_from_string(j.at("regime").get<std::string>());
  cfg.label = label_target_from_string(j.at("label").get<std::string>());
  cfg.model = variant_from_string(j.at("model").get<std::string>());
  if (j.contains("binning")) cfg.binning = binning_from_string(j.at("binning").get<std::string>());
  if (j.contains("normalize_count")) cfg.normalize_count = j.at("normalize_count").get<bool>();
  if (j.contains("sum_to_one")) cfg.sum_to_one = j.at("sum_to_one").get<bool>();
  if (j.contains("seeds")) cfg.train.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("epochs")) cfg.train.max_epochs = j.at("epochs").get<int>();
  if (j.contains("patience")) cfg.train.patience = j.at("patience").get<int>();
  if (j.contains("batch_size")) cfg.train.batch_size = j.at("batch_size").get<int>();
  if (j.contains("lr")) cfg.train.lr = j.at("lr").get<double>();
  if (j.contains("optimizer")) {
    const std::string opt = j.at("optimizer").get<std::string>();
    if (opt == "adam") {
      cfg.train.optimizer = TrainConfig::Opt::kAdam;
    } else if (opt == "sgd") {
      cfg.train.optimizer = TrainConfig::Opt::kSgdMomentum;
    } else {
      throw std::invalid_argument("unknown optimizer '" + opt + "'");
    }
  }
  if (j.contains("momentum")) cfg.train.momentum = j.at("momentum").get<double>();
  if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
  cfg.train.validate();
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  return nlohmann::json{
      {"dataset", cfg.dataset_dir},
      {"regime", regime_to_string(cfg.regime)},
      {"label", label_target_to_string(cfg.label)},
      {"model", variant_to_string(cfg.model)},
      {"binning", binning_to_string(cfg.binning)},
      {"normalize_count", cfg.normalize_count},
      {"sum_to_one", cfg.sum_to_one},
      {"seeds", cfg.train.seeds},
      {"epochs", cfg.train.max_epochs},
      {"patience", cfg.train.patience},
      {"batch_size", cfg.train.batch_size},
      {"lr", cfg.train.lr},
      {"optimizer", cfg.train.optimizer == TrainConfig::Opt::kAdam ? "adam" : "sgd"},
      {"momentum", cfg.train.momentum},
      {"name", cfg.effective_name()}};
}

// Images scaled by 1/255 into [0, 1]; labels projected onto the target.
struct DataSplits {
  SplitData train, val, test;
};

inline DataSplits make_splits(const Dataset& d, LabelTarget target) {
  int counts[3] = {0, 0, 0};
  for (const auto& s : d.samples) counts[static_cast<int>(s.split)]++;
  const int size = d.manifest.image_size;
  DataSplits out;
  SplitData* splits[3] = {&out.train, &out.val, &out.test};
  for (int i = 0; i < 3; ++i) {
    splits[i]->images = Tensor(counts[i], 1, size, size);
    splits[i]->labels.reserve(counts[i]);
  }
  int cursor[3] = {0, 0, 0};
  for (const auto& s : d.samples) {
    const int si = static_cast<int>(s.split);
    SplitData* dst = splits[si];
    const int row = cursor[si]++;
    for (int p = 0; p < size * size; ++p) {
      dst->images[static_cast<std::size_t>(row) * size * size + p] = s.pixels[p] / 255.0;
    }
    dst->labels.push_back(project_label(s.joint, target));
  }
  return out;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  double runtime_s = 0.0;
  TrainResult training;
  Model model;
  std::vector<int> predictions;
  std::vector<double> log_fdr;
};

struct MetricsReport {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_acc;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // sample standard deviation over seeds
  ConfusionMatrix confusion;  // test-set counts summed over seeds
  std::vector<double> log_fdr;  // per class, averaged over seeds
  double runtime_s = 0.0;
  std::vector<SeedOutcome> detail;
};

inline void mean_and_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  sd = 0.0;
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    sd = std::sqrt(acc / (v.size() - 1));
  }
}

inline MetricsReport run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.train.validate();
  Dataset dataset = load_dataset(cfg.dataset_dir);
  if (dataset.manifest.image_size != regime_size(cfg.regime)) {
    throw std::invalid_argument("run_experiment: dataset images are " +
                                std::to_string(dataset.manifest.image_size) + "x" +
                                std::to_string(dataset.manifest.image_size) + " but regime '" +
                                regime_to_string(cfg.regime) + "' expects " +
                                std::to_string(regime_size(cfg.regime)));
  }
  DataSplits splits = make_splits(dataset, cfg.label);
  const int classes = label_count(cfg.label);

  MetricsReport report;
  report.experiment = cfg.effective_name();
  report.seeds = cfg.train.seeds;
  report.confusion = ConfusionMatrix(classes);
  report.log_fdr.assign(classes, 0.0);

  for (std::uint64_t seed : cfg.train.seeds) {
    const auto s0 = std::chrono::steady_clock::now();
    SeedOutcome outcome;
    outcome.seed = seed;
    ModelSpec spec = synthetic_model_spec(cfg.model, classes, cfg.binning, cfg.normalize_count,
                                          cfg.sum_to_one);
    Model model = build_model(spec, seed);
    outcome.training = train(model, splits.train, splits.val, cfg.train, seed);
    EvalResult ev = evaluate(model, splits.test, cfg.train.batch_size);
    outcome.test_acc = ev.accuracy_pct;
    outcome.predictions = ev.predictions;
    report.confusion.add(confusion(ev.predictions, splits.test.labels, classes));
    Tensor feats = extract_features(model, splits.test.images, cfg.train.batch_size);
    outcome.log_fdr = fdr_per_class(feats, splits.test.labels, classes);
    for (int c = 0; c < classes; ++c) report.log_fdr[c] += outcome.log_fdr[c];
    outcome.model = std::move(model);
    outcome.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    report.per_seed_acc.push_back(outcome.test_acc);
    report.detail.push_back(std::move(outcome));
  }
  for (int c = 0; c < classes; ++c) report.log_fdr[c] /= static_cast<double>(cfg.train.seeds.size());
  mean_and_std(report.per_seed_acc, report.mean_acc, report.std_acc);
  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// persistence

inline nlohmann::json report_to_json(const MetricsReport& r) {
  std::vector<std::vector<long long>> counts(r.confusion.classes);
  std::vector<std::vector<double>> row_norm(r.confusion.classes);
  const std::vector<double> rn = r.confusion.row_normalized();
  for (int t = 0; t < r.confusion.classes; ++t) {
    counts[t].resize(r.confusion.classes);
    row_norm[t].resize(r.confusion.classes);
    for (int p = 0; p < r.confusion.classes; ++p) {
      counts[t][p] = r.confusion.at(t, p);
      row_norm[t][p] = rn[static_cast<std::size_t>(t) * r.confusion.classes + p];
    }
  }
  return nlohmann::json{{"experiment", r.experiment},
                        {"seeds", r.seeds},
                        {"per_seed_acc", r.per_seed_acc},
                        {"mean_acc", r.mean_acc},
                        {"std_acc", r.std_acc},
                        {"confusion", {{"classes", r.confusion.classes},
                                       {"counts", counts},
                                       {"row_normalized", row_norm}}},
                        {"log_fdr", r.log_fdr},
                        {"runtime_s", r.runtime_s}};
}

inline void save_checkpoint(const Model& m, std::uint64_t seed, int epoch, LabelTarget label,
                            const std::filesystem::path& path) {
  nlohmann::json j{{"model", model_to_json(m)},
                   {"seed", seed},
                   {"epoch", epoch},
                   {"label", label_target_to_string(label)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

struct LoadedCheckpoint {
  Model model;
  std::uint64_t seed = 0;
  int epoch = 0;
  LabelTarget label = LabelTarget::kBoth;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  LoadedCheckpoint c;
  c.model = model_from_json(j.at("model"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.epoch = j.at("epoch").get<int>();
  c.label = label_target_from_string(j.at("label").get<std::string>());
  return c;
}

inline void write_csv_double(std::ofstream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

// summary.json + per_seed.csv + history_seed<S>.csv + model_seed<S>.json
inline void write_report_files(const MetricsReport& r, LabelTarget label,
                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.json");
    if (!out) throw std::runtime_error("write_report_files: cannot open summary.json");
    out << report_to_json(r).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "per_seed.csv");
    if (!out) throw std::runtime_error("write_report_files: cannot open per_seed.csv");
    out << "seed,test_acc,runtime_s\n";
    for (const auto& d : r.detail) {
      out << d.seed << ",";
      write_csv_double(out, d.test_acc);
      out << ",";
      write_csv_double(out, d.runtime_s);
      out << "\n";
    }
  }
  for (const auto& d : r.detail) {
    {
      std::ofstream out(dir / ("history_seed" + std::to_string(d.seed) + ".csv"));
      out << "epoch,train_loss,val_loss,train_acc,val_acc\n";
      for (const auto& e : d.training.history) {
        out << e.epoch << ",";
        write_csv_double(out, e.train_loss);
        out << ",";
        write_csv_double(out, e.val_loss);
        out << ",";
        write_csv_double(out, e.train_acc);
        out << ",";
        write_csv_double(out, e.val_acc);
        out << "\n";
      }
    }
    save_checkpoint(d.model, d.seed, d.training.best_epoch, label,
                    dir / ("model_seed" + std::to_string(d.seed) + ".json"));
  }
}

// Re-aggregates one or more experiment directories from their per-seed CSV
// detail files.
inline nlohmann::json merge_reports(const std::vector<std::filesystem::path>& dirs) {
  nlohmann::json merged = nlohmann::json::array();
  for (const auto& dir : dirs) {
    std::ifstream in(dir / "per_seed.csv");
    if (!in) throw std::runtime_error("merge_reports: missing per_seed.csv in " + dir.string());
    std::string line;
    if (!std::getline(in, line) || line != "seed,test_acc,runtime_s") {
      throw std::runtime_error("merge_reports: unexpected per_seed.csv header in " + dir.string());
    }
    std::vector<std::uint64_t> seeds;
    std::vector<double> accs;
    double runtime = 0.0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string seed, acc, rt;
      if (!std::getline(row, seed, ',') || !std::getline(row, acc, ',') || !std::getline(row, rt)) {
        throw std::runtime_error("merge_reports: malformed per_seed.csv row '" + line + "'");
      }
      seeds.push_back(std::stoull(seed));
      accs.push_back(std::stod(acc));
      runtime += std::stod(rt);
    }
    if (accs.empty()) throw std::runtime_error("merge_reports: no rows in " + dir.string());
    double mean = 0.0, sd = 0.0;
    mean_and_std(accs, mean, sd);
    std::string name = dir.filename().string();
    std::ifstream summary(dir / "summary.json");
    if (summary) {
      nlohmann::json s = nlohmann::json::parse(summary);
      if (s.contains("experiment")) name = s.at("experiment").get<std::string>();
    }
    merged.push_back({{"experiment", name},
                      {"seeds", seeds},
                      {"per_seed_acc", accs},
                      {"mean_acc", mean},
                      {"std_acc", sd},
                      {"runtime_s", runtime}});
  }
  return nlohmann::json{{"experiments", merged}};
}

}  // namespace histlayer
