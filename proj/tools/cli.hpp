#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchnet/checkpoint.hpp"
#include "sketchnet/config.hpp"
#include "sketchnet/evaluate.hpp"
#include "sketchnet/folds.hpp"
#include "sketchnet/synthetic.hpp"
#include "sketchnet/train.hpp"

namespace sketchnet::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericFailure = 3 };

/// Config keys use underscores; flags and config files may use hyphens.
inline std::string key_of(std::string flag) {
  std::replace(flag.begin(), flag.end(), '-', '_');
  return flag;
}

/// The string-valued options of one subcommand. resolve() layers them:
/// command-line flag, then --config file, then the default.
class Options {
 public:
  Options(CLI::App* app, std::string command) : app_(app), command_(std::move(command)) {
    app_->add_option("--config", config_path_, "key=value file; command-line flags override its values");
  }

  Options& add(const std::string& flag, const std::string& fallback, const std::string& help) {
    auto& slot = values_[key_of(flag)];
    app_->add_option("--" + flag, slot, fallback.empty() ? help : help + " [" + fallback + "]");
    flags_.emplace_back(flag, fallback);
    return *this;
  }

  KeyValues resolve() const {
    KeyValues file;
    const KeyValues raw = config_path_.empty() ? KeyValues{} : KeyValues::load(config_path_);
    for (const auto& [k, v] : raw.items()) {
      const auto key = key_of(k);
      if (!values_.count(key)) throw ConfigError("config key '" + k + "' is not used by " + command_);
      file.set(key, v);
    }
    KeyValues kv;
    kv.set("command", command_);
    for (const auto& [flag, fallback] : flags_) {
      const auto key = key_of(flag);
      if (app_->count("--" + flag))
        kv.set(key, values_.at(key));
      else if (file.has(key))
        kv.set(key, file.get(key));
      else
        kv.set(key, fallback);
    }
    return kv;
  }

  const std::string& command() const { return command_; }
  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::string command_;
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, std::string>> flags_;
};

inline std::string provenance(const KeyValues& kv) { return kv.str("# "); }

inline const std::string& required(const KeyValues& kv, const std::string& key) {
  const auto& v = kv.get(key);
  if (v.empty()) throw ConfigError("--" + key + " is required");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + " must be true or false");
}

inline std::size_t channels_of(const KeyValues& kv) {
  const int c = kv.number<int>("channels");
  if (c != 1 && c != 6) throw ConfigError("--channels must be 1 or 6");
  return static_cast<std::size_t>(c);
}

inline std::vector<int> scales_of(const KeyValues& kv) {
  const auto scales = parse_int_list(required(kv, "scales"));
  std::set<int> seen;
  for (int s : scales) {
    if (!is_ensemble_scale(s)) throw ConfigError("scale " + std::to_string(s) + " is not one of 256,224,192,128,64");
    if (!seen.insert(s).second) throw ConfigError("scale " + std::to_string(s) + " listed twice");
  }
  return scales;
}

inline std::string checkpoint_name(int scale, std::size_t channels) {
  return "net_s" + std::to_string(scale) + "_c" + std::to_string(channels) + ".ckpt";
}

inline std::string history_name(int scale, std::size_t channels) {
  return "history_s" + std::to_string(scale) + "_c" + std::to_string(channels) + ".csv";
}

/// Seed of the network trained at `scale`: members differ in initial
/// weights and augmentation draws.
inline std::uint64_t member_seed(std::uint64_t seed, int scale) { return seed + static_cast<std::uint64_t>(scale); }

inline std::vector<NetworkState<float>> load_members(const KeyValues& kv) {
  const fs::path dir = required(kv, "checkpoints");
  const auto channels = channels_of(kv);
  std::vector<NetworkState<float>> nets;
  for (int scale : scales_of(kv)) {
    const auto path = dir / checkpoint_name(scale, channels);
    if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string());
    auto st = load_checkpoint(path.string());
    if (st.scale != scale || st.spec.input_channels != channels)
      throw DataError(path.string() + " holds a scale-" + std::to_string(st.scale) + ", " +
                      std::to_string(st.spec.input_channels) + "-channel network");
    nets.push_back(std::move(st));
  }
  return nets;
}

struct Splits {
  Dataset train, test;
};

/// Train and test folds of the dataset; without a folds file the split is
/// derived from --seed.
inline Splits load_splits(const KeyValues& kv) {
  const auto data = load_dataset(required(kv, "dataset"));
  const auto& folds_file = kv.get("folds_file");
  const FoldSplit folds =
      folds_file.empty() ? make_folds(data, kv.number<std::uint64_t>("seed")) : load_folds(folds_file);
  const int fold = kv.number<int>("fold");
  if (fold < 0 || fold >= static_cast<int>(kNumFolds)) throw ConfigError("--fold must be 0, 1 or 2");
  return {data.subset(folds.train_ids(fold)), data.subset(folds.test_ids(fold))};
}

inline std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------- commands

inline int cmd_synth(const KeyValues& kv, std::ostream& out) {
  const auto& kind = kv.get("kind");
  const auto seed = kv.number<std::uint64_t>("seed");
  std::vector<StrokeSketch> sketches;
  if (kind == "shapes")
    sketches = synthetic::shapes(kv.number<std::size_t>("classes"), kv.number<std::size_t>("per_class"), seed);
  else if (kind == "stroke-order")
    sketches = synthetic::stroke_order_pairs(kv.number<std::size_t>("pairs"), seed);
  else
    throw ConfigError("--kind must be shapes or stroke-order");
  const fs::path path = required(kv, "out");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(path.string(), sketches);
  out << "wrote " << sketches.size() << " sketches to " << path.string() << '\n';
  return kOk;
}

inline int cmd_make_folds(const KeyValues& kv, std::ostream& out) {
  const auto data = load_dataset(required(kv, "dataset"));
  const auto split = make_folds(data, kv.number<std::uint64_t>("seed"));
  const fs::path path = required(kv, "out");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_folds(path.string(), split, kv.items());
  out << "folds:";
  for (const auto& f : split.folds) out << ' ' << f.size();
  out << '\n';
  return kOk;
}

inline int cmd_train(const KeyValues& kv, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = TrainConfig::from_kv(kv);
  const auto channels = channels_of(kv);
  const auto scales = scales_of(kv);
  const bool validate = parse_bool(kv.get("validate"), "validate");
  const auto splits = load_splits(kv);
  const fs::path dir = required(kv, "out");
  fs::create_directories(dir);
  for (int scale : scales) {
    TrainConfig member = cfg;
    member.seed = member_seed(cfg.seed, scale);
    auto st = init_params<float>(build_network(channels, splits.train.classes.size()), member.seed);
    const auto tag = "[s" + std::to_string(scale) + " c" + std::to_string(channels) + "] ";
    auto result = train(std::move(st), splits.train, member, scale, validate ? &splits.test : nullptr,
                        [&](const EpochStats& e) {
                          err << tag << "epoch " << e.epoch << '/' << member.epochs << " loss " << e.loss
                              << " trainAcc " << e.train_accuracy << " valAcc " << e.val_accuracy << '\n';
                        });
    save_checkpoint(result.state, (dir / checkpoint_name(scale, channels)).string());
    auto history = open_output(dir / history_name(scale, channels));
    write_history_csv(history, result.history,
                      provenance(kv) + "# scale=" + std::to_string(scale) +
                          "\n# member_seed=" + std::to_string(member.seed) + "\n");
    out << "trained " << checkpoint_name(scale, channels) << " (" << member.epochs << " epochs)\n";
  }
  return kOk;
}

inline JBFitConfig jb_config(const KeyValues& kv) {
  JBFitConfig c;
  c.reg = kv.number<double>("jb_reg");
  c.norm = parse_feature_norm(kv.get("jb_norm"));
  if (!(c.reg >= 0)) throw ConfigError("--jb-reg must be >= 0");
  return c;
}

inline LinearConfig linear_config(const KeyValues& kv) {
  LinearConfig c;
  c.lambda = kv.number<double>("svm_lambda");
  c.epochs = kv.number<int>("svm_epochs");
  c.seed = kv.number<std::uint64_t>("seed");
  return c;
}

inline int cmd_eval(const KeyValues& kv, std::ostream& out, std::ostream& err) {
  const auto mode = parse_fusion_mode(kv.get("fusion"));
  const int k = kv.number<int>("k");
  if (k < 1) throw ConfigError("--k must be >= 1");
  const auto jb_cfg = jb_config(kv);
  const auto lin_cfg = linear_config(kv);
  const auto nets = load_members(kv);
  const auto splits = load_splits(kv);
  const fs::path dir = required(kv, "out");

  auto progress = [&](const char* split, std::size_t total) {
    return [&err, split, total](std::size_t i) {
      if ((i + 1) % 50 == 0 || i + 1 == total) err << split << ' ' << (i + 1) << '/' << total << '\n';
    };
  };
  const auto train_out = run_ensemble(nets, splits.train, "train", progress("train", splits.train.sketches.size()));
  const auto test_out = run_ensemble(nets, splits.test, "test", progress("test", splits.test.sketches.size()));

  std::vector<ReportRow> rows;
  for (std::size_t m = 0; m < nets.size(); ++m)
    rows.push_back({"single_s" + std::to_string(nets[m].scale), single_predictions(test_out, m)});
  const auto jb = jb_fit(train_out.bank.rows, train_out.bank.labels(), jb_cfg);
  rows.push_back({"jb", jb_predictions(jb, train_out.bank, test_out.bank, k)});
  rows.push_back({"feature", feature_predictions(train_out.bank, test_out.bank, lin_cfg)});
  rows.push_back({"score", score_predictions(test_out)});

  const auto& chosen = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) {
                         return r.method == to_string(mode);
                       })->predicted;
  const auto header = provenance(kv);
  auto report = open_output(dir / "report.csv");
  write_report_csv(report, rows, test_out.labels, header);
  auto per_cat = open_output(dir / "per_category.csv");
  write_per_category_csv(per_cat, chosen, test_out.labels, splits.test.classes, header);
  auto confusion = open_output(dir / "confusion.csv");
  write_confusion_csv(confusion, chosen, test_out.labels, splits.test.classes, header);
  for (const auto& r : rows) out << r.method << ' ' << format_fixed(accuracy(r.predicted, test_out.labels)) << '\n';
  return kOk;
}

inline int cmd_predict(const KeyValues& kv, std::ostream& out) {
  if (kv.get("fusion") != "score")
    throw ConfigError("predict supports --fusion score only; jb and feature need a training feature bank");
  const int top = kv.number<int>("top");
  if (top < 1) throw ConfigError("--top must be >= 1");
  const auto nets = load_members(kv);
  const auto& input = required(kv, "input");
  std::ifstream in(input);
  if (!in) throw DataError("cannot open " + input);
  std::ofstream file;
  const auto& out_path = kv.get("out");
  if (!out_path.empty()) file = open_output(out_path);
  std::ostream& sink = out_path.empty() ? out : file;

  const auto& classes = nets[0].classes;
  std::string line;
  std::size_t lineno = 0, total = 0, failed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++total;
    nlohmann::ordered_json rec;
    try {
      const auto sketch = parse_sketch(line, lineno);
      const auto dist = score_fusion(nets, sketch);
      std::vector<std::size_t> order(dist.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dist[a] > dist[b]; });
      rec["id"] = sketch.id;
      auto preds = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < std::min<std::size_t>(top, order.size()); ++i)
        preds.push_back({{"label", classes[order[i]]}, {"score", dist[order[i]]}});
      rec["predictions"] = std::move(preds);
    } catch (const Error& e) {
      ++failed;
      rec = nlohmann::ordered_json{{"line", lineno}, {"error", e.what()}};
    }
    sink << rec.dump() << '\n';
  }
  if (total == 0) throw DataError(input + " contains no sketches");
  return failed == total ? kDataFailure : kOk;
}

/// 8-bit binary PGM of the first-layer filters of one input channel:
/// 8 x 8 tiles, each tile min-max scaled on its own; a constant tile is
/// mid-grey.
inline std::vector<std::uint8_t> filter_grid(const Tensor<float>& w, std::size_t channel, std::size_t& width,
                                             std::size_t& height) {
  const std::size_t n = w.dim(0), k = w.dim(2), cols = 8, rows = (n + cols - 1) / cols;
  width = cols * k;
  height = rows * k;
  std::vector<std::uint8_t> img(width * height, 0);
  for (std::size_t f = 0; f < n; ++f) {
    const float* p = w.raw() + (f * w.dim(1) + channel) * k * k;
    const auto [lo, hi] = std::minmax_element(p, p + k * k);
    const double span = static_cast<double>(*hi) - static_cast<double>(*lo);
    const std::size_t ox = (f % cols) * k, oy = (f / cols) * k;
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t x = 0; x < k; ++x) {
        const double v = span > 0 ? (p[y * k + x] - *lo) / span * 255.0 : 128.0;
        img[(oy + y) * width + ox + x] = static_cast<std::uint8_t>(std::lround(v));
      }
  }
  return img;
}

inline int cmd_export_filters(const KeyValues& kv, std::ostream& out) {
  const auto st = load_checkpoint(required(kv, "checkpoint"));
  const auto& w = st.params.at(0).weights;
  const std::string prefix = required(kv, "out");
  const std::size_t channels = w.dim(1);
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t width = 0, height = 0;
    const auto img = filter_grid(w, c, width, height);
    const std::string path = channels == 1 ? prefix + ".pgm" : prefix + "_ch" + std::to_string(c + 1) + ".pgm";
    auto f = open_output(path);
    f << "P5\n" << provenance(kv) << "# channel=" << c + 1 << '\n' << width << ' ' << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    out << "wrote " << path << '\n';
  }
  return kOk;
}

inline int cmd_featurize(const KeyValues& kv, std::ostream& out, std::ostream& err) {
  const auto& split = kv.get("split");
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test");
  const auto nets = load_members(kv);
  const auto splits = load_splits(kv);
  const Dataset& data = split == "train" ? splits.train : splits.test;
  const auto bank = build_feature_bank(nets, data, split, [&](std::size_t i) {
    if ((i + 1) % 50 == 0 || i + 1 == data.sketches.size()) err << split << ' ' << (i + 1) << '\n';
  });
  const std::string prefix = required(kv, "out");
  if (fs::path(prefix).has_parent_path()) fs::create_directories(fs::path(prefix).parent_path());
  save_feature_bank(bank, prefix);
  auto cfg = open_output(prefix + ".cfg");
  cfg << kv.str();
  out << "wrote " << bank.size() << " rows of " << bank.dim() << " features to " << prefix << ".sknt\n";
  return kOk;
}

inline int cmd_fit_jb(const KeyValues& kv, std::ostream& out) {
  const auto bank = load_feature_bank(required(kv, "features"));
  JBFitConfig cfg = jb_config(kv);
  cfg.max_iterations = kv.number<int>("max_iterations");
  cfg.tolerance = kv.number<double>("tolerance");
  JBFitTrace trace;
  auto model = jb_fit(bank.rows, bank.labels(), cfg, &trace);
  model.provenance = kv.str();
  save_jb_model(model, required(kv, "out"));
  out << "EM iterations " << trace.iterations << (trace.converged ? " (converged)" : "") << ", final objective "
      << trace.objective.back() << '\n';
  return kOk;
}

// ------------------------------------------------------------------ driver

inline void add_data_options(Options& o) {
  o.add("dataset", "", "NDJSON sketch file")
      .add("folds-file", "", "folds JSON from make-folds; derived from --seed when absent")
      .add("fold", "0", "test fold index 0..2; the other two folds train")
      .add("seed", "1", "random seed");
}

inline void add_ensemble_options(Options& o) {
  o.add("checkpoints", "", "directory holding net_s<scale>_c<channels>.ckpt files")
      .add("channels", "6", "input channels, 1 or 6")
      .add("scales", "256,224,192,128,64", "comma-separated blur scales");
}

/// Runs one command line; returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sketch recognition with multi-channel, multi-scale network ensembles", "sketchnet"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Options>> commands;
  auto command = [&](const std::string& name, const std::string& help) -> Options& {
    commands.push_back(std::make_unique<Options>(app.add_subcommand(name, help), name));
    return *commands.back();
  };

  auto& synth = command("synth", "generate a synthetic NDJSON sketch dataset");
  synth.add("kind", "shapes", "shapes or stroke-order")
      .add("classes", "10", "shape classes (shapes)")
      .add("per-class", "80", "sketches per class (shapes)")
      .add("pairs", "50", "sketches per class (stroke-order)")
      .add("seed", "1", "random seed")
      .add("out", "", "output NDJSON path");

  auto& folds = command("make-folds", "write a stratified 3-fold split");
  folds.add("dataset", "", "NDJSON sketch file").add("seed", "1", "random seed").add("out", "", "output JSON path");

  auto& train_cmd = command("train", "train one network per requested scale");
  add_data_options(train_cmd);
  const TrainConfig defaults;
  train_cmd.add("channels", "6", "input channels, 1 or 6")
      .add("scales", "256", "comma-separated blur scales")
      .add("epochs", std::to_string(defaults.epochs), "training epochs")
      .add("batch-size", std::to_string(defaults.batch_size), "minibatch size")
      .add("learning-rate", format_number(defaults.learning_rate), "initial learning rate")
      .add("lr-decay", format_number(defaults.lr_decay), "learning-rate multiplier at each decay epoch")
      .add("lr-decay-epochs", join_ints(defaults.lr_decay_epochs), "comma-separated decay epochs")
      .add("momentum", format_number(defaults.momentum), "SGD momentum")
      .add("weight-decay", format_number(defaults.weight_decay), "L2 weight decay")
      .add("dropout", format_number(defaults.dropout), "dropout rate")
      .add("augment", "true", "random augmentation of training views")
      .add("validate", "true", "report held-out centre-crop accuracy after each epoch")
      .add("out", "", "output directory");

  auto& eval = command("eval", "evaluate single networks and the three fusion heads on the test fold");
  add_data_options(eval);
  add_ensemble_options(eval);
  eval.add("fusion", "jb", "mode for per_category.csv and confusion.csv: score, feature or jb")
      .add("k", "5", "neighbours for JB KNN")
      .add("jb-reg", "0.1", "JB ridge weight")
      .add("jb-norm", "raw", "feature normalisation before JB: raw or l2")
      .add("svm-lambda", "0.0001", "linear SVM regularisation")
      .add("svm-epochs", "60", "linear SVM epochs")
      .add("out", "", "report directory");

  auto& predict = command("predict", "top-k labels for each sketch of an NDJSON file");
  add_ensemble_options(predict);
  predict.add("input", "", "NDJSON sketches")
      .add("fusion", "score", "fusion mode (score)")
      .add("top", "5", "labels per sketch")
      .add("out", "", "output NDJSON path; stdout when absent");

  auto& filters = command("export-filters", "write the first-layer filters as PGM grids");
  filters.add("checkpoint", "", "checkpoint file").add("out", "", "output path prefix");

  auto& featurize = command("featurize", "write the concatenated per-crop features of one fold split");
  add_data_options(featurize);
  add_ensemble_options(featurize);
  featurize.add("split", "train", "train or test").add("out", "", "output prefix (.sknt, .ndjson, .cfg)");

  auto& fit = command("fit-jb", "fit a Joint Bayesian model to a feature bank");
  fit.add("features", "", "feature bank prefix from featurize")
      .add("jb-reg", "0.1", "JB ridge weight")
      .add("jb-norm", "raw", "feature normalisation: raw or l2")
      .add("max-iterations", "50", "EM iteration cap")
      .add("tolerance", "1e-6", "relative objective improvement that stops EM")
      .add("out", "", "output model path");

  std::vector<const char*> argv{"sketchnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    for (const auto& c : commands) {
      if (!c->app()->parsed()) continue;
      const auto kv = c->resolve();
      const auto& name = c->command();
      if (name == "synth") return cmd_synth(kv, out);
      if (name == "make-folds") return cmd_make_folds(kv, out);
      if (name == "train") return cmd_train(kv, out, err);
      if (name == "eval") return cmd_eval(kv, out, err);
      if (name == "predict") return cmd_predict(kv, out);
      if (name == "export-filters") return cmd_export_filters(kv, out);
      if (name == "featurize") return cmd_featurize(kv, out, err);
      if (name == "fit-jb") return cmd_fit_jb(kv, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataFailure;
  }
  return kUsage;
}

}  // namespace sketchnet::cli
