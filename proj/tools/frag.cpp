// SPDX-License-Identifier: Apache-2.0
//
// frag: train desk-scale model families, measure decision-region
// fragmentation on triplet planes and rank models by generalization.
//
// Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 training
// divergence, 4 I/O or file-format error.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frag/frag.hpp"

namespace fs = std::filesystem;
using namespace frag;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDiverged = 3, kIo = 4 };

// Resolved configuration, echoed as TOML next to every output.
class RunConfig {
 public:
  explicit RunConfig(std::string command) : command_(std::move(command)) {}

  template <typename T>
  void set(const std::string& key, const T& value) {
    std::ostringstream os;
    if constexpr (std::is_same_v<T, bool>)
      os << (value ? "true" : "false");
    else if constexpr (std::is_arithmetic_v<T>)
      os << value;
    else
      os << quoted(std::string(value));
    entries_.emplace_back(key, os.str());
  }

  template <typename T>
  void set(const std::string& key, const std::vector<T>& values) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) os << ", ";
      if constexpr (std::is_arithmetic_v<T>)
        os << values[i];
      else
        os << quoted(values[i]);
    }
    os << ']';
    entries_.emplace_back(key, os.str());
  }

  void write(const fs::path& path) const {
    std::string s = "# frag resolved configuration\ncommand = " + quoted(command_) + "\n";
    for (const auto& [k, v] : entries_) s += k + " = " + v + "\n";
    write_text_file(path, s);
  }

 private:
  static std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }

  std::string command_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

// `measurements.csv` -> `measurements.run.toml`.
fs::path config_path_for(const fs::path& out_file) {
  fs::path p = out_file;
  return p.replace_extension(".run.toml");
}

std::vector<fs::path> frag_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".frag") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .frag files in " + dir.string());
  return out;
}

// "input" -> 0, "h3" -> 3, "2" -> 2, "all" -> nullopt.
std::optional<std::size_t> parse_layer(const std::string& s) {
  if (s == "all") return std::nullopt;
  if (s == "input") return 0;
  try {
    if (s.size() > 1 && s[0] == 'h') return parse_size(s.substr(1));
    return parse_size(s);
  } catch (const FormatError&) {
    throw InvalidArgument("--layer expects input, h1..hL, a layer number or all; got '" + s + "'");
  }
}

std::vector<std::size_t> layers_of(const Network& net, const std::optional<std::size_t>& layer) {
  if (!layer) {
    std::vector<std::size_t> all(net.hidden_layers() + 1);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  if (*layer > net.hidden_layers())
    throw LayerOutOfRange("--layer " + std::to_string(*layer) + " but " + model_id_of(net) + " has " +
                          std::to_string(net.hidden_layers()) + " hidden layers");
  return {*layer};
}

Connectivity parse_connectivity(int c) {
  if (c == 4) return Connectivity::Four;
  if (c == 8) return Connectivity::Eight;
  throw InvalidArgument("--connectivity must be 4 or 8");
}

TripletSet load_triplets_for(const fs::path& path, const Dataset& d) {
  TripletSet t = read_triplets(path);
  const std::string fp = dataset_fingerprint(d);
  if (!t.dataset_fingerprint.empty() && t.dataset_fingerprint != fp)
    throw InvalidArgument("triplet file " + path.string() + " was sampled from dataset " + t.dataset_fingerprint +
                          ", not " + fp);
  return t;
}

std::string accuracy(const Network& net, const Split& split, std::size_t dim) {
  if (split.size() == 0) return "";
  return format_fixed(1.0 - classification_error(net, split, dim));
}

// Under --layer all a collapsed hidden layer (every plane degenerate) is
// reported and skipped instead of failing the whole run.
void measure_into(std::vector<MeasurementRow>& rows, const Network& net, const Dataset& d, const TripletSet& t,
                  std::size_t layer, bool all_layers, std::string epoch, const MeasureOptions& opt) {
  try {
    rows.push_back({model_id_of(net), layer, std::move(epoch), mean_fragmentation(net, d, t, layer, opt)});
  } catch (const AllTripletsDegenerate& e) {
    if (!all_layers) throw;
    std::cerr << "frag: skipping " << model_id_of(net) << " layer " << layer << ": " << e.what() << "\n";
  }
}

// ---------------------------------------------------------------------------

struct MakeDatasetArgs {
  std::size_t classes = 3;
  std::vector<std::size_t> shape{20};
  std::size_t per_class = 200, val_per_class = 0, test_per_class = 0;
  double noise = 0.25;
  std::uint64_t seed = 0;
  std::string out;
};

int run_make_dataset(const MakeDatasetArgs& a) {
  ToyDatasetSpec spec;
  spec.classes = a.classes;
  spec.input_shape = a.shape;
  spec.per_class = a.per_class;
  spec.validation_per_class = a.val_per_class;
  spec.test_per_class = a.test_per_class;
  spec.noise = a.noise;
  spec.seed = a.seed;
  const Dataset d = make_toy_dataset(spec);
  write_dataset_csv(d, a.out);
  RunConfig cfg("make-dataset");
  cfg.set("classes", a.classes);
  cfg.set("shape", a.shape);
  cfg.set("per_class", a.per_class);
  cfg.set("val_per_class", a.val_per_class);
  cfg.set("test_per_class", a.test_per_class);
  cfg.set("noise", a.noise);
  cfg.set("seed", a.seed);
  cfg.set("fingerprint", dataset_fingerprint(d));
  cfg.write(config_path_for(a.out));
  std::cout << "wrote " << a.out << " (" << d.train.size() << " train, fingerprint " << dataset_fingerprint(d)
            << ")\n";
  return kOk;
}

struct TrainFamilyArgs {
  std::string arch = "mlp";
  std::vector<std::size_t> widths;
  std::vector<std::uint64_t> seeds{0};
  double corrupt_frac = 0.1;
  std::size_t epochs = 500, batch_size = 256, hidden_layers = 2, dense_units = 400;
  double lr = 1e-3, lr_decay = 0.99;
  std::size_t lr_decay_every = 10;
  std::vector<std::size_t> checkpoint_epochs;
  bool no_checkpoints = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string dataset, out;
};

int run_train_family(const TrainFamilyArgs& a) {
  const Dataset d = read_dataset_csv(a.dataset);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.lr_decay = a.lr_decay;
  cfg.lr_decay_every = a.lr_decay_every;
  cfg.corruption_fraction = a.corrupt_frac;
  cfg.corruption_seed = a.seed;
  if (a.no_checkpoints)
    cfg.checkpoint_epochs.clear();
  else if (!a.checkpoint_epochs.empty())
    cfg.checkpoint_epochs = a.checkpoint_epochs;
  else
    cfg.checkpoint_epochs = default_checkpoint_epochs(a.epochs);
  FamilyOptions opt;
  if (a.arch == "mlp")
    opt.arch = Architecture::Mlp;
  else if (a.arch == "cnn")
    opt.arch = Architecture::Cnn;
  else
    throw InvalidArgument("--arch must be mlp or cnn");
  opt.mlp_hidden_layers = a.hidden_layers;
  opt.cnn_dense_units = a.dense_units;
  opt.jobs = a.jobs;

  const fs::path out = a.out;
  auto sinks = [&](const std::string& id) -> CheckpointSink {
    return [out, id](std::size_t epoch, const Network& net) {
      Network copy = net;
      copy.metadata["epoch"] = std::to_string(epoch);
      const fs::path rel = fs::path("checkpoints") / id / ("epoch_" + std::to_string(epoch) + ".frag");
      save_weights(copy, out / rel);
      return rel.generic_string();
    };
  };
  const auto members = make_family(a.widths, a.seeds, d, cfg, opt, sinks);

  // Train accuracy is measured on the labels the models were fitted to.
  const Dataset fitted = corrupt_labels(d, cfg.corruption_fraction, cfg.corruption_seed);
  const std::size_t dim = d.input_size();
  std::string models_csv = "model_id,arch,width,seed,corrupt_frac,train_acc,val_acc,test_acc\n";
  for (const auto& m : members) {
    Network final_net = m.result.network;
    const std::string id = model_id_of(final_net);
    final_net.metadata["epoch"] = std::to_string(a.epochs);
    save_weights(final_net, out / "models" / (id + ".frag"));
    save_weights(m.initial, out / "init" / (id + ".frag"));
    write_text_file(out / "traces" / (id + ".csv"), m.result.trace.to_csv());
    models_csv += id + "," + a.arch + "," + std::to_string(m.width) + "," + std::to_string(m.seed) + "," +
                  format_fixed(a.corrupt_frac, 4) + "," + accuracy(final_net, fitted.train, dim) + "," +
                  accuracy(final_net, d.validation, dim) + "," + accuracy(final_net, d.test, dim) + "\n";
  }
  write_text_file(out / "models.csv", models_csv);

  RunConfig rc("train-family");
  rc.set("dataset", a.dataset);
  rc.set("dataset_fingerprint", dataset_fingerprint(d));
  rc.set("arch", a.arch);
  rc.set("widths", a.widths);
  rc.set("seeds", a.seeds);
  rc.set("corrupt_frac", a.corrupt_frac);
  rc.set("corruption_seed", a.seed);
  rc.set("epochs", a.epochs);
  rc.set("batch_size", a.batch_size);
  rc.set("learning_rate", a.lr);
  rc.set("lr_decay", a.lr_decay);
  rc.set("lr_decay_every", a.lr_decay_every);
  rc.set("adam_beta1", cfg.adam.beta1);
  rc.set("adam_beta2", cfg.adam.beta2);
  rc.set("adam_epsilon", cfg.adam.epsilon);
  if (opt.arch == Architecture::Mlp)
    rc.set("hidden_layers", a.hidden_layers);
  else
    rc.set("dense_units", a.dense_units);
  rc.set("checkpoint_epochs", cfg.checkpoint_epochs);
  rc.set("jobs", a.jobs);
  rc.write(out / "run.toml");
  std::cout << "trained " << members.size() << " models into " << out.string() << "\n";
  return kOk;
}

struct MeasureArgs {
  std::string models_dir;
  std::vector<std::string> models;
  std::string dataset, triplets, layer = "input", out;
  std::size_t grid = 50;
  double rho = 0.0;
  int connectivity = 4;
  std::string fcc_source = "label";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

MeasureOptions measure_options(std::size_t grid, double rho, int connectivity, const std::string& fcc,
                               std::size_t jobs) {
  MeasureOptions opt;
  opt.grid = {grid, rho};
  opt.grid.validate();
  opt.connectivity = parse_connectivity(connectivity);
  if (fcc == "label")
    opt.fcc_source = FccClassSource::Label;
  else if (fcc == "prediction")
    opt.fcc_source = FccClassSource::Prediction;
  else
    throw InvalidArgument("--fcc-class-source must be label or prediction");
  opt.jobs = jobs;
  return opt;
}

void record_measure_options(RunConfig& rc, const MeasureArgs& a) {
  rc.set("dataset", a.dataset);
  rc.set("triplets", a.triplets);
  rc.set("layer", a.layer);
  rc.set("grid", a.grid);
  rc.set("rho", a.rho);
  rc.set("connectivity", a.connectivity);
  rc.set("fcc_class_source", a.fcc_source);
  rc.set("seed", a.seed);
  rc.set("jobs", a.jobs);
}

int run_measure(const MeasureArgs& a) {
  const MeasureOptions opt = measure_options(a.grid, a.rho, a.connectivity, a.fcc_source, a.jobs);
  const auto layer = parse_layer(a.layer);
  std::vector<fs::path> files;
  if (!a.models_dir.empty()) files = frag_files(a.models_dir);
  for (const auto& m : a.models) files.emplace_back(m);
  if (files.empty()) throw InvalidArgument("give --models-dir or --model");
  const Dataset d = read_dataset_csv(a.dataset);
  const TripletSet triplets = load_triplets_for(a.triplets, d);

  std::vector<MeasurementRow> rows;
  for (const auto& f : files) {
    const Network net = load_weights(f);
    for (std::size_t l : layers_of(net, layer)) measure_into(rows, net, d, triplets, l, !layer, epoch_of(net), opt);
  }
  write_text_file(a.out, measurement_csv(rows));
  RunConfig rc("measure");
  rc.set("models_dir", a.models_dir);
  rc.set("models", a.models);
  record_measure_options(rc, a);
  rc.write(config_path_for(a.out));
  std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";
  return kOk;
}

struct SampleTripletsArgs {
  std::string dataset, out;
  std::size_t count = 500;
  std::uint64_t seed = 0;
};

int run_sample_triplets(const SampleTripletsArgs& a) {
  const Dataset d = read_dataset_csv(a.dataset);
  const TripletSet t = sample_triplets(d.train.labels, d.classes, a.count, a.seed, dataset_fingerprint(d));
  write_triplets(t, a.out);
  RunConfig rc("sample-triplets");
  rc.set("dataset", a.dataset);
  rc.set("dataset_fingerprint", t.dataset_fingerprint);
  rc.set("count", a.count);
  rc.set("seed", a.seed);
  rc.write(config_path_for(a.out));
  std::cout << "wrote " << t.triplets.size() << " triplets to " << a.out << "\n";
  return kOk;
}

struct TrackTrainingArgs : MeasureArgs {
  std::string checkpoints_dir;
};

// epoch_12.frag -> 12
std::optional<std::size_t> checkpoint_epoch(const fs::path& p) {
  const std::string stem = p.stem().string();
  if (stem.rfind("epoch_", 0) != 0) return std::nullopt;
  try {
    return parse_size(stem.substr(6));
  } catch (const FormatError&) {
    return std::nullopt;
  }
}

int run_track_training(const TrackTrainingArgs& a) {
  const MeasureOptions opt = measure_options(a.grid, a.rho, a.connectivity, a.fcc_source, a.jobs);
  const auto layer = parse_layer(a.layer);
  const Dataset d = read_dataset_csv(a.dataset);
  const TripletSet triplets = load_triplets_for(a.triplets, d);

  // Either one model's checkpoint directory or a directory of them.
  std::vector<fs::path> dirs;
  if (!fs::is_directory(a.checkpoints_dir)) throw IoError("not a directory: " + a.checkpoints_dir);
  for (const auto& e : fs::directory_iterator(a.checkpoints_dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) dirs.emplace_back(a.checkpoints_dir);

  std::vector<MeasurementRow> rows;
  for (const auto& dir : dirs) {
    std::vector<std::pair<std::size_t, fs::path>> ckpts;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".frag")
        if (auto ep = checkpoint_epoch(e.path())) ckpts.emplace_back(*ep, e.path());
    std::sort(ckpts.begin(), ckpts.end());
    for (const auto& [epoch, path] : ckpts) {
      const Network net = load_weights(path);
      for (std::size_t l : layers_of(net, layer))
        measure_into(rows, net, d, triplets, l, !layer, std::to_string(epoch), opt);
    }
  }
  if (rows.empty()) throw IoError("no epoch_N.frag checkpoints under " + a.checkpoints_dir);
  write_text_file(a.out, measurement_csv(rows));
  RunConfig rc("track-training");
  rc.set("checkpoints_dir", a.checkpoints_dir);
  record_measure_options(rc, a);
  rc.write(config_path_for(a.out));
  std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";
  return kOk;
}

struct NormsArgs {
  std::string models_dir, init_dir, out;
  std::uint64_t seed = 0;
};

int run_norms(const NormsArgs& a) {
  std::string csv = "model_id,layer,frobenius,mean_abs,distance_from_init\n";
  for (const auto& f : frag_files(a.models_dir)) {
    const Network trained = load_weights(f);
    const Network init = load_weights(fs::path(a.init_dir) / f.filename());
    for (const auto& n : layer_norms(trained, init))
      csv += model_id_of(trained) + "," + std::to_string(n.layer) + "," + format_fixed(n.frobenius) + "," +
             format_fixed(n.mean_abs) + "," + format_fixed(n.distance_from_init) + "\n";
  }
  write_text_file(a.out, csv);
  RunConfig rc("norms");
  rc.set("models_dir", a.models_dir);
  rc.set("init_dir", a.init_dir);
  rc.set("seed", a.seed);
  rc.write(config_path_for(a.out));
  std::cout << "wrote " << a.out << "\n";
  return kOk;
}

struct RankArgs {
  std::string measurements, models, table, out;
  std::size_t layer = 0;
  std::vector<std::string> hyperparameters;
  std::size_t cmi_max_subset = 2, cmi_min_cell_pairs = 2;
  std::string cmi_normalization = "entropy", cmi_aggregation = "min";
  std::uint64_t seed = 0;
};

int run_rank(const RankArgs& a) {
  MeasurementTable t;
  if (!a.table.empty()) {
    if (!a.measurements.empty() || !a.models.empty())
      throw InvalidArgument("--table excludes --measurements/--models");
    t = load_measurement_table(a.table);
  } else {
    if (a.measurements.empty() || a.models.empty())
      throw InvalidArgument("give --table, or both --measurements and --models");
    t = join_measurements(read_csv(a.measurements), read_csv(a.models), a.layer, a.hyperparameters);
  }
  CmiOptions opt;
  opt.max_subset_size = a.cmi_max_subset;
  opt.min_cell_pairs = a.cmi_min_cell_pairs;
  if (a.cmi_normalization == "entropy")
    opt.normalization = CmiNormalization::ConditionalEntropy;
  else if (a.cmi_normalization == "none")
    opt.normalization = CmiNormalization::None;
  else
    throw InvalidArgument("--cmi-normalization must be entropy or none");
  if (a.cmi_aggregation == "min")
    opt.aggregation = CmiAggregation::Min;
  else if (a.cmi_aggregation == "mean")
    opt.aggregation = CmiAggregation::Mean;
  else
    throw InvalidArgument("--cmi-aggregation must be min or mean");

  write_text_file(a.out, rank_report_csv(rank_report(t, opt)));
  RunConfig rc("rank");
  rc.set("table", a.table);
  rc.set("measurements", a.measurements);
  rc.set("models", a.models);
  rc.set("layer", a.layer);
  rc.set("hyperparameters", t.hyperparameter_names);
  rc.set("cmi_variable", std::string("pairwise-sign"));
  rc.set("cmi_max_subset", a.cmi_max_subset);
  rc.set("cmi_normalization", a.cmi_normalization);
  rc.set("cmi_aggregation", a.cmi_aggregation);
  rc.set("cmi_min_cell_pairs", a.cmi_min_cell_pairs);
  rc.set("seed", a.seed);
  rc.write(config_path_for(a.out));
  std::cout << "wrote " << a.out << "\n";
  return kOk;
}

void add_measure_flags(CLI::App* cmd, MeasureArgs& a) {
  cmd->add_option("--dataset", a.dataset, "Dataset CSV the triplets index into")->required();
  cmd->add_option("--triplets", a.triplets, "Triplet file from sample-triplets")->required();
  cmd->add_option("--layer", a.layer, "input, h1..hL, a layer number, or all")->capture_default_str();
  cmd->add_option("--grid", a.grid, "Grid points per plane axis")->capture_default_str();
  cmd->add_option("--rho", a.rho, "Plane padding beyond the triplet")->capture_default_str();
  cmd->add_option("--connectivity", a.connectivity, "Region connectivity, 4 or 8")->capture_default_str();
  cmd->add_option("--fcc-class-source", a.fcc_source, "label or prediction")->capture_default_str();
  cmd->add_option("--out", a.out, "Output CSV")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-region fragmentation toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  const std::size_t env_jobs = default_jobs();
  std::function<int()> action;

  MakeDatasetArgs md;
  auto* c_md = app.add_subcommand("make-dataset", "Write a Gaussian-blob toy dataset CSV");
  c_md->add_option("--classes", md.classes)->capture_default_str();
  c_md->add_option("--shape", md.shape, "Input shape, e.g. 20 or 3,8,8")->delimiter(',')->capture_default_str();
  c_md->add_option("--per-class", md.per_class)->capture_default_str();
  c_md->add_option("--val-per-class", md.val_per_class)->capture_default_str();
  c_md->add_option("--test-per-class", md.test_per_class)->capture_default_str();
  c_md->add_option("--noise", md.noise, "Standard deviation around the class means")->capture_default_str();
  c_md->add_option("--seed", md.seed)->capture_default_str();
  c_md->add_option("--out", md.out)->required();
  c_md->callback([&] { action = [&] { return run_make_dataset(md); }; });

  TrainFamilyArgs tf;
  tf.jobs = env_jobs;
  auto* c_tf = app.add_subcommand("train-family", "Train a width x seed family of models");
  c_tf->add_option("--arch", tf.arch, "mlp or cnn")->capture_default_str();
  c_tf->add_option("--widths", tf.widths, "Width multipliers, ascending")->delimiter(',')->required();
  c_tf->add_option("--seeds", tf.seeds, "Initialization seeds")->delimiter(',')->capture_default_str();
  c_tf->add_option("--corrupt-frac", tf.corrupt_frac, "Fraction of training labels reassigned")
      ->capture_default_str();
  c_tf->add_option("--epochs", tf.epochs)->capture_default_str();
  c_tf->add_option("--batch-size", tf.batch_size)->capture_default_str();
  c_tf->add_option("--lr", tf.lr)->capture_default_str();
  c_tf->add_option("--lr-decay", tf.lr_decay)->capture_default_str();
  c_tf->add_option("--lr-decay-every", tf.lr_decay_every)->capture_default_str();
  c_tf->add_option("--hidden-layers", tf.hidden_layers, "MLP hidden layers")->capture_default_str();
  c_tf->add_option("--dense-units", tf.dense_units, "CNN dense layer width")->capture_default_str();
  c_tf->add_option("--checkpoint-epochs", tf.checkpoint_epochs, "Default: 0,1,2,5,10,20,50,... and the last")
      ->delimiter(',');
  c_tf->add_flag("--no-checkpoints", tf.no_checkpoints);
  c_tf->add_option("--seed", tf.seed, "Label-corruption seed")->capture_default_str();
  c_tf->add_option("--jobs", tf.jobs, "Models trained in parallel (default $FRAG_JOBS)")->capture_default_str();
  c_tf->add_option("--dataset", tf.dataset)->required();
  c_tf->add_option("--out", tf.out, "Output directory")->required();
  c_tf->callback([&] { action = [&] { return run_train_family(tf); }; });

  MeasureArgs ms;
  ms.jobs = env_jobs;
  auto* c_ms = app.add_subcommand("measure", "Mean fragmentation, FRC and FCC per model and layer");
  c_ms->add_option("--models-dir", ms.models_dir, "Directory of .frag files");
  c_ms->add_option("--model", ms.models, "Single .frag file (repeatable)");
  add_measure_flags(c_ms, ms);
  c_ms->add_option("--seed", ms.seed)->capture_default_str();
  c_ms->add_option("--jobs", ms.jobs, "Triplet planes measured in parallel")->capture_default_str();
  c_ms->callback([&] { action = [&] { return run_measure(ms); }; });

  SampleTripletsArgs st;
  auto* c_st = app.add_subcommand("sample-triplets", "Sample same-class training triplets");
  c_st->add_option("--dataset", st.dataset)->required();
  c_st->add_option("--count", st.count)->check(CLI::PositiveNumber)->capture_default_str();
  c_st->add_option("--seed", st.seed)->capture_default_str();
  c_st->add_option("--out", st.out)->required();
  c_st->callback([&] { action = [&] { return run_sample_triplets(st); }; });

  TrackTrainingArgs tt;
  tt.jobs = env_jobs;
  auto* c_tt = app.add_subcommand("track-training", "Fragmentation of every saved checkpoint");
  c_tt->add_option("--checkpoints-dir", tt.checkpoints_dir, "epoch_N.frag files, or one directory per model")
      ->required();
  add_measure_flags(c_tt, tt);
  c_tt->add_option("--seed", tt.seed)->capture_default_str();
  c_tt->add_option("--jobs", tt.jobs)->capture_default_str();
  c_tt->callback([&] { action = [&] { return run_track_training(tt); }; });

  NormsArgs nm;
  auto* c_nm = app.add_subcommand("norms", "Per-layer weight norms and distance from initialization");
  c_nm->add_option("--models-dir", nm.models_dir)->required();
  c_nm->add_option("--init-dir", nm.init_dir, "Initial weights, same file names")->required();
  c_nm->add_option("--seed", nm.seed)->capture_default_str();
  c_nm->add_option("--out", nm.out)->required();
  c_nm->callback([&] { action = [&] { return run_norms(nm); }; });

  RankArgs rk;
  auto* c_rk = app.add_subcommand("rank", "Kendall tau and CMI of measures against the generalization gap");
  c_rk->add_option("--measurements", rk.measurements, "Measurement CSV from measure");
  c_rk->add_option("--models", rk.models, "models.csv from train-family");
  c_rk->add_option("--table", rk.table, "Generic table: model_id, generalization_gap, hp_* and measures");
  c_rk->add_option("--layer", rk.layer, "Measurement layer to rank")->capture_default_str();
  c_rk->add_option("--hyperparameters", rk.hyperparameters, "models.csv columns to condition on")->delimiter(',');
  c_rk->add_option("--cmi-max-subset", rk.cmi_max_subset)->capture_default_str();
  c_rk->add_option("--cmi-normalization", rk.cmi_normalization, "entropy or none")->capture_default_str();
  c_rk->add_option("--cmi-aggregation", rk.cmi_aggregation, "min or mean")->capture_default_str();
  c_rk->add_option("--cmi-min-cell-pairs", rk.cmi_min_cell_pairs)->capture_default_str();
  c_rk->add_option("--seed", rk.seed)->capture_default_str();
  c_rk->add_option("--out", rk.out)->required();
  c_rk->callback([&] { action = [&] { return run_rank(rk); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    return action();
  } catch (const DivergedLoss& e) {
    std::cerr << "frag: training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const IoError& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kIo;
  } catch (const ChecksumMismatch& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kIo;
  } catch (const InvalidArgument& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kConfig;
  } catch (const LayerOutOfRange& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeMismatch& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kConfig;
  } catch (const SingleClassDataset& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kConfig;
  } catch (const InsufficientClassSamples& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "frag: " << e.what() << "\n";
    return kFailure;
  }
}
