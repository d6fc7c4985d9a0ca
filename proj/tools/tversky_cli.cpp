// tversky: command-line front end.
//
//   gen        synthetic TVOL1 volumes
//   train      one training run on fold a or b
//   eval       metrics and per-subject PR curves for a checkpoint
//   sweep      alpha/beta grid with two-fold CV over several seeds
//   gradcheck  finite-difference checks (loss, whole network)
//   shapes     layer shape plan; --paper checks the full-size table
//
// Exit codes: 0 success, 1 validation failure, 2 I/O or file format error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tversky/tversky.hpp"

namespace fs = std::filesystem;
using namespace tversky;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Accepts a bare synth section or a full training config.
data::SynthConfig read_synth(const std::string& path) {
  const auto j = read_json(path);
  try {
    return j.contains("synth") ? j.at("synth").get<data::SynthConfig>() : j.get<data::SynthConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<data::LabeledVolume> read_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tvol") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .tvol files in " + dir);
  std::vector<data::LabeledVolume> out;
  for (const auto& f : files) out.push_back(data::read_volume(f.string()));
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::size_t used = 0;
    try {
      seeds.push_back(std::stoull(item, &used));
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("seed '" + item + "' is not an integer");
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create " + parent.string() + ": " + ec.message());
}

int cmd_gen(const std::string& config, const std::string& out, std::size_t count) {
  const auto synth = read_synth(config);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
  for (const auto& v : data::generate_subjects(synth, count)) {
    const auto path = fs::path(out) / (v.subject_id + ".tvol");
    data::write_volume(path.string(), v);
    std::cout << path.string() << " foreground=" << v.foreground_fraction() << '\n';
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& fold, const std::string& out,
              const std::string& data_dir, std::uint64_t seed_opt) {
  auto config = harness::load_train_config(config_path);
  if (fold != "a" && fold != "b") throw ConfigError("--fold must be a or b");
  const std::uint64_t seed = seed_opt != 0 ? seed_opt : config.seeds.front();
  config.synth.seed = seed;
  config.net.seed = seed;
  config.validate();
  std::vector<data::LabeledVolume> subjects =
      data_dir.empty() ? data::generate_subjects(config.synth, config.subjects) : read_dir(data_dir);
  const auto [fold_a, fold_b] = data::two_fold_split(subjects, seed);
  const auto& train = fold == "a" ? fold_a : fold_b;
  std::cout << "training on " << train.size() << " subjects, alpha=" << config.tversky.alpha
            << " beta=" << config.tversky.beta << ", " << config.epochs << " epochs\n";
  auto result = harness::train_fold(train, config, [&](std::size_t e, double loss) {
    if ((e + 1) % 10 == 0 || e + 1 == config.epochs) std::cout << "epoch " << e + 1 << " loss " << loss << '\n';
  });
  ensure_parent(out);
  unet::save_checkpoint(out, config.net, result.params);
  std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, double threshold, const std::string& out) {
  const auto ckpt = unet::load_checkpoint(ckpt_path);
  const auto subjects = read_dir(data_dir);
  const auto ev = harness::evaluate_fold(ckpt.config, ckpt.params, subjects, threshold);
  ensure_parent(out);
  const auto dir = fs::path(out).parent_path();
  for (const auto& s : ev.subjects) {
    metrics::write_pr_csv((dir / ("pr_" + s.subject_id + ".csv")).string(), s.curve);
  }
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw IoError("cannot open " + out + " for writing");
  os << harness::evaluation_json(ev, threshold).dump(2) << '\n';
  const auto& m = ev.macro;
  std::cout << std::fixed << std::setprecision(4) << "dsc " << m.dsc << " sensitivity " << m.sensitivity
            << " specificity " << m.specificity << " f2 " << m.f2 << " apr " << m.apr << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& pairs, const std::string& seeds,
              const std::string& out, bool checkpoints) {
  const auto config = harness::load_train_config(config_path);
  harness::SweepOptions opt;
  if (!pairs.empty()) opt.pairs = harness::parse_pairs(pairs);
  if (!seeds.empty()) opt.seeds = parse_seeds(seeds);
  opt.out_dir = out;
  opt.write_checkpoints = checkpoints;
  opt.log = &std::cerr;
  const auto report = harness::run_sweep(config, opt);
  std::cout << harness::render_table(report);
  return 0;
}

int cmd_gradcheck(std::size_t instances) {
  gradcheck::LossCheckOptions lo;
  lo.instances = instances;
  const auto l = gradcheck::check_loss(lo);
  std::cout << "loss: " << l.checked << " partials, " << l.failures << " over " << l.tolerance
            << ", worst rel err " << l.worst.rel_error << " (" << l.worst.where << ")\n";
  const auto n = gradcheck::check_network();
  std::cout << "network: " << n.checked << " parameters, " << n.failures << " over " << n.tolerance
            << ", worst rel err " << n.worst.rel_error << " (" << n.worst.where << ")\n";
  return l.passed() && n.passed() ? 0 : 1;
}

int cmd_shapes(bool full_size, const std::string& config_path) {
  unet::NetConfig net;
  if (full_size) {
    net = unet::NetConfig::full_size();
  } else if (!config_path.empty()) {
    net = harness::load_train_config(config_path).net;
  }
  const auto plan = unet::plan_shapes(net);
  std::cout << std::left;
  for (const auto& l : plan.layers) {
    std::cout << std::setw(12) << l.label() << std::setw(20) << unet::dims_str(l.input) << unet::dims_str(l.output)
              << '\n';
  }
  if (!full_size) return 0;
  const auto diffs = unet::diff_against_reference(plan);
  for (const auto& d : diffs) std::cerr << d << '\n';
  std::cout << (diffs.empty() ? "all " + std::to_string(plan.layers.size()) + " rows match the reference table\n"
                              : "MISMATCH\n");
  return diffs.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tversky-loss 3D U-net segmentation on synthetic volumes"};
  app.require_subcommand(1);

  std::string config, out, data_dir, fold = "a", ckpt, pairs, seeds;
  std::size_t count = 10, instances = 100;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  bool full_size = false, checkpoints = false;

  auto* gen = app.add_subcommand("gen", "write synthetic TVOL1 volumes");
  gen->add_option("--config", config, "synth or training config JSON")->required();
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--subjects", count, "number of subjects");

  auto* train = app.add_subcommand("train", "train one fold and write a TVNET1 checkpoint");
  train->add_option("--config", config, "training config JSON")->required();
  train->add_option("--fold", fold, "training fold, a or b");
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--data", data_dir, "directory of .tvol files (default: generate from config)");
  train->add_option("--seed", seed, "data/split/init seed (default: first config seed)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt, "TVNET1 checkpoint")->required();
  eval->add_option("--data", data_dir, "directory of .tvol files")->required();
  eval->add_option("--threshold", threshold, "decision threshold on p0");
  eval->add_option("--out", out, "report JSON path")->required();

  auto* sweep = app.add_subcommand("sweep", "alpha/beta sweep with two-fold CV");
  sweep->add_option("--config", config, "training config JSON")->required();
  sweep->add_option("--pairs", pairs, "alpha:beta list, e.g. 0.5:0.5,0.3:0.7");
  sweep->add_option("--seeds", seeds, "comma-separated seeds");
  sweep->add_option("--out", out, "results directory")->required();
  sweep->add_flag("--checkpoints", checkpoints, "also write one checkpoint per run");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--instances", instances, "random loss instances");

  auto* shapes = app.add_subcommand("shapes", "print the layer shape plan");
  shapes->add_flag("--paper", full_size, "full-size configuration, checked against the reference table");
  shapes->add_option("--config", config, "training config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) return cmd_gen(config, out, count);
    if (*train) return cmd_train(config, fold, out, data_dir, seed);
    if (*eval) return cmd_eval(ckpt, data_dir, threshold, out);
    if (*sweep) return cmd_sweep(config, pairs, seeds, out, checkpoints);
    if (*grad) return cmd_gradcheck(instances);
    if (*shapes) return cmd_shapes(full_size, config);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
