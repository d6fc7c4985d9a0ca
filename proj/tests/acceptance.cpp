// End-to-end acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [--only N,...]
//
// Exits nonzero if any selected criterion fails.

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tversky/tversky.hpp"

using namespace tversky;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  if (!o.pass) ++failures;
  std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
            << std::endl;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

Outcome loss_gradient() {
  const auto t0 = Clock::now();
  gradcheck::LossCheckOptions opt;  // 100 instances, 2..64 voxels, five pairs, tolerance 1e-5
  const auto rep = gradcheck::check_loss(opt);
  const double s = seconds_since(t0);
  return {rep.passed() && s < 10.0, std::to_string(rep.checked) + " partials over " +
                                        std::to_string(opt.instances) + " instances, worst rel err " +
                                        fmt(rep.worst.rel_error) + ", " + fmt(s, 3) + " s"};
}

Outcome network_gradient() {
  const auto t0 = Clock::now();
  const auto rep = gradcheck::check_network();  // 8^3 input, 1 level, base 2, tolerance 1e-4
  const double s = seconds_since(t0);
  return {rep.passed() && s < 120.0, std::to_string(rep.checked) + " parameters, " +
                                         std::to_string(rep.failures) + " over tolerance, worst rel err " +
                                         fmt(rep.worst.rel_error) + " at " + rep.worst.where + ", " + fmt(s, 3) +
                                         " s"};
}

// Hard-count identities: the soft index on binary planes against the closed
// forms. epsilon = 1e-12 keeps the smoothing term below the 1e-10 tolerance.
Outcome identities() {
  const double tol = 1e-10, eps = 1e-12;
  const loss::TverskyParams dice{0.5, 0.5, eps}, f2{0.2, 0.8, eps}, tani{1.0, 1.0, eps};
  double worst = 0.0;
  std::size_t cases = 0;
  auto check = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
    ++cases;
  };
  for (std::size_t n = 1; n <= 6; ++n) {
    for (unsigned pm = 0; pm < (1u << n); ++pm) {
      for (unsigned gm = 0; gm < (1u << n); ++gm) {
        Tensor p({n}), g({n});
        for (std::size_t i = 0; i < n; ++i) {
          p[i] = (pm >> i) & 1u;
          g[i] = (gm >> i) & 1u;
        }
        const auto pred = loss::PredictionPlanes::from_lesion(p);
        const auto lab = loss::LabelPlanes::from_binary(g);
        const auto c = metrics::confusion(p, g);
        check(loss::tversky_loss_forward(pred, lab, dice).index, metrics::dsc(c));
        check(loss::tversky_loss_forward(pred, lab, f2).index, metrics::f2(c));
        check(loss::tversky_loss_forward(pred, lab, tani).index, metrics::jaccard(c));
      }
    }
  }
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::uint64_t> count(0, 100000);
  for (int i = 0; i < 1000; ++i) {
    const metrics::ConfusionCounts c{count(rng), count(rng), count(rng), count(rng)};
    check(loss::tversky_index_sets(c, dice), metrics::dsc(c));
    check(loss::tversky_index_sets(c, f2), metrics::f2(c));
    check(loss::tversky_index_sets(c, tani), metrics::jaccard(c));
  }
  return {worst < tol, std::to_string(cases) + " comparisons, max abs diff " + fmt(worst)};
}

Outcome shape_plan() {
  const auto t0 = Clock::now();
  const auto plan = unet::plan_shapes(unet::NetConfig::full_size());
  const auto diffs = unet::diff_against_reference(plan);
  const double s = seconds_since(t0);
  std::string detail = std::to_string(plan.layers.size()) + " rows, " + std::to_string(diffs.size()) +
                       " mismatches, " + fmt(s * 1e3, 3) + " ms";
  if (!diffs.empty()) detail += "; first: " + diffs.front();
  return {diffs.empty() && plan.layers.size() == 26 && s < 1.0, detail};
}

Outcome metrics_oracle() {
  const Tensor scores({4}, std::vector<double>{0.9, 0.8, 0.7, 0.3});
  const Tensor labels({4}, std::vector<double>{1, 1, 0, 1});
  const auto curve = metrics::pr_curve(scores, labels);
  const double want_p[] = {1.0, 1.0, 2.0 / 3.0, 0.75};
  const double want_r[] = {1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0};
  bool seq = curve.points.size() == 4;
  for (std::size_t k = 0; seq && k < 4; ++k) {
    seq = std::abs(curve.points[k].precision - want_p[k]) < 1e-12 &&
          std::abs(curve.points[k].recall - want_r[k]) < 1e-12;
  }
  const bool apr_ok = std::abs(curve.apr - 0.9167) <= 1e-4;

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double density = 0.02 + 0.5 * u(rng);
    Tensor p({6, 6, 6}), g({6, 6, 6});
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = u(rng) < density;
      g[i] = u(rng) < density;
      if (p[i] && g[i]) ++tp;
      else if (p[i]) ++fp;
      else if (g[i]) ++fn;
      else ++tn;
    }
    const auto c = metrics::confusion(p, g);
    const double dsc = tp + fp + fn == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn);
    const double f2 = tp + fp + fn == 0 ? 1.0 : 5 * tp / (5 * tp + 4 * fn + fp);
    if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn || std::abs(metrics::dsc(c) - dsc) > 1e-15 ||
        std::abs(metrics::f2(c) - f2) > 1e-15) {
      ++mismatches;
    }
  }
  return {seq && apr_ok && mismatches == 0, "APR " + fmt(curve.apr, 6) + (seq ? ", PR sequence matches" : ", PR sequence differs") +
                                                ", " + std::to_string(mismatches) + "/1000 random volumes disagree"};
}

// Desk-scale sweep configuration shared by the trend criteria.
harness::TrainConfig sweep_config() {
  harness::TrainConfig c;
  c.epochs = 30;
  c.subjects = 10;
  c.seeds = {1, 2, 3};
  return c;
}

struct TrendResult {
  Outcome trend;
  Outcome low_density;
  harness::SweepReport report;
  unet::NetConfig net;
  unet::NetParams some_params;
};

TrendResult beta_trend(const fs::path& out) {
  const auto config = sweep_config();
  // Low-density probe subjects: one per seed, lesion fraction well under 5e-4.
  data::SynthConfig sparse = config.synth;
  sparse.foreground_fraction_target = 0.0003;
  sparse.lesion_count_range = {1, 1};
  std::map<std::uint64_t, data::LabeledVolume> probes;
  for (auto seed : config.seeds) {
    sparse.seed = seed;
    probes.emplace(seed, data::generate_subject(sparse, 1000));
  }
  std::map<double, std::vector<double>> sparse_sens;  // beta -> per-run sensitivity
  TrendResult r;
  harness::SweepOptions opt;
  opt.out_dir = out.string();
  opt.log = &std::cerr;
  opt.on_run = [&](const harness::RunRecord& run, const unet::NetParams& params, const unet::NetConfig& net) {
    if (run.pair.beta != 0.5 && run.pair.beta != 0.7) return;
    const auto& probe = probes.at(run.seed);
    const auto p0 = unet::forward(net, params, probe.image, false).planes.p0;
    const auto c = metrics::confusion(metrics::binarize(p0, config.threshold), probe.labels);
    sparse_sens[run.pair.beta].push_back(metrics::sensitivity(c));
    if (r.some_params.layers.empty()) {
      r.some_params = params;
      r.net = net;
    }
  };
  const auto t0 = Clock::now();
  r.report = harness::run_sweep(config, opt);
  const double s = seconds_since(t0);

  std::ostringstream detail;
  detail << std::fixed << std::setprecision(4);
  bool sens_up = true, spec_down = true;
  const auto& rows = r.report.rows;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    sens_up = sens_up && rows[i].mean.sensitivity > rows[i - 1].mean.sensitivity;
    spec_down = spec_down && rows[i].mean.specificity < rows[i - 1].mean.specificity;
  }
  std::size_t best_f2 = 0, best_apr = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].mean.f2 > rows[best_f2].mean.f2) best_f2 = i;
    if (rows[i].mean.apr > rows[best_apr].mean.apr) best_apr = i;
  }
  auto interior = [&](std::size_t i) {
    const double b = rows[i].pair.beta;
    return std::abs(b - 0.6) < 1e-9 || std::abs(b - 0.7) < 1e-9 || std::abs(b - 0.8) < 1e-9;
  };
  detail << "sens";
  for (const auto& row : rows) detail << ' ' << 100 * row.mean.sensitivity;
  detail << " | spec";
  for (const auto& row : rows) detail << ' ' << 100 * row.mean.specificity;
  detail << " | best F2 at beta=" << rows[best_f2].pair.beta << ", best APR at beta=" << rows[best_apr].pair.beta
         << " | " << std::setprecision(0) << s << " s";
  r.trend = {sens_up && spec_down && interior(best_f2) && interior(best_apr) && s <= 3600.0, detail.str()};

  auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return v.empty() ? 0.0 : t / static_cast<double>(v.size());
  };
  double max_frac = 0.0;
  for (const auto& [seed, probe] : probes) max_frac = std::max(max_frac, probe.foreground_fraction());
  const double s05 = mean(sparse_sens[0.5]), s07 = mean(sparse_sens[0.7]);
  std::ostringstream d6;
  d6 << std::fixed << std::setprecision(4) << "foreground fraction <= " << max_frac << ", mean sensitivity beta=0.5 "
     << s05 << " (" << sparse_sens[0.5].size() << " nets), beta=0.7 " << s07 << " (" << sparse_sens[0.7].size()
     << " nets)";
  r.low_density = {max_frac <= 0.0005 && s07 > s05, d6.str()};
  return r;
}

Outcome persistence(const fs::path& out, const TrendResult* trained) {
  // table.csv determinism on a reduced configuration run twice
  harness::TrainConfig c;
  c.synth.volume_shape = {16, 16, 16};
  c.net.input_shape = {16, 16, 16};
  c.synth.foreground_fraction_target = 0.01;
  c.epochs = 3;
  c.subjects = 4;
  c.seeds = {1, 2};
  harness::SweepOptions opt;
  opt.pairs = {{0.5, 0.5}, {0.3, 0.7}};
  opt.out_dir = (out / "determinism_1").string();
  harness::run_sweep(c, opt);
  opt.out_dir = (out / "determinism_2").string();
  harness::run_sweep(c, opt);
  const bool table_same = binary_io::read_file((out / "determinism_1" / "table.csv").string()) ==
                          binary_io::read_file((out / "determinism_2" / "table.csv").string());

  unet::NetConfig net = c.net;
  unet::NetParams params = unet::init_params(net);
  if (trained && !trained->some_params.layers.empty()) {
    net = trained->net;
    params = trained->some_params;
  }
  const auto ckpt = (out / "roundtrip.tvnet").string();
  unet::save_checkpoint(ckpt, net, params);
  const auto back = unet::load_checkpoint(ckpt);
  const bool ckpt_same = back.config == net && back.params == params;

  const auto vol = data::generate_subject(harness::TrainConfig{}.synth, 0);
  const auto vpath = (out / "roundtrip.tvol").string();
  data::write_volume(vpath, vol);
  const bool vol_same = data::read_volume(vpath) == vol;
  return {table_same && ckpt_same && vol_same,
          std::string("table.csv ") + (table_same ? "identical" : "DIFFERS") + ", checkpoint round trip " +
              (ckpt_same ? "bit-exact" : "DIFFERS") + ", TVOL1 round trip " + (vol_same ? "bit-exact" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--out", out, "scratch/output directory");
  app.add_option("--only", only, "run just these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  const fs::path dir(out);
  fs::create_directories(dir);

  if (want(1)) report(1, "loss gradient vs finite differences", loss_gradient());
  if (want(2)) report(2, "whole-network gradient check", network_gradient());
  if (want(3)) report(3, "Tversky special-case identities", identities());
  if (want(4)) report(4, "full-size shape plan", shape_plan());
  TrendResult trend;
  const bool ran_sweep = want(5) || want(6);
  if (ran_sweep) trend = beta_trend(dir / "sweep");
  if (want(5)) report(5, "beta trend over the sweep", trend.trend);
  if (want(6)) report(6, "low-density detection, beta 0.7 vs 0.5", trend.low_density);
  if (want(7)) report(7, "metrics oracle", metrics_oracle());
  if (want(8)) report(8, "determinism and persistence", persistence(dir, ran_sweep ? &trend : nullptr));

  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
