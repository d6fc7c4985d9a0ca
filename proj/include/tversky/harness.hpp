#pragma once

// Training loop, fold evaluation, and the (alpha, beta) sweep with its report
// files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tversky/adam.hpp"
#include "tversky/data.hpp"
#include "tversky/loss.hpp"
#include "tversky/metrics.hpp"
#include "tversky/unet.hpp"

namespace tversky::harness {

struct TrainConfig {
  std::size_t epochs = 150;
  loss::TverskyParams tversky{0.3, 0.7, 1e-6};
  unet::NetConfig net;
  data::SynthConfig synth;
  optim::AdamConfig adam{3e-3};
  std::size_t subjects = 10;
  double threshold = 0.5;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("train: threshold must be in [0, 1]");
    if (subjects < 2) throw ConfigError("train: need at least 2 subjects for two-fold CV");
    if (seeds.empty()) throw ConfigError("train: seeds must not be empty");
    tversky.validate();
    net.validate();
    synth.validate();
    adam.validate();
    if (net.input_shape != synth.volume_shape) throw ConfigError("train: net.input_shape must equal synth.volume_shape");
    if (net.in_channels != synth.channels) throw ConfigError("train: net.in_channels must equal synth.channels");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"tversky", {{"alpha", c.tversky.alpha}, {"beta", c.tversky.beta}, {"epsilon", c.tversky.epsilon}}},
                     {"net", c.net},
                     {"synth", c.synth},
                     {"adam", c.adam},
                     {"subjects", c.subjects},
                     {"threshold", c.threshold},
                     {"seeds", c.seeds}};
}

/// Missing keys take the desk-scale defaults. `net.input_shape` and
/// `net.in_channels` follow the synth section unless given explicitly.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.tversky = d.tversky;
  if (j.contains("tversky")) {
    const auto& t = j.at("tversky");
    c.tversky.alpha = t.value("alpha", d.tversky.alpha);
    c.tversky.beta = t.value("beta", d.tversky.beta);
    c.tversky.epsilon = t.value("epsilon", d.tversky.epsilon);
  }
  c.synth = j.contains("synth") ? j.at("synth").get<data::SynthConfig>() : d.synth;
  c.net = j.contains("net") ? j.at("net").get<unet::NetConfig>() : d.net;
  if (!j.contains("net") || !j.at("net").contains("input_shape")) c.net.input_shape = c.synth.volume_shape;
  if (!j.contains("net") || !j.at("net").contains("in_channels")) c.net.in_channels = c.synth.channels;
  c.adam = j.contains("adam") ? j.at("adam").get<optim::AdamConfig>() : d.adam;
  c.subjects = j.value("subjects", d.subjects);
  c.threshold = j.value("threshold", d.threshold);
  c.seeds = j.value("seeds", d.seeds);
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(is).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Called after each epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

struct TrainResult {
  unet::NetParams params;
  std::vector<double> loss_history;  // mean loss per epoch
};

/// One Adam step per training subject per epoch on the whole-volume loss.
/// Initialization uses net.seed; subjects are visited in the given order.
inline TrainResult train_fold(const std::vector<data::LabeledVolume>& train, const unet::NetConfig& net,
                              const loss::TverskyParams& tversky, const optim::AdamConfig& adam,
                              std::size_t epochs, const EpochCallback& on_epoch = {}) {
  if (train.empty()) throw ConfigError("train_fold: need at least one training subject");
  TrainResult result{unet::init_params(net), {}};
  std::vector<loss::LabelPlanes> labels;
  for (const auto& s : train) labels.push_back(loss::LabelPlanes::from_binary(s.labels));
  optim::AdamState state(adam);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto fwd = unet::forward(net, result.params, train[i].image);
      const auto value = loss::tversky_loss_forward(fwd.planes, labels[i], tversky);
      if (!std::isfinite(value.loss)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch + 1 << ", subject " << train[i].subject_id
           << ": sum p0g0=" << value.counts.true_pos << " sum p0g1=" << value.counts.false_pos
           << " sum p1g0=" << value.counts.false_neg;
        throw NumericError(os.str());
      }
      total += value.loss;
      const auto grad_planes = loss::tversky_loss_backward(fwd.planes, labels[i], tversky);
      const auto grads = unet::backward(net, result.params, fwd.cache, grad_planes);
      optim::adam_step(result.params, grads, state);
    }
    result.loss_history.push_back(total / static_cast<double>(train.size()));
    if (on_epoch) on_epoch(epoch, result.loss_history.back());
  }
  return result;
}

inline TrainResult train_fold(const std::vector<data::LabeledVolume>& train, const TrainConfig& config,
                              const EpochCallback& on_epoch = {}) {
  return train_fold(train, config.net, config.tversky, config.adam, config.epochs, on_epoch);
}

/// Metric values as fractions in [0, 1].
struct MetricRow {
  double dsc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f2 = 0.0;
  double apr = 0.0;

  MetricRow& operator+=(const MetricRow& o) {
    dsc += o.dsc;
    sensitivity += o.sensitivity;
    specificity += o.specificity;
    f2 += o.f2;
    apr += o.apr;
    return *this;
  }
  MetricRow scaled(double k) const { return {dsc * k, sensitivity * k, specificity * k, f2 * k, apr * k}; }
};

inline nlohmann::json row_json(const MetricRow& r) {
  return {{"dsc", r.dsc}, {"sensitivity", r.sensitivity}, {"specificity", r.specificity}, {"f2", r.f2}, {"apr", r.apr}};
}

struct SubjectMetrics {
  std::string subject_id;
  metrics::ConfusionCounts counts;
  MetricRow row;
  double precision = 0.0;
  metrics::PRCurve curve;
};

struct FoldEvaluation {
  std::vector<SubjectMetrics> subjects;
  MetricRow macro;  // mean of per-subject values
  MetricRow micro;  // from pooled counts and the pooled PR curve
};

inline SubjectMetrics subject_metrics(const std::string& id, const Tensor& p0, const Tensor& labels, double threshold) {
  SubjectMetrics s;
  s.subject_id = id;
  s.counts = metrics::confusion(metrics::binarize(p0, threshold), labels);
  s.row = {metrics::dsc(s.counts), metrics::sensitivity(s.counts), metrics::specificity(s.counts),
           metrics::f2(s.counts), 0.0};
  s.precision = metrics::precision(s.counts);
  s.curve = metrics::pr_curve(p0, labels);
  s.row.apr = s.curve.apr;
  return s;
}

namespace detail {

inline Tensor pool_planes(const std::vector<const Tensor*>& parts) {
  std::size_t n = 0;
  for (const auto* t : parts) n += t->size();
  std::vector<double> values;
  values.reserve(n);
  for (const auto* t : parts) values.insert(values.end(), t->data().begin(), t->data().end());
  return Tensor({n}, std::move(values));
}

}  // namespace detail

/// Scores already-computed lesion probability planes against their subjects.
inline FoldEvaluation evaluate_predictions(const std::vector<Tensor>& p0s,
                                           const std::vector<data::LabeledVolume>& subjects, double threshold) {
  if (p0s.size() != subjects.size()) throw ConfigError("evaluate: prediction/subject count mismatch");
  if (subjects.empty()) throw ConfigError("evaluate: no test subjects");
  FoldEvaluation ev;
  metrics::ConfusionCounts pooled;
  std::vector<const Tensor*> scores, labels;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    require_same_shape(p0s[i], subjects[i].labels, "evaluate");
    ev.subjects.push_back(subject_metrics(subjects[i].subject_id, p0s[i], subjects[i].labels, threshold));
    ev.macro += ev.subjects.back().row;
    pooled += ev.subjects.back().counts;
    scores.push_back(&p0s[i]);
    labels.push_back(&subjects[i].labels);
  }
  ev.macro = ev.macro.scaled(1.0 / static_cast<double>(subjects.size()));
  ev.micro = {metrics::dsc(pooled), metrics::sensitivity(pooled), metrics::specificity(pooled), metrics::f2(pooled),
              metrics::pr_curve(detail::pool_planes(scores), detail::pool_planes(labels)).apr};
  return ev;
}

inline std::vector<Tensor> predict_lesion(const unet::NetConfig& net, const unet::NetParams& params,
                                          const std::vector<data::LabeledVolume>& subjects) {
  std::vector<Tensor> p0s;
  for (const auto& s : subjects) p0s.push_back(unet::forward(net, params, s.image, false).planes.p0);
  return p0s;
}

inline FoldEvaluation evaluate_fold(const unet::NetConfig& net, const unet::NetParams& params,
                                    const std::vector<data::LabeledVolume>& test, double threshold) {
  return evaluate_predictions(predict_lesion(net, params, test), test, threshold);
}

inline nlohmann::json evaluation_json(const FoldEvaluation& ev, double threshold) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : ev.subjects) {
    subjects.push_back({{"subject_id", s.subject_id},
                        {"tp", s.counts.tp},
                        {"fp", s.counts.fp},
                        {"fn", s.counts.fn},
                        {"tn", s.counts.tn},
                        {"precision", s.precision},
                        {"metrics", row_json(s.row)}});
  }
  return {{"threshold", threshold},
          {"conventions",
           {{"precision_without_predictions", 1.0},
            {"dsc_f2_empty_vs_empty", 1.0},
            {"apr", "step-wise average precision, sum (R_k - R_{k-1}) P_k"},
            {"aggregate", "macro = mean over subjects; micro = pooled counts and pooled PR curve"}}},
          {"subjects", subjects},
          {"macro", row_json(ev.macro)},
          {"micro", row_json(ev.micro)}};
}

struct AlphaBeta {
  double alpha;
  double beta;
};

inline std::vector<AlphaBeta> default_pairs() { return {{0.5, 0.5}, {0.4, 0.6}, {0.3, 0.7}, {0.2, 0.8}, {0.1, 0.9}}; }

/// Parses "0.5:0.5,0.4:0.6".
inline std::vector<AlphaBeta> parse_pairs(const std::string& text) {
  std::vector<AlphaBeta> pairs;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("pair '" + item + "' is not alpha:beta");
    try {
      std::size_t ua = 0, ub = 0;
      const std::string a = item.substr(0, colon), b = item.substr(colon + 1);
      AlphaBeta p{std::stod(a, &ua), std::stod(b, &ub)};
      if (ua != a.size() || ub != b.size()) throw std::invalid_argument(item);
      loss::TverskyParams{p.alpha, p.beta}.validate();
      pairs.push_back(p);
    } catch (const std::logic_error&) {
      throw ConfigError("pair '" + item + "' is not alpha:beta");
    }
  }
  if (pairs.empty()) throw ConfigError("no alpha:beta pairs given");
  return pairs;
}

/// Shortest decimal form, e.g. 0.5 -> "0.5".
inline std::string number_tag(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// One trained network, identified by pair, seed, and the fold it trained on.
struct RunRecord {
  AlphaBeta pair;
  std::uint64_t seed;
  char train_fold;  // 'a' or 'b'; evaluated on the other fold
  std::vector<double> loss_history;
  FoldEvaluation evaluation;
};

struct SweepRow {
  AlphaBeta pair;
  MetricRow mean;   // mean over runs of each run's macro average, fractions
  MetricRow micro;  // pooled over every test subject of every run
  std::vector<SubjectMetrics> subjects;
  metrics::PRCurve pooled_curve;  // scores quantized to 1e-6
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<RunRecord> runs;

  const SweepRow& row(double alpha, double beta) const {
    for (const auto& r : rows) {
      if (r.pair.alpha == alpha && r.pair.beta == beta) return r;
    }
    throw ConfigError("no sweep row for alpha=" + number_tag(alpha) + " beta=" + number_tag(beta));
  }
};

struct SweepOptions {
  std::vector<AlphaBeta> pairs = default_pairs();
  std::vector<std::uint64_t> seeds;  // empty: use TrainConfig::seeds
  std::string out_dir;               // empty: write nothing
  bool write_checkpoints = false;
  std::ostream* log = nullptr;
  /// Observes every trained network (e.g. for extra evaluations).
  std::function<void(const RunRecord&, const unet::NetParams&, const unet::NetConfig&)> on_run;
};

/// Writes table.csv: alpha,beta,dsc,sensitivity,specificity,f2,apr with
/// metrics in percent.
inline void write_table_csv(std::ostream& os, const SweepReport& report) {
  os << "alpha,beta,dsc,sensitivity,specificity,f2,apr\n" << std::fixed << std::setprecision(6);
  for (const auto& r : report.rows) {
    os << r.pair.alpha << ',' << r.pair.beta << ',' << 100.0 * r.mean.dsc << ',' << 100.0 * r.mean.sensitivity << ','
       << 100.0 * r.mean.specificity << ',' << 100.0 * r.mean.f2 << ',' << 100.0 * r.mean.apr << '\n';
  }
}

/// Markdown rendering with the layout of the published results table.
inline std::string render_table(const SweepReport& report) {
  std::ostringstream os;
  os << "| Penalties | DSC | Sensitivity | Specificity | F2 score | APR score |\n"
     << "|---|---|---|---|---|---|\n"
     << std::fixed << std::setprecision(2);
  for (const auto& r : report.rows) {
    os << "| alpha = " << r.pair.alpha << ", beta = " << r.pair.beta << " | " << 100.0 * r.mean.dsc << " | "
       << 100.0 * r.mean.sensitivity << " | " << 100.0 * r.mean.specificity << " | " << 100.0 * r.mean.f2 << " | "
       << 100.0 * r.mean.apr << " |\n";
  }
  return os.str();
}

/// PR curves of every row as SVG polylines (recall on x, precision on y).
inline std::string render_pr_svg(const SweepReport& report) {
  static constexpr const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << std::fixed << std::setprecision(2)
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"400\" viewBox=\"0 0 480 400\">\n"
     << "<rect x=\"40\" y=\"20\" width=\"320\" height=\"320\" fill=\"none\" stroke=\"black\"/>\n"
     << "<text x=\"200\" y=\"370\" text-anchor=\"middle\" font-size=\"12\">recall</text>\n"
     << "<text x=\"15\" y=\"180\" font-size=\"12\" transform=\"rotate(-90 15 180)\">precision</text>\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const char* color = colors[i % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& p : r.pooled_curve.points) os << 40.0 + 320.0 * p.recall << ',' << 340.0 - 320.0 * p.precision << ' ';
    os << "\"/>\n<text x=\"370\" y=\"" << 40 + 16 * i << "\" font-size=\"11\" fill=\"" << color << "\">a=" << r.pair.alpha
       << " b=" << r.pair.beta << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline nlohmann::json sweep_json(const SweepReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json subjects = nlohmann::json::array();
    for (const auto& s : r.subjects) {
      subjects.push_back({{"subject_id", s.subject_id},
                          {"tp", s.counts.tp},
                          {"fp", s.counts.fp},
                          {"fn", s.counts.fn},
                          {"tn", s.counts.tn},
                          {"metrics", row_json(s.row)}});
    }
    rows.push_back({{"alpha", r.pair.alpha},
                    {"beta", r.pair.beta},
                    {"mean_percent", row_json(r.mean.scaled(100.0))},
                    {"micro_percent", row_json(r.micro.scaled(100.0))},
                    {"subjects", subjects},
                    {"pr_csv", "pr_" + number_tag(r.pair.alpha) + "_" + number_tag(r.pair.beta) + ".csv"}});
  }
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : report.runs) {
    runs.push_back({{"alpha", run.pair.alpha},
                    {"beta", run.pair.beta},
                    {"seed", run.seed},
                    {"train_fold", std::string(1, run.train_fold)},
                    {"final_loss", run.loss_history.empty() ? 0.0 : run.loss_history.back()},
                    {"macro", row_json(run.evaluation.macro)}});
  }
  return {{"rows", rows}, {"runs", runs}};
}

/// For every seed: generate `config.subjects` volumes (synth seed = run
/// seed), split them two ways (split seed = run seed), then for every pair
/// train on each fold (init seed = run seed) and evaluate on the other.
inline SweepReport run_sweep(const TrainConfig& config, const SweepOptions& options) {
  config.validate();
  if (options.pairs.empty()) throw ConfigError("sweep: pair list is empty");
  const auto seeds = options.seeds.empty() ? config.seeds : options.seeds;
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  namespace fs = std::filesystem;
  if (!options.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir + ": " + ec.message());
  }

  SweepReport report;
  for (const auto& pair : options.pairs) report.rows.push_back({pair, {}, {}, {}, {}});
  std::vector<std::vector<Tensor>> pooled_scores(options.pairs.size()), pooled_labels(options.pairs.size());
  std::vector<metrics::ConfusionCounts> pooled_counts(options.pairs.size());

  for (const auto seed : seeds) {
    data::SynthConfig synth = config.synth;
    synth.seed = seed;
    const auto subjects = data::generate_subjects(synth, config.subjects);
    const auto [fold_a, fold_b] = data::two_fold_split(subjects, seed);
    unet::NetConfig net = config.net;
    net.seed = seed;
    for (std::size_t pi = 0; pi < options.pairs.size(); ++pi) {
      const auto& pair = options.pairs[pi];
      const loss::TverskyParams tversky{pair.alpha, pair.beta, config.tversky.epsilon};
      for (const char which : {'a', 'b'}) {
        const auto& train = which == 'a' ? fold_a : fold_b;
        const auto& test = which == 'a' ? fold_b : fold_a;
        auto trained = train_fold(train, net, tversky, config.adam, config.epochs);
        const auto p0s = predict_lesion(net, trained.params, test);
        RunRecord run{pair, seed, which, std::move(trained.loss_history), evaluate_predictions(p0s, test, config.threshold)};
        if (options.log) {
          *options.log << "alpha=" << pair.alpha << " beta=" << pair.beta << " seed=" << seed << " train_fold=" << which
                       << " final_loss=" << run.loss_history.back() << " dsc=" << run.evaluation.macro.dsc
                       << " sens=" << run.evaluation.macro.sensitivity << " spec=" << run.evaluation.macro.specificity
                       << " f2=" << run.evaluation.macro.f2 << " apr=" << run.evaluation.macro.apr << std::endl;
        }
        if (options.write_checkpoints && !options.out_dir.empty()) {
          unet::save_checkpoint((fs::path(options.out_dir) / ("ckpt_" + number_tag(pair.alpha) + "_" + number_tag(pair.beta) +
                                                              "_seed" + std::to_string(seed) + "_fold" + which + ".tvnet"))
                                    .string(),
                                net, trained.params);
        }
        if (options.on_run) options.on_run(run, trained.params, net);
        auto& row = report.rows[pi];
        row.mean += run.evaluation.macro;
        for (std::size_t i = 0; i < test.size(); ++i) {
          row.subjects.push_back(run.evaluation.subjects[i]);
          row.subjects.back().curve = {};
          pooled_counts[pi] += run.evaluation.subjects[i].counts;
          Tensor q = p0s[i];
          for (double& v : q.data()) v = std::round(v * 1e6) / 1e6;
          pooled_scores[pi].push_back(std::move(q));
          pooled_labels[pi].push_back(test[i].labels);
        }
        report.runs.push_back(std::move(run));
        report.runs.back().evaluation.subjects.clear();
      }
    }
  }

  for (std::size_t pi = 0; pi < report.rows.size(); ++pi) {
    auto& row = report.rows[pi];
    row.mean = row.mean.scaled(1.0 / (2.0 * static_cast<double>(seeds.size())));
    std::vector<const Tensor*> s, l;
    for (const auto& t : pooled_scores[pi]) s.push_back(&t);
    for (const auto& t : pooled_labels[pi]) l.push_back(&t);
    row.pooled_curve = metrics::pr_curve(detail::pool_planes(s), detail::pool_planes(l));
    const auto& c = pooled_counts[pi];
    row.micro = {metrics::dsc(c), metrics::sensitivity(c), metrics::specificity(c), metrics::f2(c), row.pooled_curve.apr};
    pooled_scores[pi].clear();
    pooled_labels[pi].clear();
  }

  if (!options.out_dir.empty()) {
    const fs::path dir(options.out_dir);
    auto open = [](const fs::path& p) {
      std::ofstream os(p, std::ios::binary | std::ios::trunc);
      if (!os) throw IoError("cannot open " + p.string() + " for writing");
      return os;
    };
    {
      auto os = open(dir / "table.csv");
      write_table_csv(os, report);
    }
    {
      auto os = open(dir / "table.md");
      os << render_table(report);
    }
    {
      auto os = open(dir / "report.json");
      os << sweep_json(report).dump(2) << '\n';
    }
    {
      auto os = open(dir / "pr.svg");
      os << render_pr_svg(report);
    }
    for (const auto& row : report.rows) {
      metrics::write_pr_csv((dir / ("pr_" + number_tag(row.pair.alpha) + "_" + number_tag(row.pair.beta) + ".csv")).string(),
                            row.pooled_curve);
    }
  }
  return report;
}

}  // namespace tversky::harness
