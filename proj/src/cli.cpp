#include "ssse/cli.hpp"

#include "ssse/erasure.hpp"
#include "ssse/errors.hpp"
#include "ssse/io.hpp"
#include "ssse/parallel.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace ssse {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSplitSalt = 0x9E3779B97F4A7C15ULL;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) { return io::format_double(v); }

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); }

fs::path resolve(const ExperimentConfig& cfg, const fs::path& p) {
  return p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p;
}

void require_file(const fs::path& p, const std::string& field) {
  if (!fs::exists(p)) throw ConfigError(field, "file not found: " + p.string());
}

ModelShape shape_for(const ExperimentConfig& cfg, const Dataset& train) {
  if (cfg.model.kind == "mlp") return ModelShape::mlp(train.dim(), cfg.model.hidden, train.num_outputs());
  if (train.task() == TaskKind::MultiAttribute) return ModelShape::multi_attr_linear(train.num_outputs(), train.dim());
  return ModelShape::multinomial_linear(train.num_outputs(), train.dim());
}

TaskKind task_of(const ExperimentConfig& cfg) {
  return cfg.data.task == "multi_attribute" ? TaskKind::MultiAttribute : TaskKind::Multinomial;
}

SweepCriterion criterion_for(const ExperimentConfig& cfg) {
  if (cfg.sweep.criterion) return *cfg.sweep.criterion;
  return task_of(cfg) == TaskKind::MultiAttribute ? SweepCriterion::MaxGamma : SweepCriterion::MinDelta;
}

// Runs a callable and logs a line around it when verbose.
struct Log {
  std::ostream* err = nullptr;
  void operator()(const std::string& line) const {
    if (err) *err << "[ssse] " << line << '\n';
  }
};

}  // namespace

// ---------------------------------------------------------------- pipelines

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  const TaskKind task = task_of(cfg);
  Dataset all;
  TrainTest parts;
  if (d.source == "csv") {
    const fs::path tf = resolve(cfg, d.train_features), tl = resolve(cfg, d.train_labels);
    require_file(tf, "data.train_features");
    require_file(tl, "data.train_labels");
    all = load_csv(tf, tl, task, d.num_classes);
    if (!d.test_features.empty()) {
      const fs::path sf = resolve(cfg, d.test_features), sl = resolve(cfg, d.test_labels);
      require_file(sf, "data.test_features");
      require_file(sl, "data.test_labels");
      std::optional<int> classes = d.num_classes;
      if (task == TaskKind::Multinomial && !classes) classes = all.num_outputs();
      parts = {all, load_csv(sf, sl, task, classes)};
    } else {
      parts = split_train_test(all, d.test_fraction, d.seed ^ kSplitSalt);
    }
  } else {
    if (d.source == "blobs")
      all = make_blobs(d.seed, d.n_per_class, d.centers, d.spread, task);
    else if (d.source == "gaussian")
      all = make_gaussian_classes(d.seed, d.classes, d.dim, d.n_per_class, d.separation, d.noise);
    else
      all = make_multi_attribute(d.seed, d.n, d.dim, d.frequencies, d.signal, d.noise);
    parts = split_train_test(all, d.test_fraction, d.seed ^ kSplitSalt);
  }
  if (parts.test.dim() != parts.train.dim())
    throw ConfigError("data.test_features", "test features have " + std::to_string(parts.test.dim()) +
                                                " columns, train features " + std::to_string(parts.train.dim()));
  if (cfg.removal.index >= parts.train.num_outputs())
    throw ConfigError("removal.index", "index " + std::to_string(cfg.removal.index) + " exceeds the " +
                                           std::to_string(parts.train.num_outputs()) + " outputs of the task");
  SplitSet splits = build_splits(parts.train, parts.test, cfg.removal);
  ModelShape shape = shape_for(cfg, parts.train);
  return {std::move(parts.train), std::move(parts.test), std::move(splits), shape};
}

FisherConfig fisher_config(const ExperimentConfig& cfg) {
  return FisherConfig{cfg.fisher.effective_dampening(cfg.loss), cfg.fisher.batch_size};
}

BlockSpec fisher_blocks(const ExperimentConfig& cfg, const ModelShape& shape) {
  return BlockSpec::for_shape(shape, cfg.fisher.max_block);
}

SweepOutcome run_sweep(const ExperimentConfig& cfg) {
  SweepOutcome out;
  out.data = prepare_data(cfg);
  const PreparedData& d = out.data;

  // The original model and the retrained reference are independent.
  parallel_for(2, [&](std::size_t job) {
    if (job == 0)
      out.original = train(d.train, d.shape, cfg.loss, cfg.train);
    else
      out.retrain = retrain_scratch(d.train, d.splits.removed, d.shape, cfg.loss, cfg.train);
  });
  out.finv = build_inverse_fisher(out.original.params, d.train, cfg.loss, fisher_config(cfg),
                                  fisher_blocks(cfg, d.shape));
  out.sweep = epsilon_sweep(out.original.params, out.finv, d.train, d.test, d.splits, out.retrain.params,
                            cfg.sweep.epsilons, criterion_for(cfg), cfg.loss);
  out.original_report = evaluate_erasure(out.original.params, out.original.params, out.retrain.params, d.train,
                                         d.test, d.splits, cfg.loss);
  out.retrain_report = evaluate_erasure(out.retrain.params, out.original.params, out.retrain.params, d.train,
                                        d.test, d.splits, cfg.loss);
  return out;
}

BoundaryDemo run_boundary_demo(const ExperimentConfig& cfg) {
  const PreparedData d = prepare_data(cfg);
  if (d.train.dim() != 2) throw ConfigError("data.dim", "the boundary demo needs 2D inputs");
  if (!d.shape.is_linear()) throw ConfigError("model.kind", "the boundary demo compares linear models");

  TrainResult original, retrain;
  parallel_for(2, [&](std::size_t job) {
    if (job == 0)
      original = train(d.train, d.shape, cfg.loss, cfg.train);
    else
      retrain = retrain_scratch(d.train, d.splits.removed, d.shape, cfg.loss, cfg.train);
  });
  const InverseFisher finv =
      build_inverse_fisher(original.params, d.train, cfg.loss, fisher_config(cfg), fisher_blocks(cfg, d.shape));

  BoundaryDemo out;
  const auto& grid = cfg.sweep.epsilons;
  std::vector<double> disagreement(grid.size());
  std::vector<ModelParams> candidates(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    candidates[i] = ssse_update(original.params, finv, d.train, d.splits.removed, grid[i], cfg.loss);
    disagreement[i] = boundary_disagreement(candidates[i], retrain.params, cfg.demo_grid);
  });
  const auto best = static_cast<std::size_t>(
      std::min_element(disagreement.begin(), disagreement.end()) - disagreement.begin());
  const ModelParams& ssse = candidates[best];
  const ModelParams full = influence_update(original.params, d.train, d.splits.removed, cfg.loss, HessianSource::Full);
  const ModelParams lko =
      influence_update(original.params, d.train, d.splits.removed, cfg.loss, HessianSource::LeaveOut);

  out.best_epsilon = grid[best];
  out.original = boundary_disagreement(original.params, retrain.params, cfg.demo_grid);
  out.ssse_best = disagreement[best];
  out.influence_full = boundary_disagreement(full, retrain.params, cfg.demo_grid);
  out.influence_lko = boundary_disagreement(lko, retrain.params, cfg.demo_grid);

  const Matrix points = cfg.demo_grid.points();
  const std::vector<std::int64_t> cols[5] = {
      predict_labels(original.params, points), predict_labels(retrain.params, points), predict_labels(ssse, points),
      predict_labels(full, points), predict_labels(lko, points)};
  std::ostringstream csv;
  csv << "x,y,original,retrain,ssse,influence_full,influence_lko\n";
  for (Index i = 0; i < points.rows(); ++i) {
    csv << num(points(i, 0)) << ',' << num(points(i, 1));
    for (const auto& c : cols) csv << ',' << c[static_cast<std::size_t>(i)];
    csv << '\n';
  }
  out.csv = csv.str();

  std::ostringstream s;
  s << "# boundary demo\n"
    << "config_digest = " << hex64(cfg.digest()) << '\n'
    << "train_size = " << d.train.size() << '\n'
    << "removed = " << d.splits.removed.size() << '\n'
    << "grid_points = " << points.rows() << '\n'
    << "best_epsilon = " << num(out.best_epsilon) << " (criterion = min_boundary_disagreement)\n"
    << "disagreement_original = " << num(out.original) << '\n'
    << "disagreement_ssse = " << num(out.ssse_best) << '\n'
    << "disagreement_influence_full = " << num(out.influence_full) << '\n'
    << "disagreement_influence_lko = " << num(out.influence_lko) << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i)
    s << "sweep epsilon = " << num(grid[i]) << " disagreement = " << num(disagreement[i]) << '\n';
  out.summary = s.str();
  return out;
}

BaselineComparison run_baseline_comparison(const ExperimentConfig& cfg) {
  SweepOutcome sw = run_sweep(cfg);
  const PreparedData& d = sw.data;
  const SweepCriterion criterion = criterion_for(cfg);
  const auto& grid = cfg.sweep.epsilons;

  const Vector diag = diagonal_inverse_fisher(sw.original.params, d.train, cfg.loss, fisher_config(cfg).dampening);
  std::vector<EvalReport> scrub_reports(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const ModelParams hat = diag_scrub_update(sw.original.params, diag, d.train, d.splits.removed, grid[i], cfg.loss,
                                              cfg.baselines.scrub_noise, cfg.baselines.scrub_seed);
    scrub_reports[i] = evaluate_erasure(hat, sw.original.params, sw.retrain.params, d.train, d.test, d.splits, cfg.loss);
    scrub_reports[i].epsilon = grid[i];
  });
  const std::size_t scrub_best = select_best(scrub_reports, criterion);

  const ModelParams ga = gradient_ascent_step(sw.original.params, d.train, d.splits.removed, cfg.loss,
                                              cfg.baselines.ga_lr);
  EvalReport ga_report =
      evaluate_erasure(ga, sw.original.params, sw.retrain.params, d.train, d.test, d.splits, cfg.loss);

  BaselineComparison out;
  out.methods.push_back({"original", "-", sw.original_report});
  out.methods.push_back({"ssse", "epsilon=" + num(sw.sweep.best_epsilon), sw.sweep.reports[sw.sweep.best_index]});
  out.methods.push_back({"gradient_ascent", "lr=" + num(cfg.baselines.ga_lr), ga_report});
  out.methods.push_back({"diag_scrub",
                         "epsilon=" + num(grid[scrub_best]) + ";noise=" + num(cfg.baselines.scrub_noise),
                         scrub_reports[scrub_best]});
  const EvalReport& ref = sw.retrain_report;
  const auto delta = [](const SplitMetrics& a, const SplitMetrics& b) {
    return a.accuracy && b.accuracy ? std::abs(*a.accuracy - *b.accuracy) : 0.0;
  };
  for (auto& m : out.methods) {
    m.acc_delta[0] = delta(m.report.lko_train, ref.lko_train);
    m.acc_delta[1] = delta(m.report.removed, ref.removed);
    m.acc_delta[2] = delta(m.report.lko_test, ref.lko_test);
    m.acc_delta[3] = delta(m.report.removed_test, ref.removed_test);
  }

  const char* split_names[4] = {"lko_train", "removed", "lko_test", "removed_test"};
  std::ostringstream text, csv;
  text << "# baseline comparison\n"
       << "config_digest = " << hex64(cfg.digest()) << '\n'
       << "criterion = " << criterion_name(criterion) << '\n'
       << "removed = " << d.splits.removed.size() << '\n';
  const auto acc_of = [](const EvalReport& r, int s) {
    const SplitMetrics* m[4] = {&r.lko_train, &r.removed, &r.lko_test, &r.removed_test};
    return m[s]->accuracy;
  };
  text << "\n[retrain]\n";
  for (int s = 0; s < 4; ++s) text << "acc_" << split_names[s] << " = " << opt(acc_of(ref, s)) << '\n';
  csv << "method,setting,gamma,delta,param_dist";
  for (int s = 0; s < 4; ++s) csv << ",acc_" << split_names[s];
  for (int s = 0; s < 4; ++s) csv << ",abs_delta_acc_" << split_names[s];
  csv << '\n';
  for (const auto& m : out.methods) {
    text << "\n[" << m.method << "]\n"
         << "setting = " << m.setting << '\n'
         << "gamma = " << opt(m.report.gamma) << '\n'
         << "delta = " << opt(m.report.delta) << '\n'
         << "param_dist_normalized = " << opt(m.report.param_dist_normalized) << '\n';
    for (int s = 0; s < 4; ++s) text << "acc_" << split_names[s] << " = " << opt(acc_of(m.report, s)) << '\n';
    for (int s = 0; s < 4; ++s) text << "abs_delta_acc_" << split_names[s] << " = " << num(m.acc_delta[s]) << '\n';
    csv << m.method << ',' << m.setting << ',' << opt(m.report.gamma) << ',' << opt(m.report.delta) << ','
        << opt(m.report.param_dist_normalized);
    for (int s = 0; s < 4; ++s) csv << ',' << opt(acc_of(m.report, s));
    for (int s = 0; s < 4; ++s) csv << ',' << num(m.acc_delta[s]);
    csv << '\n';
  }
  out.text = text.str();
  out.csv = csv.str();
  return out;
}

// ---------------------------------------------------------------- commands

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string model;
  std::string fisher;
  bool verbose = false;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out_dir;
  Log log;
  std::ostream* out = nullptr;
};

Context make_context(const Options& o, std::ostream& out, std::ostream& err) {
  Context c;
  c.cfg = ExperimentConfig::from_file(o.config);
  c.out_dir = o.out.empty() ? resolve(c.cfg, c.cfg.output_dir) : fs::path(o.out);
  c.log.err = o.verbose ? &err : nullptr;
  c.out = &out;
  return c;
}

void wrote(const Context& c, const fs::path& p) { *c.out << "wrote " << p.generic_string() << '\n'; }

ModelFile load_checked_model(const Context& c, const fs::path& path, const PreparedData& d) {
  require_file(path, "--model");
  ModelFile m = load_model(path);
  if (!(m.params.shape == d.shape))
    throw ConfigError("--model", "model shape " + m.params.shape.name() + " does not match the configured " +
                                     d.shape.name());
  if (m.loss.l2_coeff != c.cfg.loss.l2_coeff)
    throw ConfigError("loss.l2", "differs from the value stored in the model file (" + num(m.loss.l2_coeff) + ")");
  return m;
}

int cmd_train(const Context& c) {
  const PreparedData d = prepare_data(c.cfg);
  c.log("training " + d.shape.name() + " on " + std::to_string(d.train.size()) + " samples");
  const TrainResult r = train(d.train, d.shape, c.cfg.loss, c.cfg.train);
  const ModelFile model{r.params, c.cfg.loss};
  const auto bytes = encode_model(model);
  const fs::path model_path = c.out_dir / "model.bin";
  io::write_file_atomic(model_path, bytes);
  std::ostringstream m;
  m << "command = train\n"
    << "config_digest = " << hex64(c.cfg.digest()) << '\n'
    << "data_seed = " << c.cfg.data.seed << '\n'
    << "train_seed = " << c.cfg.train.seed << '\n'
    << "model_shape = " << d.shape.name() << '\n'
    << "train_size = " << d.train.size() << '\n'
    << "epochs_run = " << r.epochs_run << '\n'
    << "final_loss = " << num(r.final_loss) << '\n'
    << "final_grad_norm = " << num(r.final_grad_norm) << '\n'
    << "model_digest = " << hex64(io::fnv1a(bytes)) << '\n';
  for (const auto& w : r.warnings) m << "warning = " << w << '\n';
  const fs::path manifest = c.out_dir / "train_manifest.txt";
  io::write_file_atomic(manifest, m.str());
  wrote(c, model_path);
  wrote(c, manifest);
  return kExitOk;
}

int cmd_fisher(const Context& c, const Options& o) {
  const PreparedData d = prepare_data(c.cfg);
  const fs::path model_path = o.model.empty() ? c.out_dir / "model.bin" : fs::path(o.model);
  const ModelFile m = load_checked_model(c, model_path, d);
  c.log("building inverse Fisher over " + std::to_string(d.train.size()) + " samples");
  const InverseFisher finv =
      build_inverse_fisher(m.params, d.train, m.loss, fisher_config(c.cfg), fisher_blocks(c.cfg, d.shape));
  const fs::path path = c.out_dir / "fisher.bin";
  save_inverse_fisher(finv, path);
  wrote(c, path);
  return kExitOk;
}

int cmd_erase(const Context& c, const Options& o) {
  const PreparedData d = prepare_data(c.cfg);
  const fs::path model_path = o.model.empty() ? c.out_dir / "model.bin" : fs::path(o.model);
  const fs::path fisher_path = o.fisher.empty() ? c.out_dir / "fisher.bin" : fs::path(o.fisher);
  const ModelFile m = load_checked_model(c, model_path, d);
  require_file(fisher_path, "--fisher");
  const InverseFisher finv = load_inverse_fisher(fisher_path);
  const auto& grid = c.cfg.sweep.epsilons;
  std::ostringstream manifest;
  manifest << "command = erase\n"
           << "config_digest = " << hex64(c.cfg.digest()) << '\n'
           << "removed = " << d.splits.removed.size() << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const ModelParams hat = ssse_update(m.params, finv, d.train, d.splits.removed, grid[i], m.loss);
    char name[64];
    std::snprintf(name, sizeof name, "erased_%03zu.bin", i);
    const fs::path path = c.out_dir / name;
    save_model(ModelFile{hat, m.loss}, path);
    manifest << name << " epsilon = " << num(grid[i]) << '\n';
    wrote(c, path);
  }
  const fs::path mpath = c.out_dir / "erase_manifest.txt";
  io::write_file_atomic(mpath, manifest.str());
  wrote(c, mpath);
  return kExitOk;
}

int cmd_sweep(const Context& c) {
  c.log("running sweep over " + std::to_string(c.cfg.sweep.epsilons.size()) + " epsilon values");
  const SweepOutcome s = run_sweep(c.cfg);
  std::ostringstream text;
  text << "config_digest = " << hex64(c.cfg.digest()) << '\n'
       << "best_epsilon = " << num(s.sweep.best_epsilon) << " (criterion = " << criterion_name(s.sweep.criterion)
       << ")\n"
       << "removed = " << s.data.splits.removed.size() << '\n'
       << "original_epochs = " << s.original.epochs_run << '\n'
       << "original_grad_norm = " << num(s.original.final_grad_norm) << '\n'
       << "retrain_epochs = " << s.retrain.epochs_run << '\n'
       << "retrain_grad_norm = " << num(s.retrain.final_grad_norm) << '\n';
  for (const auto& w : s.retrain.warnings) text << "warning = retrain: " << w << '\n';
  text << '\n' << format_report_text(std::span(&s.original_report, 1), "original model");
  text << '\n' << format_report_text(std::span(&s.retrain_report, 1), "retrained reference");
  text << '\n' << format_report_text(s.sweep.reports, "ssse sweep");
  const fs::path tpath = c.out_dir / "sweep_report.txt";
  const fs::path cpath = c.out_dir / "sweep_report.csv";
  io::write_file_atomic(tpath, text.str());
  io::write_file_atomic(cpath, format_report_csv(s.sweep.reports));
  *c.out << "best_epsilon = " << num(s.sweep.best_epsilon) << " (criterion = " << criterion_name(s.sweep.criterion)
         << ")\n";
  wrote(c, tpath);
  wrote(c, cpath);
  return kExitOk;
}

int cmd_demo(const Context& c) {
  const BoundaryDemo demo = run_boundary_demo(c.cfg);
  const fs::path cpath = c.out_dir / "boundary.csv";
  const fs::path spath = c.out_dir / "boundary_summary.txt";
  io::write_file_atomic(cpath, demo.csv);
  io::write_file_atomic(spath, demo.summary);
  *c.out << "disagreement with retrain: original " << num(demo.original) << ", ssse " << num(demo.ssse_best)
         << ", influence_full " << num(demo.influence_full) << ", influence_lko " << num(demo.influence_lko) << '\n';
  wrote(c, cpath);
  wrote(c, spath);
  return kExitOk;
}

int cmd_baselines(const Context& c) {
  const BaselineComparison b = run_baseline_comparison(c.cfg);
  const fs::path tpath = c.out_dir / "baselines_report.txt";
  const fs::path cpath = c.out_dir / "baselines_report.csv";
  io::write_file_atomic(tpath, b.text);
  io::write_file_atomic(cpath, b.csv);
  wrote(c, tpath);
  wrote(c, cpath);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-step sample erasure experiments"};
  app.name("ssse");
  app.require_subcommand(1);
  Options o;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config file")->required();
    sub->add_option("--out", o.out, "output directory (overrides output.dir)");
    sub->add_flag("--verbose", o.verbose, "progress on stderr");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train the original model");
  CLI::App* fisher_cmd = app.add_subcommand("fisher", "build and store the inverse Fisher");
  CLI::App* erase_cmd = app.add_subcommand("erase", "apply SSSE for every epsilon in the grid");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train, erase over the grid, evaluate");
  CLI::App* demo_cmd = app.add_subcommand("demo-boundary", "2D decision-boundary comparison");
  CLI::App* base_cmd = app.add_subcommand("compare-baselines", "SSSE vs gradient ascent vs diagonal scrub");
  for (CLI::App* sub : {train_cmd, fisher_cmd, erase_cmd, sweep_cmd, demo_cmd, base_cmd}) add_common(sub);
  for (CLI::App* sub : {fisher_cmd, erase_cmd}) sub->add_option("--model", o.model, "model file (default <out>/model.bin)");
  erase_cmd->add_option("--fisher", o.fisher, "inverse Fisher file (default <out>/fisher.bin)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    const Context c = make_context(o, out, err);
    if (*train_cmd) return cmd_train(c);
    if (*fisher_cmd) return cmd_fisher(c, o);
    if (*erase_cmd) return cmd_erase(c, o);
    if (*sweep_cmd) return cmd_sweep(c);
    if (*demo_cmd) return cmd_demo(c);
    return cmd_baselines(c);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitInput;
  } catch (const StaleFisher& e) {
    err << "stale inverse Fisher: " << e.what() << '\n';
    return kExitInput;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitInput;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitInput;
  } catch (const Unsupported& e) {
    err << "unsupported: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace ssse
