#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prevfuse/io.hpp"

namespace {

using namespace prevfuse;

struct Options {
  std::string data, config, out, grid, thresholds;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  bool threads_given = false;
};

std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    size_t idx = 0;
    const double v = std::stod(cur, &idx);
    if (idx != cur.size() || !(v > 0.0 && v < 1.0))
      throw std::invalid_argument("--thresholds entries must be numbers in (0,1)");
    out.push_back(v);
    cur.clear();
  };
  for (char c : s) {
    if (c == ',') {
      flush();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  flush();
  return out;
}

std::uint64_t resolve_seed(const Options& opt, const RunConfig& run) {
  return opt.seed_given ? opt.seed : run.seed;
}

int resolve_threads(const Options& opt, const RunConfig& run) {
  const int t = opt.threads_given ? opt.threads : run.threads;
  if (t < 1) throw std::invalid_argument("thread count must be positive");
  return t;
}

int cmd_simulate(const Options& opt) {
  RunConfig run = load_run_config(opt.config);
  const std::uint64_t seed = resolve_seed(opt, run);
  const LoadedData sim = simulate_cli_dataset(run, seed);
  const std::vector<std::string> lines = {
      "# command=simulate", "# version=" + std::string(kVersion),
      "# seed=" + std::to_string(seed), "# config_hash=" + run.hash};
  write_data_csv(opt.out, sim.data, sim.time_index, lines);
  std::cout << "wrote " << sim.data.total_n() << " rows across " << sim.data.n_surveys()
            << " surveys to " << opt.out << "\n";
  return 0;
}

FitResult run_fit(const IngestResult& ing, std::uint64_t seed) {
  FitConfig fc = ing.run.fitcfg;
  fc.seed = seed;
  return fit(ing.data, ing.spec, default_init(ing.data, ing.spec), fc);
}

int cmd_fit(const Options& opt) {
  const IngestResult ing = ingest(opt.data, opt.config);
  const std::uint64_t seed = resolve_seed(opt, ing.run);
  const FitResult res = run_fit(ing, seed);
  std::vector<ReportRow> rows = report_rows(res, ing.data, ing.spec);
  add_asymptotic_intervals(rows, res, ing.data, ing.spec);
  const ReportMeta meta{"fit", seed, ing.run.hash};
  write_fit_report_json(opt.out, rows, res, ing.data, ing.spec, meta, nullptr);
  std::cout << fit_report_text(rows, res);
  return 0;
}

int cmd_predict(const Options& opt) {
  const IngestResult ing = ingest(opt.data, opt.config);
  const std::uint64_t seed = resolve_seed(opt, ing.run);
  const LoadedGrid raw = read_grid_csv(opt.grid);
  const int target = ing.run.doc.get_int("predict", "target_survey", 1);
  if (target < 1 || target > ing.spec.n_surveys)
    throw std::invalid_argument("config key 'predict.target_survey' must be in 1.." +
                                std::to_string(ing.spec.n_surveys));
  const bool nugget = ing.run.doc.get_bool("predict", "include_nugget", true);
  const PredictionGrid grid = make_prediction_grid(raw, ing.data, target - 1, nugget);
  grid.validate(ing.data, ing.spec);

  const FitResult res = run_fit(ing, seed);
  const PredictiveSurface surf =
      sample_predictive_surfaces(res.importance.samples, grid, res.estimate, ing.data,
                                 ing.spec, mix_seed(seed, 0x9d1));
  const std::vector<double> thresholds = parse_thresholds(opt.thresholds);
  const PredictiveSummary summary = summarize(surf, thresholds);
  const ReportMeta meta{"predict", seed, ing.run.hash};
  write_prediction_csv(opt.out, grid, summary, meta);
  std::cout << "wrote " << grid.q() << " prediction rows to " << opt.out << "\n";
  return 0;
}

int cmd_bootstrap(const Options& opt) {
  const IngestResult ing = ingest(opt.data, opt.config);
  const std::uint64_t seed = resolve_seed(opt, ing.run);
  const FitResult res = run_fit(ing, seed);
  BootstrapConfig bc = ing.run.bootcfg;
  bc.threads = resolve_threads(opt, ing.run);
  bc.seed = mix_seed(seed, 0xB5);
  const BootstrapResult boot = parametric_bootstrap(res.estimate, ing.data, ing.spec, bc);
  std::vector<ReportRow> rows = report_rows(res, ing.data, ing.spec);
  add_bootstrap_intervals(rows, boot);
  const ReportMeta meta{"bootstrap", seed, ing.run.hash};
  write_fit_report_json(opt.out, rows, res, ing.data, ing.spec, meta, &boot);
  std::cout << fit_report_text(rows, res);
  if (boot.exclusion_warning)
    std::cout << "WARNING: " << boot.excluded << " of " << boot.requested
              << " bootstrap refits failed and were excluded\n";
  return 0;
}

int cmd_simstudy(const Options& opt) {
  RunConfig run = load_run_config(opt.config);
  const std::uint64_t seed = resolve_seed(opt, run);
  const IniDoc& d = run.doc;
  const std::string name = d.require("simstudy", "scenario");
  const int replicates = d.get_int("simstudy", "replicates", 100);

  Scenario sc;
  if (name == "ident-1" || name == "ident-2" || name == "ident-3")
    sc = make_ident_scenario(name.back() - '0', replicates, seed);
  else if (name == "qv")
    sc = make_qv_scenario(d.get_double("simstudy", "nu2", 1.0), replicates, seed);
  else if (name == "tv")
    sc = make_tv_scenario(d.get_double("simstudy", "alpha", 0.8), replicates, seed);
  else
    throw std::invalid_argument("config key 'simstudy.scenario': unknown scenario '" +
                                name + "'");
  sc.chain.total = d.get_int("simstudy", "total", sc.chain.total);
  sc.chain.burnin = d.get_int("simstudy", "burnin", sc.chain.burnin);
  sc.chain.thin = d.get_int("simstudy", "thin", sc.chain.thin);
  sc.threads = resolve_threads(opt, run);

  const MetricsTable table = run_scenario(sc);
  const ReportMeta meta{"simstudy", seed, run.hash};
  write_metrics_csv(opt.out, sc.label, table, meta);
  std::cout << "wrote " << table.rows.size() << " metric rows to " << opt.out << " ("
            << table.failures << " failed fits)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-survey prevalence model: simulate, fit, predict, bootstrap, simstudy"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* cmd, bool needs_data, bool needs_grid) {
    if (needs_data) cmd->add_option("--data", opt.data, "data CSV")->required();
    cmd->add_option("--config", opt.config, "config file")->required();
    cmd->add_option("--out", opt.out, "output path")->required();
    cmd->add_option("--seed", opt.seed, "seed override");
    cmd->add_option("--threads", opt.threads, "worker thread count");
    if (needs_grid) cmd->add_option("--grid", opt.grid, "prediction grid CSV")->required();
  };

  CLI::App* c_sim = app.add_subcommand("simulate", "draw a synthetic dataset");
  add_common(c_sim, false, false);
  CLI::App* c_fit = app.add_subcommand("fit", "maximum likelihood fit");
  add_common(c_fit, true, false);
  CLI::App* c_pred = app.add_subcommand("predict", "prevalence surface on a grid");
  add_common(c_pred, true, true);
  c_pred->add_option("--thresholds", opt.thresholds, "comma-separated exceedance thresholds");
  CLI::App* c_boot = app.add_subcommand("bootstrap", "parametric bootstrap intervals");
  add_common(c_boot, true, false);
  CLI::App* c_study = app.add_subcommand("simstudy", "replicated simulation study");
  add_common(c_study, false, false);

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  opt.seed_given = sub->count("--seed") > 0;
  opt.threads_given = sub->count("--threads") > 0;

  std::string command = "?";
  try {
    if (c_sim->parsed()) {
      command = "simulate";
      return cmd_simulate(opt);
    }
    if (c_fit->parsed()) {
      command = "fit";
      return cmd_fit(opt);
    }
    if (c_pred->parsed()) {
      command = "predict";
      return cmd_predict(opt);
    }
    if (c_boot->parsed()) {
      command = "bootstrap";
      return cmd_bootstrap(opt);
    }
    if (c_study->parsed()) {
      command = "simstudy";
      return cmd_simstudy(opt);
    }
  } catch (const std::exception& e) {
    std::cout << error_json(command, e.what());
    return 1;
  }
  return 2;
}
