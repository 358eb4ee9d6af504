#include "prevfuse/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "prevfuse/model.hpp"
#include "prevfuse/rng.hpp"

namespace prevfuse {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t idx = 0;
    const double v = std::stod(s, &idx);
    if (idx != s.size() || !std::isfinite(v))
      throw std::invalid_argument("bad number");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": expected a finite number, got '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& where) {
  const double v = parse_double(s, where);
  if (v != std::floor(v))
    throw std::invalid_argument(where + ": expected an integer, got '" + s + "'");
  return static_cast<long>(v);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<std::string> meta_lines(const ReportMeta& meta) {
  return {"# command=" + meta.command, "# version=" + std::string(kVersion),
          "# seed=" + std::to_string(meta.seed), "# config_hash=" + meta.config_hash};
}

}  // namespace

// ---------------------------------------------------------------------------
// config document
// ---------------------------------------------------------------------------

IniDoc IniDoc::parse_string(const std::string& text, const std::string& origin) {
  IniDoc doc;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw std::invalid_argument(where + ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(where + ": expected key=value, got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(where + ": empty key");
    if (section.empty())
      throw std::invalid_argument(where + ": key '" + key + "' outside any [section]");
    for (const auto& e : doc.entries_)
      if (e[0] == section && e[1] == key)
        throw std::invalid_argument(where + ": duplicate key '" + section + "." + key + "'");
    doc.entries_.push_back({section, key, value});
  }
  return doc;
}

IniDoc IniDoc::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

bool IniDoc::has(const std::string& section, const std::string& key) const {
  for (const auto& e : entries_)
    if (e[0] == section && e[1] == key) return true;
  return false;
}

std::string IniDoc::require(const std::string& section, const std::string& key) const {
  for (const auto& e : entries_)
    if (e[0] == section && e[1] == key) return e[2];
  throw std::invalid_argument("config is missing required key '" + section + "." + key + "'");
}

std::string IniDoc::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
  return has(section, key) ? require(section, key) : fallback;
}

double IniDoc::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  if (!has(section, key)) return fallback;
  return parse_double(require(section, key), "config key '" + section + "." + key + "'");
}

int IniDoc::get_int(const std::string& section, const std::string& key,
                    int fallback) const {
  if (!has(section, key)) return fallback;
  return static_cast<int>(
      parse_long(require(section, key), "config key '" + section + "." + key + "'"));
}

bool IniDoc::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = require(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + section + "." + key +
                              "': expected a boolean, got '" + v + "'");
}

std::uint64_t IniDoc::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = require(section, key);
  try {
    size_t idx = 0;
    const unsigned long long u = std::stoull(v, &idx);
    if (idx != v.size()) throw std::invalid_argument("trailing characters");
    return u;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + section + "." + key +
                                "': expected an unsigned integer, got '" + v + "'");
  }
}

std::vector<double> IniDoc::get_doubles(const std::string& section,
                                        const std::string& key) const {
  std::vector<double> out;
  if (!has(section, key)) return out;
  const std::string where = "config key '" + section + "." + key + "'";
  for (const std::string& tok : split_csv(require(section, key)))
    if (!tok.empty()) out.push_back(parse_double(tok, where));
  return out;
}

std::vector<int> IniDoc::get_ints(const std::string& section,
                                  const std::string& key) const {
  std::vector<int> out;
  if (!has(section, key)) return out;
  const std::string where = "config key '" + section + "." + key + "'";
  for (const std::string& tok : split_csv(require(section, key)))
    if (!tok.empty()) out.push_back(static_cast<int>(parse_long(tok, where)));
  return out;
}

std::vector<std::string> IniDoc::get_names(const std::string& section,
                                           const std::string& key) const {
  std::vector<std::string> out;
  if (!has(section, key)) return out;
  for (const std::string& tok : split_csv(require(section, key)))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::string config_hash(const IniDoc& doc) {
  std::vector<std::string> items;
  for (const auto& e : doc.entries())
    items.push_back(e[0] + '\x1f' + e[1] + '\x1f' + e[2]);
  std::sort(items.begin(), items.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& s : items) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0x1e;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig run;
  run.doc = IniDoc::parse_file(path);
  run.hash = config_hash(run.doc);
  const IniDoc& d = run.doc;

  for (int b : d.get_ints("model", "biased")) {
    if (b != 0 && b != 1)
      throw std::invalid_argument("config key 'model.biased': entries must be 0 or 1");
    run.biased.push_back(b == 1);
  }
  run.use_covariates = d.get_names("model", "covariates");
  run.bias_covariates = d.get_names("model", "bias_covariates");
  run.standardize = d.get_bool("model", "standardize", false);
  run.tie_tau2 = d.get_bool("model", "tie_tau2", true);
  if (d.has("model", "fixed_tau2"))
    run.fixed_tau2 = d.get_double("model", "fixed_tau2", 0.0);

  run.chain.total = d.get_int("chain", "total", run.chain.total);
  run.chain.burnin = d.get_int("chain", "burnin", run.chain.burnin);
  run.chain.thin = d.get_int("chain", "thin", run.chain.thin);
  run.chain.step = d.get_double("chain", "step", run.chain.step);
  run.chain.target_accept = d.get_double("chain", "target_accept", run.chain.target_accept);
  run.chain.adapt = d.get_bool("chain", "adapt", run.chain.adapt);

  run.fitcfg.refresh_cap = d.get_int("mcml", "refresh_cap", run.fitcfg.refresh_cap);
  run.fitcfg.refresh_tol = d.get_double("mcml", "refresh_tol", run.fitcfg.refresh_tol);
  run.fitcfg.starts = d.get_int("mcml", "starts", run.fitcfg.starts);
  run.fitcfg.lambda_at_mode = d.get_bool("mcml", "lambda_at_mode", run.fitcfg.lambda_at_mode);
  run.fitcfg.chain = run.chain;

  run.seed = d.get_u64("mcml", "seed", 1);
  run.threads = d.get_int("mcml", "threads", 1);

  run.bootcfg.replicates = d.get_int("bootstrap", "replicates", run.bootcfg.replicates);
  run.bootcfg.chain.total = d.get_int("bootstrap", "total", run.bootcfg.chain.total);
  run.bootcfg.chain.burnin = d.get_int("bootstrap", "burnin", run.bootcfg.chain.burnin);
  run.bootcfg.chain.thin = d.get_int("bootstrap", "thin", run.bootcfg.chain.thin);
  run.bootcfg.refresh_cap = d.get_int("bootstrap", "refresh_cap", run.bootcfg.refresh_cap);
  run.bootcfg.refresh_tol = d.get_double("bootstrap", "refresh_tol", run.bootcfg.refresh_tol);
  run.bootcfg.starts = d.get_int("bootstrap", "starts", run.bootcfg.starts);
  return run;
}

// ---------------------------------------------------------------------------
// data files
// ---------------------------------------------------------------------------

LoadedData read_data_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open data file '" + path + "'");

  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    header = split_csv(t);
    break;
  }
  const std::vector<std::string> fixed = {"survey_id", "time_index", "x",
                                          "y",         "m",          "count"};
  if (header.size() < fixed.size())
    throw std::invalid_argument(path + ": header must start with survey_id,time_index,x,y,m,count");
  for (size_t i = 0; i < fixed.size(); ++i)
    if (header[i] != fixed[i])
      throw std::invalid_argument(path + ": header column " + std::to_string(i + 1) +
                                  " must be '" + fixed[i] + "', got '" + header[i] + "'");
  std::vector<std::string> cov_names(header.begin() + fixed.size(), header.end());
  for (size_t i = 0; i < cov_names.size(); ++i) {
    if (cov_names[i].empty())
      throw std::invalid_argument(path + ": empty covariate name in header");
    for (size_t j = 0; j < i; ++j)
      if (cov_names[j] == cov_names[i])
        throw std::invalid_argument(path + ": duplicate covariate name '" + cov_names[i] + "'");
  }

  struct Row {
    int survey, time;
    double x, y, m, count;
    std::vector<double> cov;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const std::vector<std::string> cells = split_csv(t);
    if (cells.size() != header.size())
      throw std::invalid_argument(where + ": expected " + std::to_string(header.size()) +
                                  " columns, got " + std::to_string(cells.size()));
    Row r;
    r.survey = static_cast<int>(parse_long(cells[0], where + " column 'survey_id'"));
    r.time = static_cast<int>(parse_long(cells[1], where + " column 'time_index'"));
    r.x = parse_double(cells[2], where + " column 'x'");
    r.y = parse_double(cells[3], where + " column 'y'");
    r.m = static_cast<double>(parse_long(cells[4], where + " column 'm'"));
    r.count = static_cast<double>(parse_long(cells[5], where + " column 'count'"));
    if (r.m < 1) throw std::invalid_argument(where + ": m must be at least 1");
    if (r.count < 0 || r.count > r.m)
      throw std::invalid_argument(where + ": count outside [0, m]");
    for (size_t c = fixed.size(); c < cells.size(); ++c)
      r.cov.push_back(parse_double(cells[c], where + " column '" + header[c] + "'"));

    if (rows.empty()) {
      if (r.survey != 1)
        throw std::invalid_argument(where + ": survey_id must start at 1");
    } else {
      const int prev = rows.back().survey;
      if (r.survey < prev)
        throw std::invalid_argument(where + ": rows must be grouped by survey_id");
      if (r.survey > prev + 1)
        throw std::invalid_argument(where + ": survey_id skips from " +
                                    std::to_string(prev) + " to " + std::to_string(r.survey) +
                                    "; values must be contiguous from 1");
      if (r.survey == prev && r.time != rows.back().time)
        throw std::invalid_argument(where + ": time_index changes within survey " +
                                    std::to_string(r.survey));
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no data rows");

  LoadedData out;
  const int n = static_cast<int>(rows.size());
  const int k = static_cast<int>(cov_names.size());
  out.data.loc.resize(n, 2);
  out.data.m.resize(n);
  out.data.y.resize(n);
  out.data.covariates.resize(n, k);
  out.data.covariate_names = cov_names;
  int current = 0;
  for (int i = 0; i < n; ++i) {
    const Row& r = rows[static_cast<size_t>(i)];
    out.data.loc(i, 0) = r.x;
    out.data.loc(i, 1) = r.y;
    out.data.m[i] = r.m;
    out.data.y[i] = r.count;
    for (int c = 0; c < k; ++c) out.data.covariates(i, c) = r.cov[static_cast<size_t>(c)];
    if (r.survey != current) {
      out.data.n_per_survey.push_back(0);
      out.time_index.push_back(r.time);
      current = r.survey;
    }
    out.data.n_per_survey.back() += 1;
  }
  out.data.validate();
  return out;
}

void write_data_csv(const std::string& path, const SurveyDataset& data,
                    const std::vector<int>& time_index,
                    const std::vector<std::string>& meta) {
  data.validate();
  if (time_index.size() != data.n_per_survey.size())
    throw std::invalid_argument("need one time index per survey");
  std::ostringstream out;
  for (const std::string& m : meta) out << m << "\n";
  out << "survey_id,time_index,x,y,m,count";
  for (const std::string& c : data.covariate_names) out << "," << c;
  out << "\n";
  for (int s = 0; s < data.n_surveys(); ++s) {
    const int off = data.survey_offset(s);
    for (int i = 0; i < data.n_per_survey[static_cast<size_t>(s)]; ++i) {
      const int r = off + i;
      out << (s + 1) << "," << time_index[static_cast<size_t>(s)] << ","
          << fmt(data.loc(r, 0)) << "," << fmt(data.loc(r, 1)) << ","
          << static_cast<long>(data.m[r]) << "," << static_cast<long>(data.y[r]);
      for (int c = 0; c < data.n_covariates(); ++c) out << "," << fmt(data.covariates(r, c));
      out << "\n";
    }
  }
  write_text_file(path, out.str());
}

IngestResult ingest(const std::string& data_path, const std::string& config_path) {
  IngestResult res;
  res.run = load_run_config(config_path);
  LoadedData loaded = read_data_csv(data_path);
  res.data = std::move(loaded.data);

  // covariate selection, by name, in the order requested
  if (!res.run.use_covariates.empty()) {
    std::vector<int> pick;
    for (const std::string& name : res.run.use_covariates) {
      int idx = -1;
      for (size_t j = 0; j < res.data.covariate_names.size(); ++j)
        if (res.data.covariate_names[j] == name) idx = static_cast<int>(j);
      if (idx < 0)
        throw std::invalid_argument("config references covariate '" + name +
                                    "' which is not in the data header");
      pick.push_back(idx);
    }
    MatrixXd sub(res.data.total_n(), static_cast<Eigen::Index>(pick.size()));
    for (size_t j = 0; j < pick.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = res.data.covariates.col(pick[j]);
    res.data.covariates = std::move(sub);
    res.data.covariate_names = res.run.use_covariates;
  }

  if (res.run.standardize) {
    for (int j = 0; j < res.data.n_covariates(); ++j) {
      auto col = res.data.covariates.col(j);
      const double mu = col.mean();
      const double sd = std::sqrt((col.array() - mu).square().sum() /
                                  std::max<double>(1, col.size() - 1));
      if (!(sd > 0))
        throw std::invalid_argument("covariate '" + res.data.covariate_names[static_cast<size_t>(j)] +
                                    "' is constant and cannot be standardized");
      col = (col.array() - mu) / sd;
    }
  }

  ModelSpec spec;
  spec.n_surveys = res.data.n_surveys();
  if (res.run.biased.empty())
    throw std::invalid_argument("config key 'model.biased' is required");
  if (static_cast<int>(res.run.biased.size()) != spec.n_surveys)
    throw std::invalid_argument("config key 'model.biased' has " +
                                std::to_string(res.run.biased.size()) + " entries but the data has " +
                                std::to_string(spec.n_surveys) + " surveys");
  spec.biased = res.run.biased;
  spec.time_index = loaded.time_index;
  for (const std::string& name : res.run.bias_covariates) {
    if (name == "intercept") {
      spec.bias_mask.push_back(0);
      continue;
    }
    int idx = -1;
    for (size_t j = 0; j < res.data.covariate_names.size(); ++j)
      if (res.data.covariate_names[j] == name) idx = static_cast<int>(j);
    if (idx < 0)
      throw std::invalid_argument("config references bias covariate '" + name +
                                  "' which is not in the model's covariate set");
    spec.bias_mask.push_back(1 + idx);
  }
  spec.tie_tau2 = res.run.tie_tau2;
  spec.fixed_tau2 = res.run.fixed_tau2;
  spec.validate();
  res.spec = spec;
  return res;
}

LoadedGrid read_grid_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open grid file '" + path + "'");
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    header = split_csv(t);
    break;
  }
  if (header.size() < 2 || header[0] != "x" || header[1] != "y")
    throw std::invalid_argument(path + ": grid header must start with x,y");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const std::vector<std::string> cells = split_csv(t);
    if (cells.size() != header.size())
      throw std::invalid_argument(where + ": expected " + std::to_string(header.size()) +
                                  " columns, got " + std::to_string(cells.size()));
    std::vector<double> r;
    for (size_t c = 0; c < cells.size(); ++c)
      r.push_back(parse_double(cells[c], where + " column '" + header[c] + "'"));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no grid rows");

  LoadedGrid g;
  const int q = static_cast<int>(rows.size());
  const int k = static_cast<int>(header.size()) - 2;
  g.loc.resize(q, 2);
  g.covariates.resize(q, k);
  g.names.assign(header.begin() + 2, header.end());
  for (int i = 0; i < q; ++i) {
    g.loc(i, 0) = rows[static_cast<size_t>(i)][0];
    g.loc(i, 1) = rows[static_cast<size_t>(i)][1];
    for (int c = 0; c < k; ++c)
      g.covariates(i, c) = rows[static_cast<size_t>(i)][static_cast<size_t>(c) + 2];
  }
  return g;
}

PredictionGrid make_prediction_grid(const LoadedGrid& grid, const SurveyDataset& data,
                                    int target_survey, bool include_nugget) {
  PredictionGrid out;
  out.loc = grid.loc;
  out.target_survey = target_survey;
  out.include_nugget = include_nugget;
  out.covariates.resize(grid.loc.rows(), data.n_covariates());
  for (int j = 0; j < data.n_covariates(); ++j) {
    const std::string& name = data.covariate_names[static_cast<size_t>(j)];
    int idx = -1;
    for (size_t c = 0; c < grid.names.size(); ++c)
      if (grid.names[c] == name) idx = static_cast<int>(c);
    if (idx < 0)
      throw std::invalid_argument("grid file lacks covariate column '" + name + "'");
    out.covariates.col(j) = grid.covariates.col(idx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// fit reports
// ---------------------------------------------------------------------------

namespace {

ReportRow make_row(std::string name, std::string label, double est, int idx) {
  ReportRow r;
  r.name = std::move(name);
  r.label = std::move(label);
  r.estimate = est;
  r.layout_index = idx;
  return r;
}

}  // namespace

std::vector<ReportRow> report_rows(const FitResult& fit, const SurveyDataset& data,
                                   const ModelSpec& spec) {
  const ParamLayout layout = ParamLayout::make(data, spec);
  const VectorXd nat = layout.to_natural(fit.estimate);
  const std::vector<std::string> beta_labels = design_column_names(data, spec);
  std::vector<ReportRow> rows;

  for (int j = 0; j < layout.n_beta; ++j)
    rows.push_back(make_row("beta" + std::to_string(j + 1),
                            beta_labels[static_cast<size_t>(j)], nat[j], j));
  rows.push_back(make_row("sigma2", "spatial variance", nat[layout.n_beta], layout.n_beta));

  const int psi0 = layout.n_beta + 1;
  if (spec.fixed_tau2) {
    rows.push_back(make_row("tau2", "nugget variance (held fixed)", *spec.fixed_tau2, -1));
  } else if (spec.tie_tau2) {
    const int idx = psi0 + layout.psi.n_nu;
    rows.push_back(make_row("tau2", "nugget variance", nat[idx], idx));
  } else {
    for (int i = 0; i < spec.n_surveys; ++i) {
      const int idx = psi0 + layout.psi.n_nu + i;
      rows.push_back(make_row("tau2_" + std::to_string(i + 1),
                              "nugget variance, survey " + std::to_string(i + 1), nat[idx], idx));
    }
  }

  int b = 0;
  for (int i = 0; i < spec.n_surveys; ++i) {
    if (!spec.biased[static_cast<size_t>(i)]) continue;
    const int idx = psi0 + b;
    const std::string name = spec.n_biased() == 1 ? "nu2" : "nu2_" + std::to_string(i + 1);
    rows.push_back(make_row(name, "bias-field variance, survey " + std::to_string(i + 1),
                            nat[idx], idx));
    ++b;
  }

  const int k_fields = spec.n_fields();
  for (int f = 0; f < k_fields; ++f)
    for (int g = f + 1; g < k_fields; ++g) {
      const int a = spec.alpha_index(f, g);
      const int idx = psi0 + layout.psi.alpha_index(a);
      const std::string name = layout.psi.n_alpha == 1
                                   ? "alpha"
                                   : "alpha_" + std::to_string(f + 1) + std::to_string(g + 1);
      rows.push_back(make_row(name,
                              "cross-correlation, periods " + std::to_string(f + 1) + "," +
                                  std::to_string(g + 1),
                              nat[idx], idx));
    }

  rows.push_back(make_row("phi", "prevalence correlation range",
                          nat[psi0 + layout.psi.phi_index()], psi0 + layout.psi.phi_index()));
  if (layout.psi.has_delta)
    rows.push_back(make_row("delta", "bias correlation range",
                            nat[psi0 + layout.psi.delta_index()],
                            psi0 + layout.psi.delta_index()));
  return rows;
}

void add_asymptotic_intervals(std::vector<ReportRow>& rows, const FitResult& fit,
                              const SurveyDataset& data, const ModelSpec& spec) {
  AsymptoticCovariance ac;
  try {
    ac = asymptotic_covariance(fit.estimate, fit.importance);
  } catch (const std::exception&) {
    return;  // indefinite information: leave intervals empty
  }
  const ParamLayout& layout = ac.layout;
  const VectorXd eta = layout.to_transformed(fit.estimate);
  const VectorXd sd = ac.cov_transformed.diagonal().cwiseMax(0.0).cwiseSqrt();
  for (ReportRow& row : rows) {
    if (row.layout_index < 0) continue;
    const int i = row.layout_index;
    VectorXd lo = eta, hi = eta;
    lo[i] -= 1.96 * sd[i];
    hi[i] += 1.96 * sd[i];
    row.lower = layout.to_natural(layout.from_transformed(lo, spec))[i];
    row.upper = layout.to_natural(layout.from_transformed(hi, spec))[i];
  }
}

void add_bootstrap_intervals(std::vector<ReportRow>& rows, const BootstrapResult& boot) {
  for (ReportRow& row : rows) {
    if (row.layout_index < 0 || row.layout_index >= boot.lower.size()) continue;
    row.lower = boot.lower[row.layout_index];
    row.upper = boot.upper[row.layout_index];
  }
}

std::string fit_report_text(const std::vector<ReportRow>& rows, const FitResult& fit) {
  std::ostringstream out;
  out << "parameter estimates"
      << (fit.converged ? "" : "  [WARNING: refresh loop did not converge]") << "\n";
  size_t name_w = 9, label_w = 5;
  for (const ReportRow& r : rows) {
    name_w = std::max(name_w, r.name.size());
    label_w = std::max(label_w, r.label.size());
  }
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  out << pad("name", name_w + 2) << pad("label", label_w + 2)
      << "estimate      95% interval\n";
  for (const ReportRow& r : rows) {
    char est[32];
    std::snprintf(est, sizeof est, "%-12.4g", r.estimate);
    out << pad(r.name, name_w + 2) << pad(r.label, label_w + 2) << est;
    if (std::isfinite(r.lower) && std::isfinite(r.upper)) {
      char ci[48];
      std::snprintf(ci, sizeof ci, "  (%.4g, %.4g)", r.lower, r.upper);
      out << ci;
    }
    out << "\n";
  }
  out << "log-likelihood improvement " << fmt(fit.final_loglik) << ", refreshes "
      << fit.refreshes << ", chain acceptance " << fmt(fit.importance.chain_acceptance)
      << "\n";
  return out.str();
}

namespace {

json meta_json(const ReportMeta& meta) {
  return json{{"command", meta.command},
              {"version", kVersion},
              {"seed", meta.seed},
              {"config_hash", meta.config_hash}};
}

}  // namespace

void write_fit_report_json(const std::string& path, const std::vector<ReportRow>& rows,
                           const FitResult& fit, const SurveyDataset& data,
                           const ModelSpec& spec, const ReportMeta& meta,
                           const BootstrapResult* bootstrap) {
  json j;
  j["meta"] = meta_json(meta);
  j["model"] = {{"n_surveys", spec.n_surveys},
                {"n_per_survey", data.n_per_survey},
                {"biased", spec.biased},
                {"time_index", spec.time_index},
                {"covariates", data.covariate_names}};
  j["fit"] = {{"converged", fit.converged},
              {"refreshes", fit.refreshes},
              {"loglik_improvement", fit.final_loglik},
              {"chain_acceptance", fit.importance.chain_acceptance},
              {"boundary", fit.boundary}};

  std::vector<LatentSample> cols;
  for (Eigen::Index h = 0; h < fit.importance.samples.cols(); ++h)
    cols.push_back(fit.importance.samples.col(h));
  if (cols.size() >= 4) {
    const ChainDiagnostics d = chain_diagnostics(cols);
    j["diagnostics"] = {{"mean_path_autocorr_lag1", d.autocorrelation[0]},
                        {"two_half_ks", d.ks_distance}};
  }

  j["parameters"] = json::array();
  for (const ReportRow& r : rows) {
    json row = {{"name", r.name}, {"label", r.label}, {"estimate", r.estimate}};
    if (std::isfinite(r.lower) && std::isfinite(r.upper)) {
      row["lower"] = r.lower;
      row["upper"] = r.upper;
    }
    j["parameters"].push_back(row);
  }

  if (bootstrap) {
    j["bootstrap"] = {{"requested", bootstrap->requested},
                      {"excluded", bootstrap->excluded},
                      {"exclusion_warning", bootstrap->exclusion_warning}};
  }
  write_text_file(path, j.dump(2) + "\n");
}

void write_prediction_csv(const std::string& path, const PredictionGrid& grid,
                          const PredictiveSummary& summary, const ReportMeta& meta) {
  std::ostringstream out;
  for (const std::string& m : meta_lines(meta)) out << m << "\n";
  out << "x,y,mean";
  for (double l : summary.levels) {
    char q[24];
    std::snprintf(q, sizeof q, "q%g", 100.0 * l);
    out << "," << q;
  }
  for (double t : summary.thresholds) {
    char e[32];
    std::snprintf(e, sizeof e, "exceed_%g", t);
    out << "," << e;
  }
  out << "\n";
  for (int i = 0; i < grid.q(); ++i) {
    out << fmt(grid.loc(i, 0)) << "," << fmt(grid.loc(i, 1)) << "," << fmt(summary.mean[i]);
    for (size_t l = 0; l < summary.levels.size(); ++l)
      out << "," << fmt(summary.quantiles(i, static_cast<Eigen::Index>(l)));
    for (size_t t = 0; t < summary.thresholds.size(); ++t)
      out << "," << fmt(summary.exceedance(i, static_cast<Eigen::Index>(t)));
    out << "\n";
  }
  write_text_file(path, out.str());
}

void write_metrics_csv(const std::string& path, const std::string& scenario_label,
                       const MetricsTable& table, const ReportMeta& meta) {
  std::ostringstream out;
  for (const std::string& m : meta_lines(meta)) out << m << "\n";
  out << "# replicates=" << table.replicates << " failures=" << table.failures << "\n";
  if (table.eigenvalues.size() > 0) {
    out << "# estimate_correlation_eigenvalues=";
    for (Eigen::Index i = 0; i < table.eigenvalues.size(); ++i)
      out << (i ? "," : "") << fmt(table.eigenvalues[i]);
    out << "\n";
  }
  out << "scenario,analysis,target,truth,mean_estimate,bias,sd,rmse,rel_bias,cic,used,covered_n\n";
  for (const MetricRow& r : table.rows) {
    out << scenario_label << "," << r.analysis << "," << r.target << "," << fmt(r.truth)
        << "," << fmt(r.mean_estimate) << "," << fmt(r.bias) << "," << fmt(r.sd) << ","
        << fmt(r.rmse) << "," << fmt(r.rel_bias) << "," << fmt(r.cic) << "," << r.used
        << "," << r.covered_n << "\n";
  }
  write_text_file(path, out.str());
}

std::string error_json(const std::string& command, const std::string& message) {
  return json{{"error", {{"command", command}, {"message", message}}},
              {"version", kVersion}}
             .dump(2) +
         "\n";
}

// ---------------------------------------------------------------------------
// simulate command
// ---------------------------------------------------------------------------

LoadedData simulate_cli_dataset(const RunConfig& run, std::uint64_t seed) {
  const IniDoc& d = run.doc;
  const std::string scenario = d.get("simulate", "scenario", "custom");

  if (scenario != "custom") {
    Scenario sc;
    if (scenario == "ident-1" || scenario == "ident-2" || scenario == "ident-3")
      sc = make_ident_scenario(scenario.back() - '0', 1, seed);
    else if (scenario == "qv")
      sc = make_qv_scenario(d.get_double("simulate", "nu2", 1.0), 1, seed);
    else if (scenario == "tv")
      sc = make_tv_scenario(d.get_double("simulate", "alpha", 0.8), 1, seed);
    else
      throw std::invalid_argument("config key 'simulate.scenario': unknown scenario '" +
                                  scenario + "'");
    LoadedData out;
    out.data = simulate_dataset(sc, seed).data;
    out.time_index = sc.truth_spec.time_index;
    return out;
  }

  const std::vector<int> n = d.get_ints("simulate", "n");
  if (n.empty()) throw std::invalid_argument("config key 'simulate.n' is required");
  const int n_surveys = static_cast<int>(n.size());

  ModelSpec spec;
  spec.n_surveys = n_surveys;
  for (int b : d.get_ints("simulate", "biased")) spec.biased.push_back(b == 1);
  if (spec.biased.empty()) spec.biased.assign(static_cast<size_t>(n_surveys), false);
  spec.time_index = d.get_ints("simulate", "time_index");
  if (spec.time_index.empty()) spec.time_index.assign(static_cast<size_t>(n_surveys), 0);
  const int n_cov = d.get_int("simulate", "n_covariates", 0);
  for (const std::string& name : d.get_names("simulate", "bias_covariates")) {
    if (name == "intercept") {
      spec.bias_mask.push_back(0);
    } else if (name.rfind("cov", 0) == 0) {
      const int idx = static_cast<int>(parse_long(name.substr(3), "simulate.bias_covariates"));
      if (idx < 1 || idx > n_cov)
        throw std::invalid_argument("config key 'simulate.bias_covariates': '" + name +
                                    "' is outside cov1..cov" + std::to_string(n_cov));
      spec.bias_mask.push_back(idx);
    } else {
      throw std::invalid_argument(
          "config key 'simulate.bias_covariates': names must be 'intercept' or 'cov<k>'");
    }
  }
  spec.tie_tau2 = d.get_bool("simulate", "tie_tau2", true);
  if (d.has("simulate", "fixed_tau2"))
    spec.fixed_tau2 = d.get_double("simulate", "fixed_tau2", 0.0);
  spec.validate();

  const std::vector<double> region = d.get_doubles("simulate", "region");
  Rectangle rect{0, 1, 0, 1};
  if (!region.empty()) {
    if (region.size() != 4)
      throw std::invalid_argument("config key 'simulate.region' needs x0,x1,y0,y1");
    rect = {region[0], region[1], region[2], region[3]};
  }
  const int denom = d.get_int("simulate", "m", 1);
  if (denom < 1) throw std::invalid_argument("config key 'simulate.m' must be at least 1");

  SurveyDataset data;
  int total = 0;
  for (int ni : n) {
    if (ni < 1) throw std::invalid_argument("config key 'simulate.n': entries must be positive");
    total += ni;
  }
  data.loc.resize(total, 2);
  int off = 0;
  for (int s = 0; s < n_surveys; ++s) {
    data.loc.middleRows(off, n[static_cast<size_t>(s)]) = sample_uniform_locations(
        n[static_cast<size_t>(s)], rect, mix_seed(seed, 10 + static_cast<std::uint64_t>(s)));
    off += n[static_cast<size_t>(s)];
    data.n_per_survey.push_back(n[static_cast<size_t>(s)]);
  }
  data.m = VectorXd::Constant(total, denom);
  data.y = VectorXd::Zero(total);
  data.covariates.resize(total, n_cov);
  Rng cov_rng(mix_seed(seed, 50));
  for (int i = 0; i < total; ++i)
    for (int c = 0; c < n_cov; ++c) data.covariates(i, c) = cov_rng.normal();
  for (int c = 0; c < n_cov; ++c)
    data.covariate_names.push_back("cov" + std::to_string(c + 1));

  ParamSet truth;
  const std::vector<double> beta = d.get_doubles("simulate", "beta");
  const int k_design = design_columns(data, spec);
  if (static_cast<int>(beta.size()) != k_design)
    throw std::invalid_argument("config key 'simulate.beta' needs " +
                                std::to_string(k_design) + " entries for this design");
  truth.beta = Eigen::Map<const VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  truth.cov.sigma2 = d.get_double("simulate", "sigma2", 1.0);
  truth.cov.phi = d.get_double("simulate", "phi", 0.15);
  truth.cov.delta = d.get_double("simulate", "delta", 0.15);
  const std::vector<double> nu2 = d.get_doubles("simulate", "nu2");
  truth.cov.nu2 = Eigen::Map<const VectorXd>(nu2.data(), static_cast<Eigen::Index>(nu2.size()));
  std::vector<double> tau2 = d.get_doubles("simulate", "tau2");
  if (spec.fixed_tau2) tau2.assign(static_cast<size_t>(spec.n_tau2()), *spec.fixed_tau2);
  if (tau2.empty()) tau2.assign(static_cast<size_t>(spec.n_tau2()), 0.1);
  truth.cov.tau2 = Eigen::Map<const VectorXd>(tau2.data(), static_cast<Eigen::Index>(tau2.size()));
  const std::vector<double> alpha = d.get_doubles("simulate", "alpha");
  truth.cov.alpha = Eigen::Map<const VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  truth.cov.validate(spec);

  Rng rng(mix_seed(seed, 3));
  data.y = simulate_from_model(truth, data, spec, rng).y;

  LoadedData out;
  out.data = std::move(data);
  out.time_index = spec.time_index;
  return out;
}

}  // namespace prevfuse
