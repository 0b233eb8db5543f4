#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "lgcp/csv.hpp"
#include "lgcp/error.hpp"
#include "lgcp/log.hpp"
#include "lgcp/metrics.hpp"

namespace lgcp::cli {

#ifndef LGCP_VERSION
#define LGCP_VERSION "0.0.0"
#endif
const char* const kToolVersion = LGCP_VERSION;

namespace fs = std::filesystem;
using csv::format_double;

std::string provenance(const Config& c, std::uint64_t seed) {
  return std::string("lgcp-tool ") + kToolVersion + " config_hash=" + hex64(c.hash()) +
         " seed=" + std::to_string(seed);
}

namespace {

fs::path output_dir(const Config& c) { return c.get_path("output.dir", "lgcp-out"); }

void write_output(const Config& c, const std::string& name, const std::string& body) {
  const fs::path path = output_dir(c) / name;
  csv::write_atomic(path, "# " + provenance(c, seed(c)) + "\n" + body);
  log::info("wrote " + path.string());
}

// Columns the commands need from the pixel table.
struct Needs {
  std::set<std::string> continuous;
  std::set<std::string> categorical;
  std::set<std::string> partitions;

  void add(const ModelSpec& m) {
    for (const auto& s : m.linear) continuous.insert(s);
    for (const auto& t : m.rw1) continuous.insert(t.covariate);
    for (const auto& s : m.iid) categorical.insert(s);
    if (m.besag) partitions.insert(*m.besag);
  }
  TableSchema schema() const {
    TableSchema s;
    for (const auto& n : continuous) s.covariates.push_back({n, CovariateRole::Linear, 0});
    for (const auto& n : categorical)
      if (!continuous.count(n)) s.covariates.push_back({n, CovariateRole::CategoricalIid, 0});
    for (const auto& p : partitions)
      if (p != "pixel") s.partitions.push_back(p);
    return s;
  }
};

PixelTable load_table(const Config& c, const Needs& needs) {
  const fs::path path = c.get_path("data.table", "");
  if (path.empty()) throw ConfigError("data.table is not set");
  log::info("reading " + path.string());
  return load_pixel_table(path, needs.schema());
}

std::vector<int> positive_labels(const PixelTable& t) {
  std::vector<int> l;
  for (auto y : t.count) l.push_back(y > 0 ? 1 : 0);
  return l;
}

double pixel_auc(const PixelTable& t, const std::vector<double>& lambda) {
  return roc_auc(lambda, positive_labels(t)).auc;
}

// Rank-based quintile class (1 = lowest fifth) for map legends.
std::vector<int> quintiles(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<int> q(v.size());
  for (std::size_t r = 0; r < order.size(); ++r) q[order[r]] = static_cast<int>(5 * r / order.size()) + 1;
  return q;
}

std::string intensity_csv(const PixelTable& t, const IntensitySurface& surf, const std::string& partition) {
  std::ostringstream out;
  if (partition == "pixel") {
    const auto q = quintiles(surf.lambda);
    out << "pixel_id,x,y,lambda,count,susceptibility,quintile\n";
    for (std::size_t i = 0; i < t.size(); ++i)
      out << t.pixel_id[i] << ',' << format_double(t.x[i]) << ',' << format_double(t.y[i]) << ','
          << format_double(surf.lambda[i]) << ',' << t.count[i] << ','
          << format_double(susceptibility(surf.lambda[i])) << ',' << q[i] << '\n';
    return out.str();
  }
  const UnitIntensity u = aggregate_intensity(surf, make_partition(t, partition), t.count);
  const auto q = quintiles(u.lambda);
  out << "unit_id,lambda,count,susceptibility,quintile\n";
  for (std::size_t k = 0; k < u.unit_ids.size(); ++k)
    out << u.unit_ids[k] << ',' << format_double(u.lambda[k]) << ',' << u.observed[k] << ','
        << format_double(u.susceptibility[k]) << ',' << q[k] << '\n';
  return out.str();
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct Fitted {
  LatentLayout layout;
  PosteriorResult post;
  IntensitySurface surface;
  double auc = 0.0;
};

Fitted fit_model(const ModelSpec& spec, const PixelTable& t, const Config& c) {
  Fitted f;
  f.layout = assemble_layout(spec, t);
  const FitData data = make_fit_data(f.layout, t);
  log::info("fitting " + std::to_string(f.layout.dim) + " latent coordinates, " +
            std::to_string(f.layout.n_hyper()) + " hyperparameters, " + std::to_string(t.size()) + " pixels");
  f.post = fit(f.layout, data, fit_options(c));
  f.surface = pixel_intensity(f.post, estimator(c));
  f.auc = pixel_auc(t, f.surface.lambda);
  return f;
}

}  // namespace

void cmd_fit(const Config& c) {
  const ModelSpec spec = model_spec(c);
  Needs needs;
  needs.add(spec);
  const auto aspect = c.get_list("predict.aspect");
  if (!aspect.empty() && aspect.size() != 2) throw ConfigError("predict.aspect needs two covariates: eastness, northness");
  const PixelTable t = load_table(c, needs);
  const Fitted f = fit_model(spec, t, c);
  const auto& L = f.layout;
  const auto& P = f.post;

  std::ostringstream latent;
  latent << "block,index,label,mean,sd,q025,q975\n";
  for (const auto& b : L.blocks)
    for (int i = 0; i < b.length; ++i) {
      const int k = b.offset + i;
      latent << b.name << ',' << i << ',' << b.labels[i] << ',' << format_double(P.mean[k]) << ','
             << format_double(P.sd[k]) << ',' << format_double(P.q025[k]) << ',' << format_double(P.q975[k])
             << '\n';
    }
  write_output(c, "latent.csv", latent.str());

  std::ostringstream grid;
  for (const auto& h : L.hypers) grid << "log_tau_" << h.name << ',';
  grid << "log_posterior,weight\n";
  for (std::size_t g = 0; g < P.grid.points.size(); ++g) {
    for (int k = 0; k < L.n_hyper(); ++k) grid << format_double(P.grid.points[g][k]) << ',';
    grid << format_double(P.grid.log_posterior[g]) << ',' << format_double(P.grid.weights[g]) << '\n';
  }
  write_output(c, "theta_grid.csv", grid.str());

  std::ostringstream hyper;
  hyper << "effect,log_tau_hat,sigma_hat,pc_median\n";
  for (int k = 0; k < L.n_hyper(); ++k)
    hyper << L.hypers[k].name << ',' << format_double(P.theta_hat[k]) << ','
          << format_double(std::exp(-0.5 * P.theta_hat[k])) << ',' << format_double(L.hypers[k].prior.median)
          << '\n';
  write_output(c, "hyperparameters.csv", hyper.str());

  std::ostringstream eta;
  eta << "pixel_id,x,y,eta_mean,eta_sd\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    eta << t.pixel_id[i] << ',' << format_double(t.x[i]) << ',' << format_double(t.y[i]) << ','
        << format_double(P.eta_mean[i]) << ',' << format_double(P.eta_sd[i]) << '\n';
  write_output(c, "eta.csv", eta.str());

  write_output(c, "intensity_pixel.csv", intensity_csv(t, f.surface, "pixel"));

  std::ostringstream cov;
  cov << "effect_a,effect_b,covariance\n";
  for (std::size_t a = 0; a < P.fixed.names.size(); ++a)
    for (std::size_t b = 0; b < P.fixed.names.size(); ++b)
      cov << P.fixed.names[a] << ',' << P.fixed.names[b] << ',' << format_double(P.fixed.covariance(a, b)) << '\n';
  write_output(c, "fixed_covariance.csv", cov.str());

  if (!L.standardization.empty()) {
    std::ostringstream st;
    st << "covariate,mean,sd\n";
    for (const auto& s : L.standardization)
      st << s.name << ',' << format_double(s.mean) << ',' << format_double(s.sd) << '\n';
    write_output(c, "standardization.csv", st.str());
  }

  if (const LatentBlock* b = L.besag_block()) {
    const auto sig = lse_significance(P, L);
    std::ostringstream s;
    s << "unit_id,mean,sd,q025,q975,significance\n";
    for (int j = 0; j < b->length; ++j) {
      const int k = b->offset + j;
      s << b->unit_ids[j] << ',' << format_double(P.mean[k]) << ',' << format_double(P.sd[k]) << ','
        << format_double(P.q025[k]) << ',' << format_double(P.q975[k]) << ',' << to_string(sig[j]) << '\n';
    }
    write_output(c, "significance.csv", s.str());
  }

  if (!aspect.empty()) {
    const AspectCurve a = aspect_effect_curve(P, aspect[0], aspect[1]);
    std::ostringstream s;
    s << "degrees,effect,sd,lower,upper\n";
    for (std::size_t k = 0; k < a.degrees.size(); ++k)
      s << format_double(a.degrees[k]) << ',' << format_double(a.effect[k]) << ',' << format_double(a.sd[k])
        << ',' << format_double(a.lower[k]) << ',' << format_double(a.upper[k]) << '\n';
    write_output(c, "aspect_curve.csv", s.str());
  }

  const double fitted_total = std::accumulate(f.surface.lambda.begin(), f.surface.lambda.end(), 0.0);
  std::ostringstream sum;
  sum << "estimator " << to_string(f.surface.estimator) << "\n";
  sum << "observed total " << t.total_count() << ", fitted total " << fixed(fitted_total, 1) << "\n";
  sum << "pixel AUC " << fixed(f.auc) << " (" << to_string(hosmer_class(f.auc)) << ")\n\n";
  sum << std::left << std::setw(24) << "effect" << std::right << std::setw(12) << "mean" << std::setw(12) << "sd"
      << std::setw(12) << "q025" << std::setw(12) << "q975" << "\n";
  for (const auto& b : L.blocks) {
    if (b.random()) continue;
    const int k = b.offset;
    sum << std::left << std::setw(24) << b.name << std::right << std::setw(12) << fixed(P.mean[k], 4)
        << std::setw(12) << fixed(P.sd[k], 4) << std::setw(12) << fixed(P.q025[k], 4) << std::setw(12)
        << fixed(P.q975[k], 4) << "\n";
  }
  for (int k = 0; k < L.n_hyper(); ++k)
    sum << "sigma[" << L.hypers[k].name << "] = " << fixed(std::exp(-0.5 * P.theta_hat[k]), 4) << "\n";
  write_output(c, "fit_summary.txt", sum.str());
}

void cmd_predict(const Config& c) {
  Needs needs;
  for (const auto& p : partitions(c)) needs.partitions.insert(p);
  const PixelTable t = load_table(c, needs);
  const fs::path fit_dir = c.has("predict.fit_dir") ? c.get_path("predict.fit_dir", "") : output_dir(c);
  const csv::Table eta = csv::read(fit_dir / "eta.csv");
  const int cid = eta.column("pixel_id"), cm = eta.column("eta_mean"), cs = eta.column("eta_sd");
  if (cid < 0 || cm < 0 || cs < 0) throw DataError((fit_dir / "eta.csv").string() + ": missing eta columns");
  std::map<std::int64_t, std::pair<double, double>> by_id;
  for (const auto& row : eta.rows) {
    try {
      by_id[csv::parse_int(row[cid])] = {csv::parse_double(row[cm]), csv::parse_double(row[cs])};
    } catch (const std::invalid_argument&) {
      throw DataError((fit_dir / "eta.csv").string() + ": non-numeric entry");
    }
  }
  std::vector<double> mean(t.size()), sd(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto it = by_id.find(t.pixel_id[i]);
    if (it == by_id.end())
      throw DataError("pixel " + std::to_string(t.pixel_id[i]) + " has no fitted linear predictor in " +
                      (fit_dir / "eta.csv").string());
    mean[i] = it->second.first;
    sd[i] = it->second.second;
  }
  const IntensitySurface surf = pixel_intensity(mean, sd, estimator(c));
  for (const auto& p : partitions(c)) write_output(c, "intensity_" + p + ".csv", intensity_csv(t, surf, p));
}

void cmd_cv(const Config& c) {
  const ModelSpec spec = model_spec(c);
  Needs needs;
  needs.add(spec);
  std::vector<std::string> parts;
  for (const auto& p : partitions(c))
    if (p != "pixel") {
      parts.push_back(p);
      needs.partitions.insert(p);
    }
  const std::string blocked = c.get("cv.blocked_by", "");
  if (!blocked.empty()) needs.partitions.insert(blocked);
  const PixelTable t = load_table(c, needs);

  const int k = static_cast<int>(c.get_int("cv.folds", 10));
  const auto cv_seed = static_cast<std::uint64_t>(c.get_int("cv.seed", static_cast<std::int64_t>(seed(c))));
  const CvPlan plan = blocked.empty() ? kfold_split(t.size(), k, cv_seed)
                                      : blocked_kfold_split(make_partition(t, blocked), k, cv_seed);
  CvOptions o;
  o.fit = fit_options(c);
  o.fit.grid.workers = 1;
  o.estimator = estimator(c);
  o.partitions = parts;
  o.workers = threads(c);
  log::info("running " + std::to_string(k) + "-fold cross-validation");
  const CvResult r = run_cv(spec, t, plan, o);

  std::ostringstream m;
  m << "metric,partition,fold,value\n";
  for (const auto& f : r.folds) m << "auc,pixel," << f.fold << ',' << format_double(f.auc) << '\n';
  for (const auto& p : r.pooled) {
    m << "auc," << p.partition << ",pooled," << format_double(p.auc) << '\n';
    m << "r2," << p.partition << ",pooled," << format_double(p.r2) << '\n';
    m << "rce," << p.partition << ",pooled," << format_double(p.rce) << '\n';
  }
  m << "mean_fold_auc,pixel,all," << format_double(r.mean_fold_auc) << '\n';
  m << "min_fold_auc,pixel,all," << format_double(r.min_fold_auc) << '\n';
  m << "max_fold_auc,pixel,all," << format_double(r.max_fold_auc) << '\n';
  write_output(c, "cv_metrics.csv", m.str());

  std::ostringstream pred;
  pred << "pixel_id,fold,lambda\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    pred << t.pixel_id[i] << ',' << plan.fold[i] << ',' << format_double(r.oos_lambda[i]) << '\n';
  write_output(c, "cv_predictions.csv", pred.str());

  // Pooled curve plus the folds with the lowest and highest AUC.
  std::ostringstream roc;
  roc << "curve,fpr,tpr\n";
  auto dump = [&](const std::string& name, const RocCurve& curve) {
    for (std::size_t j = 0; j < curve.fpr.size(); ++j)
      roc << name << ',' << format_double(curve.fpr[j]) << ',' << format_double(curve.tpr[j]) << '\n';
  };
  dump("pooled", r.pooled_roc);
  const FoldResult* lo = nullptr;
  const FoldResult* hi = nullptr;
  for (const auto& f : r.folds) {
    if (std::isnan(f.auc)) continue;
    if (!lo || f.auc < lo->auc) lo = &f;
    if (!hi || f.auc > hi->auc) hi = &f;
  }
  if (lo) dump("min_fold", lo->roc);
  if (hi) dump("max_fold", hi->roc);
  write_output(c, "cv_roc.csv", roc.str());
}

void cmd_simulate(const Config& c) {
  const SimulationConfig s = simulation_config(c);
  const fs::path table_path = c.get_path("data.table", "");
  if (table_path.empty()) throw ConfigError("data.table is not set; simulate writes the pixel table there");
  log::info("simulating " + std::to_string(s.width) + "x" + std::to_string(s.height) + " grid, seed " +
            std::to_string(s.seed));
  const SimulatedDataset d = simulate_lgcp(s);
  write_pixel_table(table_path, d.table, provenance(c, s.seed));
  log::info("wrote " + table_path.string() + " (" + std::to_string(d.table.total_count()) + " events)");
  write_output(c, "truth.csv", format_truth(d));
}

void cmd_screen(const Config& c) {
  const auto candidates = c.get_list("screen.candidates");
  if (candidates.empty()) throw ConfigError("screen.candidates is empty");
  Needs needs;
  for (const auto& n : candidates) needs.continuous.insert(n);
  const PixelTable t = load_table(c, needs);
  const ModelSpec base = model_spec(c);
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& name : candidates) {
    ModelSpec m;
    m.linear = {name};
    m.fixed_effect_precision = base.fixed_effect_precision;
    m.standardize = base.standardize;
    log::info("screening " + name);
    rows.emplace_back(name, fit_model(m, t, c).auc);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::ostringstream out;
  out << "covariate,auc,class\n";
  for (const auto& [name, auc] : rows)
    out << name << ',' << format_double(auc) << ',' << to_string(hosmer_class(auc)) << '\n';
  write_output(c, "screen.csv", out.str());
}

void cmd_compare(const Config& c) {
  const std::string trigger = c.get("compare.trigger", "");
  if (trigger.empty()) throw ConfigError("compare.trigger is not set");
  const int bins = static_cast<int>(c.get_int("compare.trigger_bins", 20));
  ModelSpec shared = model_spec(c);
  const std::string lse = shared.besag.value_or("slope_unit");
  shared.besag.reset();
  std::erase(shared.linear, trigger);
  std::erase_if(shared.rw1, [&](const Rw1Term& r) { return r.covariate == trigger; });

  ModelSpec trig = shared;
  trig.rw1.push_back({trigger, bins});
  ModelSpec lse_only = shared;
  lse_only.besag = lse;
  ModelSpec both = trig;
  both.besag = lse;

  Needs needs;
  needs.add(both);
  const PixelTable t = load_table(c, needs);
  const double observed = static_cast<double>(t.total_count());
  std::ostringstream out;
  out << "model,auc,class,fitted_total,observed_total\n";
  const std::pair<const char*, const ModelSpec*> models[] = {
      {"trigger-only", &trig}, {"lse-only", &lse_only}, {"trigger+lse", &both}};
  for (const auto& [label, spec] : models) {
    log::info(std::string("fitting ") + label);
    const Fitted f = fit_model(*spec, t, c);
    const double total = std::accumulate(f.surface.lambda.begin(), f.surface.lambda.end(), 0.0);
    out << label << ',' << format_double(f.auc) << ',' << to_string(hosmer_class(f.auc)) << ','
        << format_double(total) << ',' << format_double(observed) << '\n';
  }
  std::string shared_names;
  for (const auto& n : shared.effect_names()) shared_names += (shared_names.empty() ? "" : " ") + n;
  out << "# shared effects: " << shared_names << '\n';
  write_output(c, "compare.csv", out.str());
}

namespace {

std::optional<csv::Table> read_if_present(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return csv::read(p);
}

std::string cell(const csv::Table& t, std::size_t row, const char* col) {
  const int k = t.column(col);
  if (k < 0) throw DataError(std::string("report input lacks column '") + col + "'");
  return t.rows[row][k];
}

std::string three(const std::string& v) {
  try {
    const double d = csv::parse_double(v);
    return std::isnan(d) ? "NA" : fixed(d);
  } catch (const std::invalid_argument&) {
    return v;
  }
}

}  // namespace

void cmd_report(const Config& c) {
  const fs::path dir = output_dir(c);
  std::ostringstream out;
  bool any = false;

  if (auto t = read_if_present(dir / "screen.csv")) {
    any = true;
    out << "Single-covariate models (pixel AUC)\n";
    out << std::left << std::setw(24) << "covariate" << std::right << std::setw(8) << "AUC" << "  class\n";
    for (std::size_t r = 0; r < t->rows.size(); ++r)
      out << std::left << std::setw(24) << cell(*t, r, "covariate") << std::right << std::setw(8)
          << three(cell(*t, r, "auc")) << "  " << cell(*t, r, "class") << "\n";
    out << "\n";
  }
  if (auto t = read_if_present(dir / "compare.csv")) {
    any = true;
    out << "Model comparison (pixel AUC)\n";
    out << std::left << std::setw(16) << "model" << std::right << std::setw(8) << "AUC" << std::setw(14)
        << "fitted" << std::setw(14) << "observed" << "\n";
    for (std::size_t r = 0; r < t->rows.size(); ++r)
      out << std::left << std::setw(16) << cell(*t, r, "model") << std::right << std::setw(8)
          << three(cell(*t, r, "auc")) << std::setw(14) << fixed(csv::parse_double(cell(*t, r, "fitted_total")), 1)
          << std::setw(14) << fixed(csv::parse_double(cell(*t, r, "observed_total")), 0) << "\n";
    out << "\n";
  }
  if (auto t = read_if_present(dir / "cv_metrics.csv")) {
    any = true;
    std::map<std::string, std::map<std::string, std::string>> pooled;  // partition -> metric -> value
    std::vector<std::string> order;
    for (std::size_t r = 0; r < t->rows.size(); ++r) {
      if (cell(*t, r, "fold") != "pooled") continue;
      const std::string p = cell(*t, r, "partition");
      if (!pooled.count(p)) order.push_back(p);
      pooled[p][cell(*t, r, "metric")] = cell(*t, r, "value");
    }
    out << "Cross-validated performance (pooled out-of-sample)\n";
    out << std::left << std::setw(16) << "unit" << std::right << std::setw(8) << "AUC" << std::setw(8) << "R2"
        << std::setw(8) << "RCE" << "\n";
    for (const auto& p : order)
      out << std::left << std::setw(16) << p << std::right << std::setw(8) << three(pooled[p]["auc"])
          << std::setw(8) << three(pooled[p]["r2"]) << std::setw(8) << three(pooled[p]["rce"]) << "\n";
    for (std::size_t r = 0; r < t->rows.size(); ++r)
      if (cell(*t, r, "fold") == "all")
        out << cell(*t, r, "metric") << " " << three(cell(*t, r, "value")) << "\n";
    out << "\n";
  }
  if (auto t = read_if_present(dir / "significance.csv")) {
    any = true;
    std::map<std::string, int> counts;
    for (std::size_t r = 0; r < t->rows.size(); ++r) ++counts[cell(*t, r, "significance")];
    out << "Latent spatial effect significance by unit\n";
    for (const auto& [label, n] : counts) out << "  " << label << ": " << n << "\n";
    for (std::size_t r = 0; r < t->rows.size(); ++r) {
      const std::string label = cell(*t, r, "significance");
      if (label == "not-significant") continue;
      out << "  unit " << cell(*t, r, "unit_id") << "  mean " << three(cell(*t, r, "mean")) << "  ["
          << three(cell(*t, r, "q025")) << ", " << three(cell(*t, r, "q975")) << "]  " << label << "\n";
    }
    out << "\n";
  }
  if (!any) throw DataError("nothing to report in " + dir.string() + "; run fit, screen, compare or cv first");
  write_output(c, "report.txt", out.str());
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"fit", "predict", "cv", "simulate", "screen", "compare", "report"};
  return names;
}

void run_command(const std::string& name, const Config& c) {
  c.check_known_keys();
  if (c.get_bool("run.verbose", false)) log::set_verbosity(log::Level::Debug);
  if (name == "fit") return cmd_fit(c);
  if (name == "predict") return cmd_predict(c);
  if (name == "cv") return cmd_cv(c);
  if (name == "simulate") return cmd_simulate(c);
  if (name == "screen") return cmd_screen(c);
  if (name == "compare") return cmd_compare(c);
  if (name == "report") return cmd_report(c);
  throw ConfigError("unknown command '" + name + "'");
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

}  // namespace lgcp::cli
