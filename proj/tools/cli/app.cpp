#include "app.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "json.hpp"
#include "manifest.hpp"
#include "svg.hpp"
#include "vaxsignal/csv.hpp"
#include "vaxsignal/diagnostics.hpp"
#include "vaxsignal/error.hpp"
#include "vaxsignal/inference.hpp"
#include "vaxsignal/simulation.hpp"

namespace fs = std::filesystem;

namespace vaxsignal::cli {

namespace {

struct Globals {
  std::optional<std::string> config_path;
  std::string run_dir = "run";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

struct Context {
  RunConfig cfg;
  fs::path run_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

Context make_context(const Globals& g, std::ostream& out, std::ostream& err) {
  Context c;
  c.cfg = load_config(g.config_path ? std::optional<fs::path>(*g.config_path) : std::nullopt);
  if (g.seed) c.cfg.seed = *g.seed;
  if (g.threads < 1) throw ConfigError("--threads must be at least 1");
  c.seed = c.cfg.seed;
  c.cfg.chains.seed = c.seed;
  c.cfg.simulation.seed = c.seed;
  c.cfg.chains.threads = g.threads;
  c.threads = g.threads;
  c.run_dir = g.run_dir;
  c.out = &out;
  c.err = &err;
  return c;
}

std::ifstream open_in(const fs::path& p, const std::string& what) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + what + " " + p.string());
  return in;
}

std::string read_text(const fs::path& p) {
  auto in = open_in(p, "file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Console rendering of a real with a fixed number of decimals.
std::string num(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

std::string describe(const std::vector<Mismatch>& ms) {
  std::string s;
  for (const auto& m : ms) {
    s += "\n  " + m.file + ": recorded " + m.expected.substr(0, 12) + ", now " +
         (m.actual.empty() ? std::string("missing") : m.actual.substr(0, 12));
  }
  return s;
}

// Record every regular file below run_dir/rel.
void record_tree(Manifest& man, const std::string& rel) {
  const fs::path root = man.run_dir() / rel;
  if (!fs::exists(root)) return;
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), man.run_dir()).generic_string());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) man.record_output(f);
}

void write_text(Manifest& man, const std::string& rel, const std::string& text) {
  write_file_atomic(man.run_dir() / rel, text);
  man.record_output(rel);
}

std::string fit_dir_rel(const std::string& mode) { return "fits/" + mode; }

void require_fit(const Context& ctx, const Manifest& man, const std::string& mode) {
  if (!man.stage_completed("fit/" + mode)) {
    throw DataError("no completed '" + mode + "' fit in " + ctx.run_dir.string() + "; run `vaxsignal fit --mode " +
                    mode + "` first");
  }
  const auto bad = man.verify_outputs(fit_dir_rel(mode) + "/draws_");
  if (!bad.empty()) throw DataError("fit outputs changed since they were written (digest mismatch):" + describe(bad));
}

// ---------------------------------------------------------------------------
// ingest

std::map<std::string, fs::path> ingest_inputs(const RunConfig& cfg) {
  std::map<std::string, fs::path> in;
  if (cfg.format == "canonical") {
    if (!cfg.reports) throw ConfigError("data.reports is required when data.format = canonical");
    in["data.reports"] = cfg.resolve(*cfg.reports);
  } else {
    if (!cfg.raw_data || !cfg.raw_vax || !cfg.raw_symptoms) {
      throw ConfigError("data.raw_data, data.raw_vax and data.raw_symptoms are required when data.format = raw");
    }
    if (cfg.codes.target.empty() || cfg.codes.control.empty()) {
      throw ConfigError("data.target_codes and data.control_codes are required when data.format = raw");
    }
    in["data.raw_data"] = cfg.resolve(*cfg.raw_data);
    in["data.raw_vax"] = cfg.resolve(*cfg.raw_vax);
    in["data.raw_symptoms"] = cfg.resolve(*cfg.raw_symptoms);
  }
  if (cfg.soc_map) in["data.soc_map"] = cfg.resolve(*cfg.soc_map);
  if (cfg.nc_list) in["data.nc_list"] = cfg.resolve(*cfg.nc_list);
  return in;
}

std::map<std::string, std::string> data_keys(const std::map<std::string, std::string>& snapshot) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : snapshot) {
    if (k.rfind("data.", 0) == 0) out[k] = v;
  }
  return out;
}

int cmd_ingest(Context& ctx, bool force) {
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  const auto inputs = ingest_inputs(ctx.cfg);
  const auto snapshot = ctx.cfg.snapshot();

  if (man.stage_completed("ingest") && !force) {
    auto changed = man.changed_inputs(inputs);
    for (const auto& [role, _] : man.json()["inputs"].items()) {
      if (role.rfind("data.", 0) == 0 && !inputs.count(role)) changed.push_back({role, "recorded", ""});
    }
    for (const auto& [role, path] : inputs) {
      if (!man.has_input(role)) changed.push_back({role + " (" + path.string() + ")", "none", "new"});
    }
    if (man.json().contains("config")) {
      const auto before = data_keys(man.json()["config"].get<std::map<std::string, std::string>>());
      const auto now = data_keys(snapshot);
      for (const auto& [k, v] : now) {
        auto it = before.find(k);
        if (it == before.end() || it->second != v) {
          changed.push_back({k, it == before.end() ? "unset" : it->second, v});
        }
      }
    }
    if (!changed.empty()) {
      std::string msg = "inputs differ from the recorded ingest of " + ctx.run_dir.string() + ":";
      for (const auto& m : changed) msg += "\n  " + m.file;
      msg += "\nrefusing to overwrite; use a new --run-dir or pass --force to discard the old results";
      throw DataError(msg);
    }
  }
  if (force || !man.stage_completed("ingest")) {
    for (const char* d : {"ingest", "fits", "plots"}) fs::remove_all(ctx.run_dir / d);
    for (const char* p : {"ingest", "fits/", "plots/"}) man.forget_outputs(p);
    for (const char* p : {"ingest", "fit/", "signals/", "enrich/", "plot/"}) man.forget_stages(p);
    auto& recorded = man.json()["inputs"];
    for (auto it = recorded.begin(); it != recorded.end();) {
      if (it.key().rfind("data.", 0) == 0) it = recorded.erase(it);
      else ++it;
    }
  }

  ParsedReports parsed;
  if (ctx.cfg.format == "canonical") {
    auto in = open_in(inputs.at("data.reports"), "reports file");
    parsed = parse_canonical_reports(in);
  } else {
    auto d = open_in(inputs.at("data.raw_data"), "raw data file");
    auto v = open_in(inputs.at("data.raw_vax"), "raw vaccine file");
    auto s = open_in(inputs.at("data.raw_symptoms"), "raw symptom file");
    parsed = parse_raw_reports(d, v, s, ctx.cfg.codes);
  }
  const auto excl = apply_exclusions(parsed.reports, ctx.cfg.filter);
  const auto aes = filter_aes(excl.kept, ctx.cfg.filter);
  const auto table = aggregate(excl.kept, aes);

  std::optional<SocMap> soc;
  if (ctx.cfg.soc_map) {
    auto in = open_in(inputs.at("data.soc_map"), "SOC map");
    soc = load_soc_map(in);
  }
  std::optional<std::set<std::string>> nc;
  if (ctx.cfg.nc_list) {
    auto in = open_in(inputs.at("data.nc_list"), "negative-control list");
    nc = load_nc_list(in);
  }
  const auto dict = build_ae_dictionary(aes, soc ? &*soc : nullptr, nc ? &*nc : nullptr);

  std::vector<std::string> warnings = parsed.warnings;
  warnings.insert(warnings.end(), dict.warnings.begin(), dict.warnings.end());
  if (!soc) warnings.emplace_back("no SOC map configured (data.soc_map); enrichment will need --soc-map");
  if (!nc) warnings.emplace_back("no negative-control list configured (data.nc_list); signals will need --nc");

  write_stratum_table(table, ctx.run_dir / "ingest");
  {
    std::ostringstream o;
    csv::write_row(o, {"reason", "count"});
    for (const auto& [reason, n] : excl.audit) csv::write_row(o, {reason, std::to_string(n)});
    write_file_atomic(ctx.run_dir / "ingest/exclusions.csv", o.str());
  }
  {
    std::ostringstream o;
    csv::write_row(o, {"report_id", "reason"});
    for (const auto& r : parsed.rejects) csv::write_row(o, {r.report_id, r.reason});
    write_file_atomic(ctx.run_dir / "ingest/rejects.csv", o.str());
  }
  {
    std::ostringstream o;
    csv::write_row(o, {"ae_id", "soc_groups", "is_negative_control"});
    for (const auto& id : aes) {
      const auto& e = dict.entries.at(id);
      std::string groups;
      for (const auto& g : e.soc_groups) groups += (groups.empty() ? "" : ";") + g;
      csv::write_row(o, {id, groups, e.is_negative_control ? "1" : "0"});
    }
    write_file_atomic(ctx.run_dir / "ingest/ae_dictionary.csv", o.str());
  }
  {
    std::string w;
    for (const auto& s : warnings) w += s + "\n";
    write_file_atomic(ctx.run_dir / "ingest/warnings.txt", w);
  }
  record_tree(man, "ingest");
  for (const auto& [role, path] : inputs) man.record_input(role, path);
  man.set_config(ctx.seed, snapshot);
  nlohmann::json extra{{"reports_parsed", parsed.reports.size()},
                       {"reports_rejected", parsed.rejects.size()},
                       {"reports_kept", excl.kept.size()},
                       {"aes", aes.size()},
                       {"strata", table.num_strata()},
                       {"negative_controls", dict.negative_control_count()},
                       {"warnings", warnings}};
  man.mark_stage("ingest", true, extra);
  man.save();

  auto& out = *ctx.out;
  out << "ingest: " << parsed.reports.size() << " reports parsed, " << parsed.rejects.size() << " rejected, "
      << excl.kept.size() << " kept; " << aes.size() << " AEs over " << table.num_strata() << " strata\n";
  for (const auto& w : warnings) *ctx.err << "warning: " << w << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitSource {
  StratumTable data;
  std::optional<std::vector<double>> truth;
  std::string source;
};

int cmd_fit(Context& ctx, const std::string& mode, const std::optional<std::string>& simulated, bool strict) {
  check_mode(mode);
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  FitSource src;
  if (simulated) {
    const fs::path dir = fs::absolute(*simulated);
    src.data = read_stratum_table(dir);
    src.source = dir.string();
    for (const char* f : {"strata.csv", "counts.csv", "ae_index.csv", "truth.csv"}) {
      if (fs::exists(dir / f)) man.record_input("fit." + mode + ".simulated/" + f, dir / f);
    }
    if (fs::exists(dir / "truth.csv")) src.truth = read_truth(dir, src.data.ae_index);
  } else {
    if (!man.stage_completed("ingest")) {
      throw DataError("no completed ingest in " + ctx.run_dir.string() + "; run `vaxsignal ingest` or pass --simulated");
    }
    const auto bad = man.verify_outputs("ingest/");
    if (!bad.empty()) throw DataError("ingest outputs changed since they were written (digest mismatch):" + describe(bad));
    src.data = read_stratum_table(ctx.run_dir / "ingest");
    src.source = "ingest";
  }

  const std::string rel = fit_dir_rel(mode);
  const fs::path dir = ctx.run_dir / rel;
  fs::remove_all(dir);
  man.forget_outputs(rel + "/");
  for (const std::string p : {"fit/", "signals/", "enrich/"}) man.forget_stages(p + mode);
  man.forget_stages("plot/" + mode + "/");
  man.set_config(ctx.seed, ctx.cfg.snapshot());

  const auto hyper = ctx.cfg.hyper_for(mode);
  PosteriorDraws draws;
  try {
    draws = run_chains(src.data, hyper, ctx.cfg.chains);
    draws.ae_ids = src.data.ae_index;
  } catch (const ChainAbortError& e) {
    auto partial = e.partial();
    partial.ae_ids = src.data.ae_index;
    write_draws(partial, dir / "partial");
    record_tree(man, rel);
    man.mark_stage("fit/" + mode, false, {{"status", "aborted"}, {"reason", e.what()}, {"source", src.source}});
    man.save();
    throw;
  }
  write_draws(draws, dir);
  const auto diag = diagnose(draws, src.data, src.truth ? &*src.truth : nullptr);
  write_file_atomic(dir / "diagnostics.json", diagnostics_json(diag));
  if (src.truth) fs::copy_file(fs::path(*simulated) / "truth.csv", dir / "truth.csv", fs::copy_options::overwrite_existing);
  const bool converged = !diag.rc.empty() && diag.rc_summary.frac_below >= 0.99;
  record_tree(man, rel);
  nlohmann::json extra{{"source", src.source},
                       {"converged", converged},
                       {"dic", diag.dic.dic},
                       {"frac_rc_below_1.2", diag.rc.empty() ? nlohmann::json(nullptr) : nlohmann::json(diag.rc_summary.frac_below)}};
  man.mark_stage("fit/" + mode, true, extra);
  man.save();

  auto& out = *ctx.out;
  out << "fit " << mode << ": " << draws.chains.size() << " chains x " << draws.chains.front().size()
      << " draws, DIC " << num(diag.dic.dic, 1) << ", pD " << num(diag.dic.pd, 1);
  if (!diag.rc.empty()) {
    out << ", R_c<1.2 for " << num(100.0 * diag.rc_summary.frac_below, 1) << "% (max "
        << num(diag.rc_summary.max, 3) << ")";
  }
  if (diag.mse) out << ", MSE " << num(*diag.mse, 3) << ", coverage " << num(*diag.coverage, 3);
  out << '\n';
  for (const auto& w : diag.warnings) *ctx.err << "warning: " << w << '\n';
  if (strict && !converged) {
    throw ConvergenceError(diag.rc.empty() ? "convergence gate needs at least 2 chains (or pass --no-strict-convergence)"
                                           : "only " + num(100.0 * diag.rc_summary.frac_below, 1) +
                                                 "% of beta have R_c < 1.2 (need 99%); draws kept in " +
                                                 dir.string() + "; rerun longer or pass --no-strict-convergence");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// signals / enrich

std::set<std::string> resolve_nc_ids(const Context& ctx, Manifest& man, const std::optional<std::string>& nc_path) {
  if (nc_path) {
    auto in = open_in(*nc_path, "negative-control list");
    man.record_input("signals.nc_list", fs::absolute(*nc_path));
    return load_nc_list(in);
  }
  const fs::path dict = ctx.run_dir / "ingest/ae_dictionary.csv";
  if (man.stage_completed("ingest") && ctx.cfg.nc_list && fs::exists(dict)) {
    auto in = open_in(dict, "AE dictionary");
    const auto t = csv::read_table(in);
    const auto c_id = t.require_column("ae_id");
    const auto c_nc = t.require_column("is_negative_control");
    std::set<std::string> ids;
    for (const auto& r : t.rows) {
      if (r.fields.at(c_nc) == "1") ids.insert(r.fields.at(c_id));
    }
    return ids;
  }
  if (ctx.cfg.nc_list) {
    const auto p = ctx.cfg.resolve(*ctx.cfg.nc_list);
    auto in = open_in(p, "negative-control list");
    man.record_input("signals.nc_list", p);
    return load_nc_list(in);
  }
  throw ConfigError("no negative-control list: set data.nc_list or pass --nc");
}

SignalReport compute_signals(const Context& ctx, Manifest& man, const PosteriorDraws& draws,
                             const std::optional<std::string>& nc_path, int exceed, double cutoff) {
  const auto ids = resolve_nc_ids(ctx, man, nc_path);
  const auto index = resolve_ae_indices(draws, ids);
  if (index.size() < 2) {
    throw DataError("only " + std::to_string(index.size()) +
                    " negative controls match modeled AEs; the procedure needs at least 2");
  }
  return nc_signal_probability(draws, index, exceed, cutoff);
}

int cmd_signals(Context& ctx, const std::string& mode, const std::optional<std::string>& nc_path,
                std::optional<int> exceed, std::optional<double> cutoff) {
  check_mode(mode);
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  require_fit(ctx, man, mode);
  const auto draws = read_draws(ctx.run_dir / fit_dir_rel(mode));
  const int m = exceed.value_or(ctx.cfg.exceed_count);
  const double c = cutoff.value_or(ctx.cfg.cutoff);
  const auto report = compute_signals(ctx, man, draws, nc_path, m, c);
  const std::string rel = fit_dir_rel(mode) + "/signals.csv";
  write_signals_csv(report, ctx.run_dir / rel);
  man.record_output(rel);
  std::size_t n_signals = 0, n_nc = 0;
  for (const auto& r : report.rows) {
    n_signals += r.is_signal;
    n_nc += r.is_negative_control;
  }
  man.mark_stage("signals/" + mode, true,
                 {{"exceed_count", m}, {"cutoff", c}, {"negative_controls", n_nc}, {"signals", n_signals}});
  man.save();
  *ctx.out << "signals " << mode << ": " << n_signals << " of " << report.rows.size() << " AEs flagged (m=" << m
           << ", cutoff " << csv::format_double(c) << ", " << n_nc << " negative controls)\n";
  return kOk;
}

int cmd_enrich(Context& ctx, const std::string& mode, const std::optional<std::string>& nc_path,
               const std::optional<std::string>& soc_path) {
  check_mode(mode);
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  require_fit(ctx, man, mode);
  fs::path soc_file;
  if (soc_path) soc_file = fs::absolute(*soc_path);
  else if (ctx.cfg.soc_map) soc_file = ctx.cfg.resolve(*ctx.cfg.soc_map);
  else throw ConfigError("enrichment needs a SOC map: set data.soc_map or pass --soc-map");
  auto in = open_in(soc_file, "SOC map");
  const auto soc = load_soc_map(in);
  man.record_input("enrichment.soc_map", soc_file);

  const auto draws = read_draws(ctx.run_dir / fit_dir_rel(mode));
  const auto signals = compute_signals(ctx, man, draws, nc_path, ctx.cfg.exceed_count, ctx.cfg.cutoff);
  const auto dict = build_ae_dictionary(draws.ae_ids, &soc, nullptr);
  const auto membership = membership_from_dictionary(draws.ae_ids, dict);
  const auto report = enrichment_eor(signals.indicators, membership, ctx.cfg.eor_mean_threshold);
  const std::string rel = fit_dir_rel(mode) + "/enrichment.csv";
  write_enrichment_csv(report, ctx.run_dir / rel);
  man.record_output(rel);
  std::vector<std::string> warnings = dict.warnings;
  warnings.insert(warnings.end(), report.warnings.begin(), report.warnings.end());
  std::size_t enriched = 0;
  for (const auto& r : report.rows) enriched += r.is_enriched;
  man.mark_stage("enrich/" + mode, true,
                 {{"eor_mean_threshold", ctx.cfg.eor_mean_threshold},
                  {"exceed_count", ctx.cfg.exceed_count},
                  {"cutoff", ctx.cfg.cutoff},
                  {"groups", report.rows.size()},
                  {"enriched", enriched},
                  {"warnings", warnings}});
  man.save();
  *ctx.out << "enrich " << mode << ": " << enriched << " of " << report.rows.size() << " groups enriched\n";
  for (const auto& w : warnings) *ctx.err << "warning: " << w << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// plot

std::optional<std::vector<double>> fit_truth(const fs::path& fit_dir, const std::vector<std::string>& ids) {
  if (!fs::exists(fit_dir / "truth.csv")) return std::nullopt;
  return read_truth(fit_dir, ids);
}

EnrichmentReport read_enrichment_csv(const fs::path& path, double threshold) {
  auto in = open_in(path, "enrichment table");
  const auto t = csv::read_table(in);
  const auto c_soc = t.require_column("soc");
  const auto c_mean = t.require_column("eor_mean");
  const auto c_lo = t.require_column("ci_lo");
  const auto c_hi = t.require_column("ci_hi");
  const auto c_enr = t.require_column("is_enriched");
  const auto c_js = t.require_column("J_s");
  EnrichmentReport r;
  r.eor_mean_threshold = threshold;
  for (const auto& row : t.rows) {
    EnrichmentRow e;
    e.group = row.fields.at(c_soc);
    e.eor = {std::stod(row.fields.at(c_mean)), std::stod(row.fields.at(c_lo)), std::stod(row.fields.at(c_hi))};
    e.is_enriched = row.fields.at(c_enr) == "1";
    e.j_s = static_cast<std::size_t>(std::stoull(row.fields.at(c_js)));
    r.rows.push_back(std::move(e));
  }
  return r;
}

std::string caterpillar_csv(const CaterpillarInput& in, const CaterpillarPlot& plot) {
  std::ostringstream o;
  std::vector<std::string> header{"rank", "ae_id", "mean", "lo", "hi"};
  if (!in.truth.empty()) header.emplace_back("truth");
  csv::write_row(o, header);
  for (std::size_t r = 0; r < plot.order.size(); ++r) {
    const auto j = plot.order[r];
    std::vector<std::string> row{std::to_string(r + 1), in.ae_ids[j], csv::format_double(in.summaries[j].mean),
                                 csv::format_double(in.summaries[j].lo), csv::format_double(in.summaries[j].hi)};
    if (!in.truth.empty()) row.push_back(csv::format_double(in.truth[j]));
    csv::write_row(o, row);
  }
  return o.str();
}

std::vector<std::size_t> sort_order(const std::vector<double>& key) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

std::string heatmap_csv(const CoclusterMatrix& m, const std::vector<std::size_t>& order,
                        const std::vector<std::string>& ids) {
  std::ostringstream o;
  std::vector<std::string> header{"ae_id"};
  for (auto j : order) header.push_back(ids[j]);
  csv::write_row(o, header);
  for (auto i : order) {
    std::vector<std::string> row{ids[i]};
    for (auto j : order) row.push_back(csv::format_double(m.at(i, j)));
    csv::write_row(o, row);
  }
  return o.str();
}

int cmd_plot(Context& ctx, const std::string& mode, const std::string& kind) {
  check_mode(mode);
  if (kind != "caterpillar" && kind != "heatmap" && kind != "enrichment") {
    throw ConfigError("unknown plot kind '" + kind + "' (expected caterpillar, heatmap or enrichment)");
  }
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  require_fit(ctx, man, mode);
  const fs::path fit_dir = ctx.run_dir / fit_dir_rel(mode);
  const std::string base = "plots/" + mode + "_" + kind;

  if (kind == "enrichment") {
    if (!man.stage_completed("enrich/" + mode)) {
      throw DataError("no enrichment results for '" + mode + "'; run `vaxsignal enrich` first");
    }
    const auto report = read_enrichment_csv(fit_dir / "enrichment.csv", ctx.cfg.eor_mean_threshold);
    write_text(man, base + ".svg", forest_svg(report, "Enrichment odds ratios (" + mode + ")"));
    write_text(man, base + ".csv", read_text(fit_dir / "enrichment.csv"));
  } else {
    const auto draws = read_draws(fit_dir);
    const auto truth = fit_truth(fit_dir, draws.ae_ids);
    if (kind == "caterpillar") {
      CaterpillarInput in{draws.ae_ids, posterior_summary(draws), truth.value_or(std::vector<double>{}),
                          "Posterior log ROR (" + mode + ")"};
      const auto plot = caterpillar_svg(in);
      write_text(man, base + ".svg", plot.svg);
      write_text(man, base + ".csv", caterpillar_csv(in, plot));
    } else {
      if (!draws.has_labels()) throw ConfigError("heatmap needs a DPM fit; '" + mode + "' has no cluster labels");
      const auto m = coclustering(draws);
      const auto order = sort_order(truth ? *truth : draws.mean_beta());
      write_text(man, base + ".svg",
                 heatmap_svg(m, order, std::string("Co-clustering, sorted by ") + (truth ? "true" : "posterior mean") +
                                           " log ROR (" + mode + ")"));
      write_text(man, base + ".csv", heatmap_csv(m, order, draws.ae_ids));
    }
  }
  man.mark_stage("plot/" + mode + "/" + kind, true);
  man.save();
  *ctx.out << "plot: wrote " << (ctx.run_dir / (base + ".svg")).string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate / study

SimulationSpec resolved_spec(const Context& ctx) {
  SimulationSpec spec = ctx.cfg.simulation;
  if (ctx.cfg.intercept_pool_file) spec.intercept_pool = load_intercept_pool(ctx.cfg.resolve(*ctx.cfg.intercept_pool_file));
  spec.validate();
  return spec;
}

int cmd_simulate(Context& ctx, std::optional<double> sigma) {
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  auto spec = resolved_spec(ctx);
  if (sigma) spec.sigma = *sigma;
  spec.validate();
  if (ctx.cfg.intercept_pool_file) man.record_input("simulation.intercept_pool_file", ctx.cfg.resolve(*ctx.cfg.intercept_pool_file));
  Rng rng(spec.seed);
  const auto ds = simulate(spec, rng);
  fs::remove_all(ctx.run_dir / "simulation");
  man.forget_outputs("simulation/");
  write_simulated_dataset(ds, ctx.run_dir / "simulation");

  const std::size_t J = ds.beta_truth.size();
  std::size_t zero_control = 0;
  std::vector<std::size_t> zero_target(spec.cluster_sizes.size(), 0);
  for (std::size_t j = 0; j < J; ++j) {
    zero_control += ds.table.count(j, 0) == 0;
    if (ds.table.count(j, 1) == 0) ++zero_target[static_cast<std::size_t>(ds.cluster_truth[j] - 1)];
  }
  nlohmann::ordered_json sp;
  sp["sigma"] = spec.sigma;
  sp["num_aes"] = J;
  sp["zero_control_fraction"] = static_cast<double>(zero_control) / static_cast<double>(J);
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < zero_target.size(); ++g) {
    per.push_back({{"cluster", g + 1},
                   {"mean", spec.cluster_means[g]},
                   {"zero_target_fraction",
                    spec.cluster_sizes[g] ? static_cast<double>(zero_target[g]) / static_cast<double>(spec.cluster_sizes[g])
                                          : 0.0}});
  }
  sp["clusters"] = std::move(per);
  write_file_atomic(ctx.run_dir / "simulation/sparsity.json", sp.dump(2) + "\n");
  record_tree(man, "simulation");
  man.set_config(ctx.seed, ctx.cfg.snapshot());
  man.mark_stage("simulate", true, {{"sigma", spec.sigma}, {"num_aes", J}});
  man.save();
  *ctx.out << "simulate: " << J << " AEs at sigma " << csv::format_double(spec.sigma) << " written to "
           << (ctx.run_dir / "simulation").string() << "; fit with `vaxsignal fit --simulated "
           << (ctx.run_dir / "simulation").string() << "`\n";
  return kOk;
}

std::string sigma_tag(double sigma) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", sigma);
  return buf;
}

int cmd_study(Context& ctx) {
  RunLock lock(ctx.run_dir);
  auto man = Manifest::load(ctx.run_dir);
  StudyConfig sc;
  sc.spec = resolved_spec(ctx);
  sc.sigmas = ctx.cfg.study_sigmas;
  sc.chains = ctx.cfg.chains;
  sc.threads = ctx.threads;
  sc.models = {{"DPM", ctx.cfg.hyper_for("dpm")},
               {"IL-Informative", ctx.cfg.hyper_for("il-informative")},
               {"IL-Vague", ctx.cfg.hyper_for("il-vague")}};
  if (ctx.cfg.intercept_pool_file) man.record_input("simulation.intercept_pool_file", ctx.cfg.resolve(*ctx.cfg.intercept_pool_file));
  auto& err = *ctx.err;
  const auto report = run_study(sc, [&err](const StudyRow& r) {
    err << "study: sigma " << csv::format_double(r.sigma) << " replicate " << r.replicate << ' ' << r.model << ": "
        << (r.ok ? "DIC " + num(r.dic, 1) + ", MSE " + num(r.mse, 3) : "failed: " + r.error)
        << '\n';
  });
  fs::remove_all(ctx.run_dir / "study");
  man.forget_outputs("study/");
  write_study(report, ctx.run_dir / "study");
  for (const auto& d : report.designated) {
    const std::string tag = sigma_tag(d.sigma);
    for (std::size_t m = 0; m < d.models.size(); ++m) {
      CaterpillarInput in{d.ae_ids, d.summaries[m], d.beta_truth,
                          d.models[m] + ", sigma = " + tag + " (replicate 0)"};
      write_file_atomic(ctx.run_dir / ("study/plots/caterpillar_sigma" + tag + "_" + d.models[m] + ".svg"),
                        caterpillar_svg(in).svg);
    }
    if (d.cocluster.size > 0) {
      write_file_atomic(ctx.run_dir / ("study/plots/heatmap_sigma" + tag + ".svg"),
                        heatmap_svg(d.cocluster, sort_order(d.beta_truth),
                                    "DPM co-clustering, sigma = " + tag + ", sorted by true log ROR"));
    }
  }
  record_tree(man, "study");
  man.set_config(ctx.seed, ctx.cfg.snapshot());
  std::size_t failed = 0;
  for (const auto& r : report.rows) failed += !r.ok;
  man.mark_stage("study", true, {{"fits", report.rows.size()}, {"failed_fits", failed}});
  man.save();

  auto& out = *ctx.out;
  out << "model,sigma,n_ok,dic,mse,coverage,rc_frac_below_1.2\n";
  for (const auto& s : report.summary) {
    out << s.model << ',' << csv::format_double(s.sigma) << ',' << s.n_ok << ',' << csv::format_double(s.dic) << ','
        << csv::format_double(s.mse) << ',' << csv::format_double(s.coverage) << ','
        << csv::format_double(s.rc_frac_below) << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(Context& ctx) {
  if (!fs::exists(ctx.run_dir / "manifest.json")) throw DataError("no manifest.json in " + ctx.run_dir.string());
  RunLock lock(ctx.run_dir);
  const auto man = Manifest::load(ctx.run_dir);
  const auto outputs = man.verify_outputs();
  const auto inputs = man.verify_inputs();
  const auto n_out = man.json()["outputs"].size();
  const auto n_in = man.json()["inputs"].size();
  if (outputs.empty() && inputs.empty()) {
    *ctx.out << "verify: " << n_out << " outputs and " << n_in << " inputs match their recorded digests\n";
    return kOk;
  }
  std::string msg = "digest mismatch";
  if (!outputs.empty()) msg += "\noutputs:" + describe(outputs);
  if (!inputs.empty()) msg += "\ninputs:" + describe(inputs);
  throw DataError(msg);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian vaccine adverse-event signal detection", "vaxsignal"};
  app.set_version_flag("--version", std::string(VAXSIGNAL_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "INI configuration file");
  app.add_option("--run-dir", g.run_dir, "Run directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for all randomness (overrides run.seed)");
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();

  bool force = false;
  auto* ingest = app.add_subcommand("ingest", "Parse reports and build the stratum table");
  ingest->add_flag("--force", force, "Discard earlier results when inputs changed");

  std::string mode = "dpm";
  auto mode_opt = [&mode](CLI::App* sub) {
    sub->add_option("--mode", mode, "dpm, il-informative or il-vague")->capture_default_str();
  };
  std::optional<std::string> simulated, nc_path, soc_path;
  bool no_strict = false;
  auto* fit = app.add_subcommand("fit", "Run the MCMC sampler");
  mode_opt(fit);
  fit->add_option("--simulated", simulated, "Fit a simulated dataset directory instead of the ingest output");
  fit->add_flag("--no-strict-convergence", no_strict, "Do not fail when fewer than 99% of R_c are below 1.2");

  std::optional<int> exceed;
  std::optional<double> cutoff;
  auto* signals = app.add_subcommand("signals", "Negative-control signal detection");
  mode_opt(signals);
  signals->add_option("--nc", nc_path, "Negative-control list (one AE per line)");
  signals->add_option("--exceed-count", exceed, "Controls that beta must exceed (m)");
  signals->add_option("--cutoff", cutoff, "Posterior probability cutoff");

  auto* enrich = app.add_subcommand("enrich", "SOC enrichment analysis");
  mode_opt(enrich);
  enrich->add_option("--nc", nc_path, "Negative-control list");
  enrich->add_option("--soc-map", soc_path, "CSV with ae_name,soc_name");

  std::string kind = "caterpillar";
  auto* plot = app.add_subcommand("plot", "Write SVG figures");
  mode_opt(plot);
  plot->add_option("--kind", kind, "caterpillar, heatmap or enrichment")->capture_default_str();

  std::optional<double> sigma;
  auto* simulate_cmd = app.add_subcommand("simulate", "Write one simulated dataset");
  simulate_cmd->add_option("--sigma", sigma, "Within-cluster sd (overrides simulation.sigma)");
  auto* study = app.add_subcommand("study", "Run the DPM vs IL simulation study");
  auto* verify = app.add_subcommand("verify", "Re-check every digest in the manifest");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    Context ctx = make_context(g, out, err);
    if (*ingest) return cmd_ingest(ctx, force);
    if (*fit) return cmd_fit(ctx, mode, simulated, !no_strict);
    if (*signals) return cmd_signals(ctx, mode, nc_path, exceed, cutoff);
    if (*enrich) return cmd_enrich(ctx, mode, nc_path, soc_path);
    if (*plot) return cmd_plot(ctx, mode, kind);
    if (*simulate_cmd) return cmd_simulate(ctx, sigma);
    if (*study) return cmd_study(ctx);
    if (*verify) return cmd_verify(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << '\n';
    return kConvergenceFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace vaxsignal::cli
