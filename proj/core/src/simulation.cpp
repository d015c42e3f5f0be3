#include "vaxsignal/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "vaxsignal/csv.hpp"
#include "vaxsignal/error.hpp"
#include "vaxsignal/inference.hpp"

namespace vaxsignal {

std::size_t SimulationSpec::num_aes() const {
  std::size_t J = 0;
  for (auto s : cluster_sizes) J += s;
  return J;
}

void SimulationSpec::validate() const {
  if (cluster_means.empty()) throw ConfigError("simulation.cluster_means must be non-empty");
  if (cluster_means.size() != cluster_sizes.size()) {
    throw ConfigError("simulation.cluster_means and simulation.cluster_sizes differ in length");
  }
  if (num_aes() == 0) throw ConfigError("simulation.cluster_sizes must sum to at least 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("simulation.sigma must be positive");
  if (intercept_pool.empty()) {
    if (generator.pool_size == 0) throw ConfigError("simulation.pool_size must be positive");
    if (!(generator.sd >= 0.0)) throw ConfigError("simulation.intercept_sd must be non-negative");
  }
  if (n_target < 0 || n_control < 0) throw ConfigError("simulation group sizes must be non-negative");
  if (n_replicates < 1) throw ConfigError("simulation.n_replicates must be at least 1");
}

SimulatedBetas simulate_betas(const SimulationSpec& spec, Rng& rng) {
  spec.validate();
  SimulatedBetas out;
  out.beta.reserve(spec.num_aes());
  for (std::size_t g = 0; g < spec.cluster_sizes.size(); ++g) {
    for (std::size_t i = 0; i < spec.cluster_sizes[g]; ++i) {
      out.beta.push_back(spec.cluster_means[g] + spec.sigma * rng.standard_normal());
      out.cluster.push_back(static_cast<int>(g + 1));
    }
  }
  return out;
}

std::vector<double> resolve_intercept_pool(const SimulationSpec& spec, Rng& rng) {
  if (!spec.intercept_pool.empty()) return spec.intercept_pool;
  std::vector<double> pool(spec.generator.pool_size);
  for (auto& a : pool) a = spec.generator.mean + spec.generator.sd * rng.standard_normal();
  return pool;
}

StratumTable two_group_design(std::size_t num_aes, std::int64_t n_control, std::int64_t n_target) {
  StratumTable t;
  t.strata.push_back({"control", {1.0}, 0, n_control});
  t.strata.push_back({"target", {1.0}, 1, n_target});
  const int width = static_cast<int>(std::to_string(num_aes).size());
  for (std::size_t j = 0; j < num_aes; ++j) {
    std::string id = std::to_string(j + 1);
    t.ae_index.push_back("AE" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id);
  }
  t.y.assign(num_aes * 2, 0);
  return t;
}

SimulatedDataset simulate_dataset(const SimulationSpec& spec, const SimulatedBetas& betas, Rng& rng) {
  spec.validate();
  const std::size_t J = betas.beta.size();
  SimulatedDataset ds;
  ds.table = two_group_design(J, spec.n_control, spec.n_target);
  ds.beta_truth = betas.beta;
  ds.cluster_truth = betas.cluster;
  const auto pool = resolve_intercept_pool(spec, rng);
  ds.intercepts.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const double a = pool[rng.uniform_index(pool.size())];
    ds.intercepts[j] = a;
    ds.table.count(j, 0) = rng.binomial(spec.n_control, expit(a));
    ds.table.count(j, 1) = rng.binomial(spec.n_target, expit(a + betas.beta[j]));
  }
  return ds;
}

SimulatedDataset simulate(const SimulationSpec& spec, Rng& rng) {
  const auto betas = simulate_betas(spec, rng);
  return simulate_dataset(spec, betas, rng);
}

void redraw_counts(StratumTable& data, const ModelState& state, Rng& rng) {
  for (std::size_t j = 0; j < data.num_aes(); ++j) {
    for (std::size_t s = 0; s < data.num_strata(); ++s) {
      data.count(j, s) = rng.binomial(data.strata[s].n, expit(linear_predictor(state, data, j, s)));
    }
  }
}

JointDraw exact_joint_draw(const Hyperparams& hyper, const StratumTable& design, Rng& rng) {
  hyper.validate();
  JointDraw out;
  out.data = design;
  const std::size_t J = design.num_aes();
  const std::size_t P = design.num_covariates();
  auto& st = out.state;
  st.num_covariates = P;
  st.alpha.resize(J * P);
  st.beta.resize(J);
  if (hyper.is_dpm()) {
    const auto K = static_cast<std::size_t>(hyper.K);
    st.lambda = rng.gamma(hyper.r_lambda, hyper.lambda_0);
    st.u = hyper.f_0 * rng.uniform_open();
    st.mu_base = rng.normal(0.0, hyper.tau_0);
    st.mu.resize(K);
    st.tau.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      st.mu[k] = rng.normal(st.mu_base, st.tau_base());
      st.tau[k] = rng.gamma(hyper.r_tau, st.lambda);
    }
    st.v.resize(K - 1);
    for (auto& v : st.v) v = std::min(rng.beta(hyper.a_0, hyper.b_0), std::nextafter(1.0, 0.0));
    st.pi = stick_to_simplex(st.v);
    std::vector<double> log_pi(K);
    for (std::size_t k = 0; k < K; ++k) {
      log_pi[k] = st.pi[k] > 0.0 ? std::log(st.pi[k]) : -std::numeric_limits<double>::infinity();
    }
    st.z.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
      st.z[j] = static_cast<int>(rng.categorical_log(log_pi));
      const auto k = static_cast<std::size_t>(st.z[j]);
      st.beta[j] = rng.normal(st.mu[k], st.tau[k]);
    }
  } else {
    for (auto& b : st.beta) b = rng.normal(0.0, hyper.il_precision);
  }
  for (auto& a : st.alpha) a = rng.normal(0.0, hyper.tau_alpha);
  redraw_counts(out.data, st, rng);
  return out;
}

std::vector<StudyModel> default_study_models() {
  return {{"DPM", Hyperparams::dpm()},
          {"IL-Informative", Hyperparams::il_informative()},
          {"IL-Vague", Hyperparams::il_vague()}};
}

namespace {

struct ReplicateResult {
  std::vector<StudyRow> rows;
  std::optional<DesignatedFit> designated;
};

ReplicateResult run_replicate(const StudyConfig& config, std::size_t sigma_index, int replicate) {
  ReplicateResult out;
  SimulationSpec spec = config.spec;
  spec.sigma = config.sigmas[sigma_index];
  const std::uint64_t rep_seed =
      derive_seed(spec.seed, static_cast<std::uint64_t>(sigma_index) * 1000003ULL + static_cast<std::uint64_t>(replicate));
  Rng rng(rep_seed);
  const auto ds = simulate(spec, rng);

  if (replicate == 0) {
    DesignatedFit d;
    d.sigma = spec.sigma;
    d.ae_ids = ds.table.ae_index;
    d.beta_truth = ds.beta_truth;
    out.designated = std::move(d);
  }
  for (std::size_t m = 0; m < config.models.size(); ++m) {
    const auto& model = config.models[m];
    StudyRow row;
    row.sigma = spec.sigma;
    row.model = model.name;
    row.replicate = replicate;
    try {
      ChainConfig chains = config.chains;
      chains.seed = derive_seed(rep_seed, m + 1);
      chains.threads = 1;
      const auto draws = run_chains(ds.table, model.hyper, chains);
      const auto diag = diagnose(draws, ds.table, &ds.beta_truth);
      row.dic = diag.dic.dic;
      row.mse = diag.mse.value_or(0.0);
      row.coverage = diag.coverage.value_or(0.0);
      row.rc_total = diag.rc.size();
      row.rc_below = static_cast<std::size_t>(
          std::count_if(diag.rc.begin(), diag.rc.end(), [](double r) { return r < 1.2; }));
      if (out.designated) {
        out.designated->models.push_back(model.name);
        out.designated->summaries.push_back(posterior_summary(draws));
        if (model.hyper.is_dpm() && out.designated->cocluster.size == 0) {
          out.designated->cocluster = coclustering(draws);
        }
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

StudyReport run_study(const StudyConfig& config, const StudyProgress& progress) {
  config.spec.validate();
  config.chains.validate();
  if (config.sigmas.empty()) throw ConfigError("study needs at least one sigma");
  if (config.models.empty()) throw ConfigError("study needs at least one model");
  for (const auto& m : config.models) m.hyper.validate();

  const auto R = static_cast<std::size_t>(config.spec.n_replicates);
  const std::size_t tasks = config.sigmas.size() * R;
  std::vector<ReplicateResult> results(tasks);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::vector<std::exception_ptr> errors(tasks);
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks; i = next++) {
      try {
        results[i] = run_replicate(config, i / R, static_cast<int>(i % R));
        if (progress) {
          std::lock_guard lock(progress_mutex);
          for (const auto& row : results[i].rows) progress(row);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(config.threads), 1, tasks);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  StudyReport report;
  for (auto& r : results) {
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    if (r.designated) report.designated.push_back(std::move(*r.designated));
  }
  report.summary = summarize_study(report.rows);
  return report;
}

std::vector<StudySummaryRow> summarize_study(const std::vector<StudyRow>& rows) {
  std::vector<StudySummaryRow> out;
  auto find = [&](double sigma, const std::string& model) -> StudySummaryRow& {
    for (auto& s : out) {
      if (s.sigma == sigma && s.model == model) return s;
    }
    StudySummaryRow s;
    s.sigma = sigma;
    s.model = model;
    out.push_back(s);
    return out.back();
  };
  std::vector<std::pair<std::size_t, std::size_t>> rc;
  for (const auto& row : rows) {
    auto& s = find(row.sigma, row.model);
    if (rc.size() < out.size()) rc.resize(out.size(), {0, 0});
    if (!row.ok) continue;
    ++s.n_ok;
    s.dic += row.dic;
    s.mse += row.mse;
    s.coverage += row.coverage;
    const auto idx = static_cast<std::size_t>(&s - out.data());
    rc[idx].first += row.rc_below;
    rc[idx].second += row.rc_total;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    if (s.n_ok) {
      const double n = static_cast<double>(s.n_ok);
      s.dic /= n;
      s.mse /= n;
      s.coverage /= n;
    }
    s.rc_frac_below = rc[i].second ? static_cast<double>(rc[i].first) / static_cast<double>(rc[i].second) : 0.0;
  }
  return out;
}

namespace {
std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::string sigma_tag(double sigma) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", sigma);
  return buf;
}
}  // namespace

void write_study(const StudyReport& report, const std::filesystem::path& dir) {
  using csv::format_double;
  {
    auto out = open_out(dir / "study_report.csv");
    csv::write_row(out, {"sigma", "model", "replicate", "dic", "mse", "coverage", "rc_below_1.2", "rc_total", "status"});
    for (const auto& r : report.rows) {
      csv::write_row(out, {format_double(r.sigma), r.model, std::to_string(r.replicate),
                           r.ok ? format_double(r.dic) : "", r.ok ? format_double(r.mse) : "",
                           r.ok ? format_double(r.coverage) : "", std::to_string(r.rc_below),
                           std::to_string(r.rc_total), r.ok ? "ok" : r.error});
    }
  }
  {
    // One row per model, DIC/MSE/coverage per sigma.
    std::vector<double> sigmas;
    std::vector<std::string> models;
    for (const auto& s : report.summary) {
      if (std::find(sigmas.begin(), sigmas.end(), s.sigma) == sigmas.end()) sigmas.push_back(s.sigma);
      if (std::find(models.begin(), models.end(), s.model) == models.end()) models.push_back(s.model);
    }
    auto out = open_out(dir / "study_summary.csv");
    std::vector<std::string> header{"model"};
    for (double sg : sigmas) {
      for (const char* k : {"dic", "mse", "coverage", "n_ok"}) header.push_back(std::string(k) + "@" + sigma_tag(sg));
    }
    csv::write_row(out, header);
    for (const auto& m : models) {
      std::vector<std::string> row{m};
      for (double sg : sigmas) {
        const auto it = std::find_if(report.summary.begin(), report.summary.end(),
                                     [&](const auto& s) { return s.sigma == sg && s.model == m; });
        if (it == report.summary.end()) {
          row.insert(row.end(), {"", "", "", "0"});
          continue;
        }
        row.push_back(format_double(it->dic));
        row.push_back(format_double(it->mse));
        row.push_back(format_double(it->coverage));
        row.push_back(std::to_string(it->n_ok));
      }
      csv::write_row(out, row);
    }
  }
  for (const auto& d : report.designated) {
    const std::string tag = sigma_tag(d.sigma);
    for (std::size_t m = 0; m < d.models.size(); ++m) {
      auto out = open_out(dir / ("caterpillar_sigma" + tag + "_" + d.models[m] + ".csv"));
      csv::write_row(out, {"ae_id", "truth", "mean", "lo", "hi"});
      for (std::size_t j = 0; j < d.ae_ids.size(); ++j) {
        const auto& s = d.summaries[m][j];
        csv::write_row(out, {d.ae_ids[j], format_double(d.beta_truth[j]), format_double(s.mean),
                             format_double(s.lo), format_double(s.hi)});
      }
    }
    if (d.cocluster.size > 0) write_cocluster_csv(d.cocluster, d.ae_ids, dir / ("cocluster_sigma" + tag + ".csv"));
  }
}

void write_simulated_dataset(const SimulatedDataset& ds, const std::filesystem::path& dir) {
  write_stratum_table(ds.table, dir);
  auto out = open_out(dir / "truth.csv");
  csv::write_row(out, {"ae_id", "beta", "cluster", "intercept"});
  for (std::size_t j = 0; j < ds.beta_truth.size(); ++j) {
    csv::write_row(out, {ds.table.ae_index[j], csv::format_double(ds.beta_truth[j]),
                         std::to_string(ds.cluster_truth[j]), csv::format_double(ds.intercepts[j])});
  }
}

std::vector<double> read_truth(const std::filesystem::path& dir, std::span<const std::string> ae_ids) {
  std::ifstream in(dir / "truth.csv", std::ios::binary);
  if (!in) throw DataError("cannot open " + (dir / "truth.csv").string());
  const auto t = csv::read_table(in);
  const auto c_id = t.require_column("ae_id");
  const auto c_beta = t.require_column("beta");
  std::map<std::string, double> by_id;
  for (const auto& r : t.rows) by_id[r.fields.at(c_id)] = std::stod(r.fields.at(c_beta));
  std::vector<double> out;
  for (const auto& id : ae_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("truth.csv lacks AE '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace vaxsignal
