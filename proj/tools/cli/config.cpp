#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "vaxsignal/csv.hpp"
#include "vaxsignal/error.hpp"

namespace vaxsignal::cli {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what, const std::string& value) {
  throw ConfigError(key + ": expected " + what + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& text, const char* what) {
  const std::string s = csv::trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) bad(key, what, text);
  return v;
}

double to_double(const std::string& k, const std::string& v) { return parse_number<double>(k, v, "a number"); }
std::int64_t to_i64(const std::string& k, const std::string& v) {
  return parse_number<std::int64_t>(k, v, "an integer");
}

bool to_bool(const std::string& k, const std::string& v) {
  const auto s = csv::trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad(k, "true or false", v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = csv::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_doubles(const std::string& k, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(k, s));
  return out;
}

Date to_date(const std::string& k, const std::string& v) {
  auto d = parse_iso_date(csv::trim(v));
  if (!d) bad(k, "a YYYY-MM-DD date", v);
  return *d;
}

std::string fmt(double x) { return csv::format_double(x); }

template <class C>
std::string join(const C& items) {
  std::string s;
  for (const auto& i : items) {
    if (!s.empty()) s += ',';
    if constexpr (std::is_arithmetic_v<std::decay_t<decltype(i)>>) {
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(i)>>) s += fmt(i);
      else s += std::to_string(i);
    } else {
      s += i;
    }
  }
  return s;
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Registry = std::map<std::string, Field>;

std::string opt(const std::optional<std::string>& s) { return s.value_or(""); }

const Registry& registry() {
  static const Registry r = [] {
    Registry m;
    auto dbl = [&m](const std::string& key, auto member) {
      m[key] = {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_double(k, v); },
                [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }};
    };
    auto integer = [&m](const std::string& key, auto member) {
      m[key] = {[member](RunConfig& c, const std::string& k, const std::string& v) {
                  using T = std::remove_reference_t<decltype(member(c))>;
                  const auto n = to_i64(k, v);
                  if (n < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
                      static_cast<std::uint64_t>(std::max<std::int64_t>(n, 0)) > std::numeric_limits<T>::max()) {
                    bad(k, "an integer in range", v);
                  }
                  member(c) = static_cast<T>(n);
                },
                [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
    };
    auto path = [&m](const std::string& key, auto member) {
      m[key] = {[member](RunConfig& c, const std::string&, const std::string& v) {
                  const auto s = csv::trim(v);
                  member(c) = s.empty() ? std::nullopt : std::optional<std::string>(s);
                },
                [member](const RunConfig& c) { return opt(member(const_cast<RunConfig&>(c))); }};
    };

    m["run.seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                       c.seed = parse_number<std::uint64_t>(k, v, "a non-negative integer");
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }};

    m["data.format"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                          const auto s = csv::trim(v);
                          if (s != "canonical" && s != "raw") bad(k, "canonical or raw", v);
                          c.format = s;
                        },
                        [](const RunConfig& c) { return c.format; }};
    path("data.reports", [](RunConfig& c) -> auto& { return c.reports; });
    path("data.raw_data", [](RunConfig& c) -> auto& { return c.raw_data; });
    path("data.raw_vax", [](RunConfig& c) -> auto& { return c.raw_vax; });
    path("data.raw_symptoms", [](RunConfig& c) -> auto& { return c.raw_symptoms; });
    path("data.soc_map", [](RunConfig& c) -> auto& { return c.soc_map; });
    path("data.nc_list", [](RunConfig& c) -> auto& { return c.nc_list; });
    m["data.target_codes"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                                const auto l = split_list(v);
                                c.codes.target = {l.begin(), l.end()};
                              },
                              [](const RunConfig& c) { return join(c.codes.target); }};
    m["data.control_codes"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                                 const auto l = split_list(v);
                                 c.codes.control = {l.begin(), l.end()};
                               },
                               [](const RunConfig& c) { return join(c.codes.control); }};
    integer("data.min_total_cases", [](RunConfig& c) -> auto& { return c.filter.min_total_cases; });
    integer("data.min_target_cases", [](RunConfig& c) -> auto& { return c.filter.min_target_cases; });
    integer("data.min_control_cases", [](RunConfig& c) -> auto& { return c.filter.min_control_cases; });
    dbl("data.min_age", [](RunConfig& c) -> auto& { return c.filter.min_age; });
    auto opt_date = [&m](const std::string& key, auto member) {
      m[key] = {[member](RunConfig& c, const std::string& k, const std::string& v) {
                  member(c) = csv::trim(v).empty() ? std::nullopt : std::optional<Date>(to_date(k, v));
                },
                [member](const RunConfig& c) {
                  const auto& d = member(const_cast<RunConfig&>(c));
                  return d ? to_string(*d) : std::string();
                }};
    };
    opt_date("data.window_start", [](RunConfig& c) -> auto& { return c.filter.window_start; });
    opt_date("data.window_end", [](RunConfig& c) -> auto& { return c.filter.window_end; });
    m["data.target_earliest_date"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) { c.filter.target_earliest_date = to_date(k, v); },
        [](const RunConfig& c) { return to_string(c.filter.target_earliest_date); }};

    integer("model.K", [](RunConfig& c) -> auto& { return c.dpm.K; });
    dbl("model.tau_alpha", [](RunConfig& c) -> auto& { return c.dpm.tau_alpha; });
    dbl("model.tau_0", [](RunConfig& c) -> auto& { return c.dpm.tau_0; });
    dbl("model.f_0", [](RunConfig& c) -> auto& { return c.dpm.f_0; });
    dbl("model.a_0", [](RunConfig& c) -> auto& { return c.dpm.a_0; });
    dbl("model.b_0", [](RunConfig& c) -> auto& { return c.dpm.b_0; });
    dbl("model.r_tau", [](RunConfig& c) -> auto& { return c.dpm.r_tau; });
    dbl("model.r_lambda", [](RunConfig& c) -> auto& { return c.dpm.r_lambda; });
    dbl("model.lambda_0", [](RunConfig& c) -> auto& { return c.dpm.lambda_0; });
    dbl("model.il_informative_precision", [](RunConfig& c) -> auto& { return c.il_informative_precision; });
    dbl("model.il_vague_precision", [](RunConfig& c) -> auto& { return c.il_vague_precision; });

    integer("chains.n_chains", [](RunConfig& c) -> auto& { return c.chains.n_chains; });
    integer("chains.n_burnin", [](RunConfig& c) -> auto& { return c.chains.n_burnin; });
    integer("chains.thin", [](RunConfig& c) -> auto& { return c.chains.thin; });
    integer("chains.n_retained", [](RunConfig& c) -> auto& { return c.chains.n_retained; });
    dbl("chains.target_accept", [](RunConfig& c) -> auto& { return c.chains.adapt.target_accept; });
    integer("chains.adapt_window", [](RunConfig& c) -> auto& { return c.chains.adapt.adapt_window; });
    dbl("chains.initial_step", [](RunConfig& c) -> auto& { return c.chains.initial_step; });
    m["chains.store_alpha"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) { c.chains.store_alpha = to_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.chains.store_alpha ? "true" : "false"); }};
    m["chains.joint_move"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) { c.chains.ridge_move = to_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.chains.ridge_move ? "true" : "false"); }};

    integer("signals.exceed_count", [](RunConfig& c) -> auto& { return c.exceed_count; });
    dbl("signals.cutoff", [](RunConfig& c) -> auto& { return c.cutoff; });
    dbl("enrichment.eor_mean_threshold", [](RunConfig& c) -> auto& { return c.eor_mean_threshold; });

    m["simulation.cluster_means"] = {[](RunConfig& c, const std::string& k,
                                        const std::string& v) { c.simulation.cluster_means = to_doubles(k, v); },
                                     [](const RunConfig& c) { return join(c.simulation.cluster_means); }};
    m["simulation.cluster_sizes"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                                       c.simulation.cluster_sizes.clear();
                                       for (const auto& s : split_list(v)) {
                                         const auto n = to_i64(k, s);
                                         if (n < 0) bad(k, "non-negative integers", v);
                                         c.simulation.cluster_sizes.push_back(static_cast<std::size_t>(n));
                                       }
                                     },
                                     [](const RunConfig& c) { return join(c.simulation.cluster_sizes); }};
    dbl("simulation.sigma", [](RunConfig& c) -> auto& { return c.simulation.sigma; });
    m["simulation.sigmas"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) { c.study_sigmas = to_doubles(k, v); },
        [](const RunConfig& c) { return join(c.study_sigmas); }};
    dbl("simulation.intercept_mean", [](RunConfig& c) -> auto& { return c.simulation.generator.mean; });
    dbl("simulation.intercept_sd", [](RunConfig& c) -> auto& { return c.simulation.generator.sd; });
    integer("simulation.pool_size", [](RunConfig& c) -> auto& { return c.simulation.generator.pool_size; });
    path("simulation.intercept_pool_file", [](RunConfig& c) -> auto& { return c.intercept_pool_file; });
    integer("simulation.n_target", [](RunConfig& c) -> auto& { return c.simulation.n_target; });
    integer("simulation.n_control", [](RunConfig& c) -> auto& { return c.simulation.n_control; });
    integer("simulation.n_replicates", [](RunConfig& c) -> auto& { return c.simulation.n_replicates; });
    return m;
  }();
  return r;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

void check_mode(const std::string& mode) {
  for (const char* m : kModes) {
    if (mode == m) return;
  }
  throw ConfigError("unknown model mode '" + mode + "' (expected dpm, il-informative or il-vague)");
}

Hyperparams RunConfig::hyper_for(const std::string& mode) const {
  check_mode(mode);
  if (mode == "dpm") return dpm;
  Hyperparams h = mode == "il-informative" ? Hyperparams::il_informative() : Hyperparams::il_vague();
  h.tau_alpha = dpm.tau_alpha;
  h.il_precision = mode == "il-informative" ? il_informative_precision : il_vague_precision;
  return h;
}

std::map<std::string, std::string> RunConfig::snapshot() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : registry()) out[key] = field.get(*this);
  return out;
}

void RunConfig::validate() const {
  filter.validate();
  dpm.validate();
  hyper_for("il-informative").validate();
  hyper_for("il-vague").validate();
  chains.validate();
  if (exceed_count < 0) throw ConfigError("signals.exceed_count must be non-negative");
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw ConfigError("signals.cutoff must lie in [0, 1]");
  if (!(eor_mean_threshold >= 0.0)) throw ConfigError("enrichment.eor_mean_threshold must be non-negative");
  for (double s : study_sigmas) {
    if (!(s > 0.0)) throw ConfigError("simulation.sigmas must all be positive");
  }
}

RunConfig load_config(const std::optional<std::filesystem::path>& path) {
  RunConfig c;
  if (!path) {
    c.validate();
    return c;
  }
  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot open config file " + path->string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(path->string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  c.base_dir = path->parent_path();
  const auto& reg = registry();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section + ": key outside a section");
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = reg.find(key);
      if (it == reg.end()) throw ConfigError(key + ": unknown key");
      it->second.set(c, key, value.data());
    }
  }
  c.validate();
  return c;
}

std::vector<double> load_intercept_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open intercept pool " + path.string());
  std::vector<double> pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto s = csv::trim(line);
    if (s.empty() || s == "intercept" || s.front() == '#') continue;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ParseError("intercept pool: not a number", line_no);
    }
    pool.push_back(v);
  }
  if (pool.empty()) throw DataError("intercept pool " + path.string() + " is empty");
  return pool;
}

}  // namespace vaxsignal::cli
