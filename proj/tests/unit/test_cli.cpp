#include <chrono>
#include <random>
#include <regex>
#include <sstream>

#include "cli/app.hpp"
#include "cli/config.hpp"
#include "cli/svg.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "vaxsignal/error.hpp"

namespace fs = std::filesystem;
using vaxsignal::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vaxsignal");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

// A canonical report file with eight AEs, a SOC map and an NC list.
struct Workspace {
  fixture::TempDir dir{"vxcli"};
  fs::path config = dir / "run.ini";
  fs::path run_dir = dir / "run";

  explicit Workspace(const std::string& chains = "n_chains = 2\nn_burnin = 300\nthin = 1\nn_retained = 200\n") {
    std::mt19937_64 rng(42);
    std::ostringstream csv;
    csv << "report_id,received_date,vaccine_group,gender,age_years,ae_list\n";
    const char* aes[] = {"A", "B", "C", "D", "E", "F", "G", "H"};
    for (int i = 0; i < 160; ++i) {
      const bool target = i % 2 == 0;
      std::string list;
      for (int k = 0; k < 8; ++k) {
        const double p = (target && k >= 6) ? 0.6 : 0.2;
        if (std::uniform_real_distribution<double>(0, 1)(rng) < p) list += std::string(list.empty() ? "" : ";") + aes[k];
      }
      if (list.empty()) list = "A";
      csv << "r" << i << ",2020-0" << (4 + i % 5) << "-1" << i % 10 << "," << (target ? "target" : "control") << ","
          << "FMU"[i % 3] << "," << 20 + (i * 7) % 60 << "," << list << "\n";
    }
    fixture::write(dir / "reports.csv", csv.str());
    fixture::write(dir / "soc.csv", "ae_name,soc_name\nA,General\nB,General\nG,Nervous\nH,Nervous\nE,Skin\n");
    fixture::write(dir / "nc.txt", "A\nB\nC\nD\n");
    fixture::write(config, "[data]\nreports = reports.csv\nsoc_map = soc.csv\nnc_list = nc.txt\n"
                           "[signals]\nexceed_count = 1\n[chains]\n" + chains);
  }

  Result operator()(std::vector<std::string> args) const {
    args.insert(args.begin(), {"--config", config.string(), "--run-dir", run_dir.string()});
    return cli(std::move(args));
  }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("configuration errors exit with code 2 and name the key") {
  fixture::TempDir dir;
  fixture::write(dir / "bad.ini", "[chains]\nn_burnin = many\n");
  auto r = cli({"--config", (dir / "bad.ini").string(), "--run-dir", (dir / "run").string(), "simulate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("chains.n_burnin") != std::string::npos);

  fixture::write(dir / "bad.ini", "[chains]\nburn = 5\n");
  r = cli({"--config", (dir / "bad.ini").string(), "--run-dir", (dir / "run").string(), "simulate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown key") != std::string::npos);

  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"fit", "--mode", "bogus", "--run-dir", (dir / "run").string()}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("config loader accepts every documented section") {
  fixture::TempDir dir;
  fixture::write(dir / "ok.ini",
                 "[run]\nseed = 7\n[model]\nK = 6\n[chains]\njoint_move = false\n[signals]\ncutoff = 0.8\n"
                 "[enrichment]\neor_mean_threshold = 1.5\n[simulation]\nsigmas = 0.5, 1.0\n");
  auto cfg = vaxsignal::cli::load_config(dir / "ok.ini");
  CHECK(cfg.seed == 7);
  CHECK(cfg.dpm.K == 6);
  CHECK_FALSE(cfg.chains.ridge_move);
  CHECK(cfg.cutoff == doctest::Approx(0.8));
  CHECK(cfg.study_sigmas == std::vector<double>{0.5, 1.0});
  CHECK(cfg.hyper_for("il-vague").il_precision == doctest::Approx(0.01));
  CHECK_THROWS_AS(vaxsignal::cli::check_mode("x"), vaxsignal::ConfigError);
}

TEST_CASE("full pipeline writes the documented layout") {
  Workspace ws;
  REQUIRE(ws({"ingest"}).code == 0);
  for (const char* f : {"strata.csv", "counts.csv", "ae_index.csv", "exclusions.csv", "rejects.csv", "ae_dictionary.csv"}) {
    CHECK_MESSAGE(fs::exists(ws.run_dir / "ingest" / f), f);
  }
  auto fit = ws({"fit", "--mode", "il-informative"});
  INFO(fit.err);
  REQUIRE(fit.code == 0);
  CHECK(fs::exists(ws.run_dir / "fits/il-informative/draws_beta.csv"));
  CHECK(fs::exists(ws.run_dir / "fits/il-informative/diagnostics.json"));
  REQUIRE(ws({"signals", "--mode", "il-informative"}).code == 0);
  CHECK(fs::exists(ws.run_dir / "fits/il-informative/signals.csv"));
  REQUIRE(ws({"enrich", "--mode", "il-informative"}).code == 0);
  CHECK(fs::exists(ws.run_dir / "fits/il-informative/enrichment.csv"));
  REQUIRE(ws({"plot", "--mode", "il-informative", "--kind", "caterpillar"}).code == 0);
  REQUIRE(ws({"plot", "--mode", "il-informative", "--kind", "enrichment"}).code == 0);
  CHECK(fs::exists(ws.run_dir / "plots/il-informative_caterpillar.svg"));
  CHECK(fs::exists(ws.run_dir / "manifest.json"));
  CHECK(ws({"verify"}).code == 0);

  // The heatmap needs cluster labels.
  CHECK(ws({"plot", "--mode", "il-informative", "--kind", "heatmap"}).code == 2);
}

TEST_CASE("strict convergence fails without a usable R_c") {
  Workspace ws("n_chains = 1\nn_burnin = 20\nthin = 1\nn_retained = 20\n");
  REQUIRE(ws({"ingest"}).code == 0);
  CHECK(ws({"fit", "--mode", "dpm"}).code == 3);
  CHECK(ws({"fit", "--mode", "dpm", "--no-strict-convergence"}).code == 0);
}

TEST_CASE("changed inputs are refused until forced; tampering fails verify") {
  Workspace ws;
  REQUIRE(ws({"ingest"}).code == 0);
  REQUIRE(ws({"fit", "--mode", "il-vague"}).code == 0);
  fixture::write(ws.dir / "reports.csv", fixture::read(ws.dir / "reports.csv") +
                                             "extra,2020-05-01,target,F,40,A;B\n");
  auto r = ws({"ingest"});
  CHECK(r.code == 4);
  CHECK(r.err.find("reports") != std::string::npos);
  CHECK(ws({"verify"}).code == 4);
  REQUIRE(ws({"ingest", "--force"}).code == 0);
  CHECK_FALSE(fs::exists(ws.run_dir / "fits/il-vague"));
  CHECK(ws({"verify"}).code == 0);

  fixture::write(ws.run_dir / "ingest/counts.csv", "tampered\n");
  CHECK(ws({"verify"}).code == 4);
  CHECK(ws({"fit", "--mode", "il-vague"}).code == 4);
}

TEST_CASE("too few negative controls is a data error") {
  Workspace ws;
  REQUIRE(ws({"ingest"}).code == 0);
  REQUIRE(ws({"fit", "--mode", "il-vague"}).code == 0);
  fixture::write(ws.dir / "one.txt", "A\n");
  CHECK(ws({"signals", "--mode", "il-vague", "--nc", (ws.dir / "one.txt").string()}).code == 4);
}

TEST_CASE("simulated fits plot truth and are byte-for-byte reproducible") {
  fixture::TempDir dir;
  fixture::write(dir / "sim.ini",
                 "[chains]\nn_chains = 2\nn_burnin = 200\nthin = 1\nn_retained = 100\n"
                 "[simulation]\ncluster_means = -2, 2\ncluster_sizes = 6, 6\npool_size = 12\n"
                 "intercept_mean = -6\nintercept_sd = 0.5\nn_control = 20000\nn_target = 20000\n");
  std::string svg[2];
  for (int pass = 0; pass < 2; ++pass) {
    const auto rd = (dir / ("run" + std::to_string(pass))).string();
    auto with = [&](std::vector<std::string> a) {
      a.insert(a.begin(), {"--config", (dir / "sim.ini").string(), "--run-dir", rd});
      return cli(a);
    };
    REQUIRE(with({"simulate"}).code == 0);
    auto f = with({"fit", "--mode", "dpm", "--simulated", (fs::path(rd) / "simulation").string(),
                   "--no-strict-convergence"});
    INFO(f.err);
    REQUIRE(f.code == 0);
    REQUIRE(with({"plot", "--mode", "dpm", "--kind", "caterpillar"}).code == 0);
    REQUIRE(with({"plot", "--mode", "dpm", "--kind", "heatmap"}).code == 0);
    svg[pass] = fixture::read(fs::path(rd) / "plots/dpm_caterpillar.svg");
  }
  CHECK(svg[0] == svg[1]);
  CHECK(count(svg[0], "class=\"interval\"") == 12);
  CHECK(count(svg[0], "class=\"mean\"") == 12);
  CHECK(count(svg[0], "class=\"truth\"") == 1);
  CHECK(count(svg[0], "class=\"zero\"") == 1);
}

TEST_CASE("caterpillar orders by posterior mean and pads the axis around the means") {
  vaxsignal::cli::CaterpillarInput in;
  in.ae_ids = {"a", "b", "c"};
  in.summaries = {{1.0, 0.0, 2.0}, {-1.0, -2.5, 0.5}, {0.2, -0.1, 0.4}};
  in.title = "t";
  auto plot = vaxsignal::cli::caterpillar_svg(in);
  CHECK(plot.order == std::vector<std::size_t>{1, 2, 0});
  CHECK(plot.y_min == -4.0);
  CHECK(plot.y_max == 4.0);
  CHECK(count(plot.svg, "class=\"clipped\"") == 0);
  in.summaries[0].hi = 9.0;
  CHECK(count(vaxsignal::cli::caterpillar_svg(in).svg, "class=\"clipped\"") == 1);
  CHECK(count(plot.svg, "class=\"truth\"") == 0);
}

TEST_CASE("small study finishes quickly") {
  fixture::TempDir dir;
  fixture::write(dir / "study.ini",
                 "[chains]\nn_chains = 2\nn_burnin = 300\nthin = 1\nn_retained = 150\n"
                 "[simulation]\ncluster_means = -2, 0, 2\ncluster_sizes = 3, 4, 3\npool_size = 10\n"
                 "intercept_mean = -6\nintercept_sd = 1\nn_control = 20000\nn_target = 20000\n"
                 "n_replicates = 2\nsigmas = 0.5\n");
  const auto t0 = std::chrono::steady_clock::now();
  auto r = cli({"--config", (dir / "study.ini").string(), "--run-dir", (dir / "run").string(), "study"});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(secs < 60.0);
  CHECK(fs::exists(dir / "run/study/study_summary.csv"));
  CHECK(r.out.find("DPM") != std::string::npos);
}

}  // TEST_SUITE
