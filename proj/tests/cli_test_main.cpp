// End-to-end test of the command-line tool. Takes the path to the built
// binary as its only argument, drives it through std::system, and checks
// exit codes, output files, and reproducibility from the manifest echo.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "abhmm/serialize.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_cli;
fs::path g_scratch;

void check(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

int run_cmd(const std::string& args, const std::string& log_name = "") {
  const fs::path out = g_scratch / (log_name.empty() ? "cmd.out" : log_name);
  const std::string cmd = g_cli + " " + args + " >" + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -2;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-cli>\n", argv[0]);
    return 2;
  }
  g_cli = argv[1];
  g_scratch = fs::temp_directory_path() / "abhmm_cli_test";
  fs::remove_all(g_scratch);
  fs::create_directories(g_scratch);

  // --- exit codes and help ---------------------------------------------------
  check(run_cmd("") == 2, "no subcommand exits 2");
  check(run_cmd("--help") == 0, "--help exits 0");
  check(run_cmd("simulate --help") == 0, "simulate --help exits 0");
  check(run_cmd("frobnicate") == 2, "unknown subcommand exits 2");

  {
    const int rc = run_cmd("list-presets", "presets.out");
    const std::string out = slurp(g_scratch / "presets.out");
    bool all = rc == 0;
    for (const std::string name :
         {"fig-ne1", "fig-ne2", "fig-ne2-alt", "fig-ne3", "fig-ne4", "fig-2"})
      all = all && out.find(name) != std::string::npos;
    check(all, "list-presets exits 0 and names every preset");
  }

  // --- fixed-point -----------------------------------------------------------
  {
    const int rc = run_cmd("fixed-point --alpha 0.1 --beta 1 --d 1 --M 2", "fp.json");
    bool ok = rc == 0;
    if (ok) {
      const nlohmann::json j = nlohmann::json::parse(slurp(g_scratch / "fp.json"));
      const double x = j.at("x_inf").at(0).get<double>();
      ok = std::abs(x - (-2.7497267355076506536)) < 1e-9 &&
           j.at("residual").get<double>() < 1e-9 && j.at("iterations").get<int>() > 0;
    }
    check(ok, "fixed-point reproduces the two-state oracle in JSON");
  }
  {
    const int rc = run_cmd("fixed-point --alpha 0.1 --beta 1 --d 1,1,1", "fp3.json");
    bool ok = rc == 0;
    if (ok) {
      const nlohmann::json j = nlohmann::json::parse(slurp(g_scratch / "fp3.json"));
      const double a = j.at("x_inf").at(0).get<double>(), b = j.at("x_inf").at(1).get<double>(),
                   c = j.at("x_inf").at(2).get<double>();
      ok = std::abs(a - b) < 1e-11 && std::abs(b - c) < 1e-11;
    }
    check(ok, "symmetric gaps give equal fixed-point components");
  }
  {
    const int rc = run_cmd("fixed-point --alpha 0 --beta 1 --d 1", "fp0.out");
    const std::string out = slurp(g_scratch / "fp0.out");
    check(rc == 2 && out.find("alpha") != std::string::npos,
          "alpha = 0 exits 2 and names alpha");
  }
  check(run_cmd("fixed-point --alpha 0.1 --beta 1 --d 1,1 --M 2") == 2,
        "M inconsistent with the gap count exits 2");

  // --- simulate: generic config and manifest round-trip -----------------------
  const fs::path cfg_path = g_scratch / "gen.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "model.family = gaussian\n"
           "model.means = 0,2\n"
           "model.sigma = 1\n"
           "env.variant = switch\n"
           "env.from = 0\n"
           "env.to = 1\n"
           "env.switch-at = 15\n"
           "horizon = 50\n"
           "runs = 70\n"
           "seed = 9\n"
           "filters = abhmm,bayes\n"
           "alpha = 0.1\n"
           "beta = 1\n";
  }
  const fs::path out1 = g_scratch / "run1";
  {
    const int rc =
        run_cmd("simulate --config " + cfg_path.string() + " --out " + out1.string());
    check(rc == 0 && fs::exists(out1 / "metrics_abhmm_a0.1_b1.csv") &&
              fs::exists(out1 / "metrics_bayes.csv") && fs::exists(out1 / "manifest.json"),
          "simulate writes metrics and a manifest");
  }
  {
    // Re-run from the echoed resolved config: byte-identical data files.
    const nlohmann::json manifest = nlohmann::json::parse(slurp(out1 / "manifest.json"));
    const auto echoed =
        manifest.at("resolved_config").get<std::map<std::string, std::string>>();
    const fs::path echo_cfg = g_scratch / "echo.cfg";
    {
      std::ofstream f(echo_cfg);
      for (const auto& [k, v] : echoed)
        if (k != "out") f << k << " = " << v << "\n";
    }
    const fs::path out2 = g_scratch / "run2";
    const int rc =
        run_cmd("simulate --config " + echo_cfg.string() + " --out " + out2.string());
    bool identical = rc == 0;
    for (const std::string name : {"metrics_abhmm_a0.1_b1.csv", "metrics_bayes.csv",
                                   "summary_abhmm_a0.1_b1.json", "summary_bayes.json"})
      identical = identical && slurp(out1 / name) == slurp(out2 / name);
    check(identical, "re-running from the manifest's config reproduces identical bytes");
    check(manifest.at("schema_version").get<int>() == 1 &&
              manifest.at("command").get<std::string>() == "simulate" &&
              !manifest.at("version").get<std::string>().empty(),
          "manifest carries schema version, command, and tool version");
  }
  {
    // Flag overlay wins over the file: a different seed changes the data.
    const fs::path out3 = g_scratch / "run3";
    const int rc = run_cmd("simulate --config " + cfg_path.string() + " --seed 10 --out " +
                           out3.string());
    check(rc == 0 && slurp(out3 / "metrics_abhmm_a0.1_b1.csv") !=
                         slurp(out1 / "metrics_abhmm_a0.1_b1.csv"),
          "--seed overrides the config file value");
  }

  // --- validation failures ----------------------------------------------------
  {
    const fs::path bad_cfg = g_scratch / "bad.cfg";
    std::ofstream(bad_cfg) << "alpa = 0.1\nfilters = abhmm\n";
    const int rc = run_cmd("simulate --config " + bad_cfg.string(), "bad.out");
    const std::string out = slurp(g_scratch / "bad.out");
    check(rc == 2 && out.find("alpa") != std::string::npos,
          "unknown configuration key exits 2 and names the key");
  }
  check(run_cmd("simulate --preset fig-zz") == 2, "unknown preset exits 2");
  check(run_cmd("simulate --config " + (g_scratch / "missing.cfg").string()) == 2,
        "missing config file exits 2");
  {
    const fs::path empty_cfg = g_scratch / "nofilters.cfg";
    std::ofstream(empty_cfg) << "model.family = gaussian\nmodel.means = 0,1\n"
                                "model.sigma = 1\nhorizon = 5\n";
    const int rc = run_cmd("simulate --config " + empty_cfg.string(), "nofilters.out");
    const std::string out = slurp(g_scratch / "nofilters.out");
    check(rc == 2 && out.find("filters") != std::string::npos,
          "missing required key exits 2 and names it");
  }

  // --- bounds ------------------------------------------------------------------
  {
    const fs::path bdir = g_scratch / "bounds";
    const int rc = run_cmd("bounds --preset fig-2 --out " + bdir.string());
    bool ok = rc == 0 && fs::exists(bdir / "bounds.csv");
    if (ok) {
      std::istringstream csv(slurp(bdir / "bounds.csv"));
      std::string header;
      std::getline(csv, header);
      ok = header + "\n" == abhmm::bounds_csv_header();
      // mu_lower decreases along alpha for every fixed (beta, d_min) pair.
      // Columns: 0 alpha, 1 beta, 3 d_min, 8 mu_lower.
      std::map<std::string, std::pair<double, double>> last;  // key -> (alpha, mu_lower)
      std::string line;
      int rows = 0;
      while (std::getline(csv, line)) {
        ++rows;
        const auto cells = split_csv_line(line);
        const std::string key = cells[1] + "|" + cells[3];
        const double alpha = std::stod(cells[0]);
        const double mu_lower = std::stod(cells[8]);
        const auto it = last.find(key);
        if (it != last.end() && alpha > it->second.first && mu_lower >= it->second.second)
          ok = false;
        last[key] = {alpha, mu_lower};
      }
      ok = ok && rows == 72;
    }
    check(ok, "bounds fig-2 grid: stable header, 72 rows, mu_lower decreasing in alpha");
  }
  {
    const fs::path vdir = g_scratch / "bounds-vacuous";
    const int rc =
        run_cmd("bounds --alpha 0.19 --beta 0.5 --dmin 0.25 --M 5 --out " + vdir.string());
    bool ok = rc == 0;
    if (ok) {
      std::istringstream csv(slurp(vdir / "bounds.csv"));
      std::string header, row;
      std::getline(csv, header);
      std::getline(csv, row);
      const auto cells = split_csv_line(row);
      // Columns: 8 mu_lower, 9 mu_upper, 10 lower_vacuous.
      ok = cells[8] == "0" && cells[9] == "1" && cells[10] == "1";
    }
    check(ok, "vacuous bounds rows are clamped and flagged");
  }
  check(run_cmd("bounds --alpha 0.1 --beta 1 --dmin 1 --M 2 --dmax-ratio 2") == 2,
        "empty bounds grid exits 2");

  if (g_failures == 0) {
    std::printf("cli test: all checks passed\n");
    return 0;
  }
  std::printf("cli test: %d check(s) FAILED\n", g_failures);
  return 1;
}
