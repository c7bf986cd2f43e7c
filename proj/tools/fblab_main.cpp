// fblab command-line driver.
//
// Subcommands: solve, family, heleshaw, analyze, signorini, dimension take a
// config file (TOML subset or JSON) and produce a run directory; report
// consolidates an existing run directory. Exit codes: 0 success, 1 numerical
// failure (solver divergence or failed checks), 2 config schema violations.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <fblab/config.hpp>
#include <fblab/runner.hpp>

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "runs";
  int threads = 0;  // 0 = unset, resolve from FBLAB_THREADS or default 1
  bool csv = false;
};

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("FBLAB_THREADS")) {
    std::string s(env);
    try {
      std::size_t used = 0;
      int v = std::stoi(s, &used);
      if (used != s.size() || v < 1) throw std::invalid_argument("range");
      return v;
    } catch (const std::exception&) {
      throw fblab::ConfigError("FBLAB_THREADS",
                               "must be a positive integer, got \"" + s + "\"");
    }
  }
  return 1;
}

int run_kind_command(const std::string& subcommand, const CommonFlags& flags) {
  fblab::ExperimentConfig cfg = fblab::load_config_file(flags.config_path);
  // Pipeline configs run under the analyze subcommand; everything else must
  // name its own kind.
  bool match = cfg.kind == subcommand ||
               (subcommand == "analyze" && cfg.kind == "full-pipeline");
  if (!match)
    throw fblab::ConfigError(
        "kind", "config kind \"" + cfg.kind + "\" does not match subcommand \"" +
                    subcommand + "\"");

  fblab::RunOptions opt;
  opt.out_base = flags.out_dir;
  opt.csv = flags.csv;
  opt.threads = resolve_threads(flags.threads);
  opt.config_source = flags.config_path;

  fblab::RunResult res = fblab::run(cfg, opt);
  int passed = 0, failed = 0;
  for (const auto& c : res.summary.at("checks"))
    (c.at("pass").get<bool>() ? passed : failed)++;
  std::cout << "run directory: " << res.dir.string() << "\n"
            << "checks: " << passed << " passed, " << failed << " failed\n";
  if (!res.all_checks_passed) {
    std::cerr << "fblab: one or more numerical checks failed (see "
              << (res.dir / "summary.json").string() << ")\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fblab: numerical laboratory for obstacle-problem free boundaries"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fblab 1.0.0");

  CommonFlags flags;
  std::string report_dir;

  const char* kinds[] = {"solve", "family", "heleshaw", "analyze", "signorini",
                         "dimension"};
  const char* descriptions[] = {
      "solve one obstacle problem and extract the free boundary",
      "solve a monotone family of obstacle problems",
      "run a quasi-static Hele-Shaw evolution and locate topology changes",
      "classify and stratify candidate singular points (also hosts "
      "full-pipeline configs)",
      "exercise the catalog of homogeneous lower-dimensional solutions",
      "estimate Hausdorff premeasures and box-counting dimensions"};

  for (std::size_t i = 0; i < std::size(kinds); ++i) {
    CLI::App* sub = app.add_subcommand(kinds[i], descriptions[i]);
    sub->add_option("--config", flags.config_path, "experiment config (.toml or .json)")
        ->required();
    sub->add_option("--out", flags.out_dir, "base directory for run outputs")
        ->capture_default_str();
    sub->add_option("--threads", flags.threads,
                    "worker threads (falls back to FBLAB_THREADS, then 1)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--csv", flags.csv, "also export binary artifacts as CSV");
  }

  CLI::App* rep = app.add_subcommand("report", "consolidate a run directory");
  rep->add_option("dir", report_dir, "run directory to summarize")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config violations
  }

  try {
    if (rep->parsed()) {
      fblab::report(report_dir, std::cout);
      return 0;
    }
    for (const char* kind : kinds)
      if (app.get_subcommand(kind)->parsed()) return run_kind_command(kind, flags);
    return 2;  // unreachable: require_subcommand(1)
  } catch (const fblab::ConfigError& e) {
    std::cerr << "fblab: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fblab: " << e.what() << "\n";
    return 1;
  }
}
