// kerrsim: run, compare and rasterize lossy Kerr oscillator experiments.
//
//   kerrsim run experiment.cfg
//   kerrsim compare runs/moments-<id> runs/moments-<id2> --tol 1e-3
//   kerrsim export-raster snapshot_3.csv --phi-step pi/200 [-o raster.csv]
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 comparison failure.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "kerr/config.hpp"
#include "kerr/runner.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, numerical_failure = 3, comparison_failure = 4 };

int cmd_run(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw kerr::config::ConfigError(0, "cannot open config file " + path);
  const auto doc = kerr::config::Document::parse(is);
  std::optional<std::string> out;
  if (const char* env = std::getenv("KERRSIM_OUTPUT_DIR"); env && *env) out = env;
  const auto cfg = kerr::config::load(doc, out);
  const auto res = kerr::runner::run(cfg);
  std::cout << res.dir.string() << "\n";
  return ok;
}

int cmd_compare(const std::string& a, const std::string& b, double tol) {
  const auto res = kerr::runner::compare_runs(a, b);
  for (const auto& c : res.columns)
    if (c.rel > tol) std::cout << c.file << " " << c.column << " rel=" << c.rel << " abs=" << c.max_abs << "\n";
  std::cout << "worst relative difference " << res.worst << " (tol " << tol << "): " << (res.passed(tol) ? "match" : "MISMATCH")
            << "\n";
  return res.passed(tol) ? ok : comparison_failure;
}

int cmd_raster(const std::string& dump, const std::string& step_text, const std::string& out) {
  const auto step = kerr::config::parse_number(step_text);
  if (!step || !(*step > 0.0)) throw kerr::config::ConfigError(0, "--phi-step must be a positive number, got '" + step_text + "'");
  std::ifstream is(dump);
  if (!is) throw kerr::config::ConfigError(0, "cannot open dump " + dump);
  const auto field = kerr::phasespace::read_dump(is);
  if (out.empty()) {
    kerr::phasespace::write_raster(std::cout, field, *step);
  } else {
    std::ostringstream os;
    kerr::phasespace::write_raster(os, field, *step);
    kerr::runner::write_atomic(out, os.str());
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lossy Kerr oscillator simulator"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file")->required();

  std::string a, b;
  double tol = 1e-6;
  auto* cmp = app.add_subcommand("compare", "compare the CSV artifacts of two runs");
  cmp->add_option("a", a, "first run directory")->required();
  cmp->add_option("b", b, "second run directory")->required();
  cmp->add_option("--tol", tol, "maximum column-relative difference")->capture_default_str();

  std::string dump, phi_step = "pi/200", raster_out;
  auto* ras = app.add_subcommand("export-raster", "sample a snapshot dump on an (r, phi) raster");
  ras->add_option("dump", dump, "snapshot dump CSV")->required();
  ras->add_option("--phi-step", phi_step, "angular step, e.g. pi/200")->capture_default_str();
  ras->add_option("-o,--output", raster_out, "output file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*cmp) return cmd_compare(a, b, tol);
    if (*ras) return cmd_raster(dump, phi_step, raster_out);
  } catch (const kerr::runner::ComparisonFailure& e) {
    std::cerr << "comparison failed: " << e.what() << "\n";
    return comparison_failure;
  } catch (const kerr::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  } catch (const kerr::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return numerical_failure;
  }
  return ok;
}
