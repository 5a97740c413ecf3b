// Command-line front end: convergence studies, tableau verification, work
// tables, and reference-cache management. Exit codes: 0 success, 1 failed
// verification, 2 bad usage or unknown name, 3 runtime failure.
#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exprk/orderconds.hpp"
#include "exprk/reference.hpp"
#include "exprk/schemes.hpp"
#include "exprk/study.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

void apply_config_file(const std::string& path, exprk::study::StudyConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw exprk::ParameterError("cannot open config file " + path);
  json j = json::parse(in);
  if (j.contains("problem")) cfg.problem = j["problem"].get<std::string>();
  if (j.contains("size")) cfg.size = j["size"].get<int>();
  if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
  if (j.contains("steps")) cfg.steps = j["steps"].get<std::vector<long long>>();
  if (j.contains("tfinal")) cfg.t_final = j["tfinal"].get<double>();
  if (j.contains("tol")) cfg.tolerance = j["tol"].get<double>();
  if (j.contains("iom")) cfg.iom_length = j["iom"].get<int>();
  if (j.contains("max_krylov_dim")) cfg.max_krylov_dim = j["max_krylov_dim"].get<int>();
  if (j.contains("dense_oracle")) cfg.dense_oracle = j["dense_oracle"].get<bool>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  if (j.contains("deterministic_timing"))
    cfg.deterministic_timing = j["deterministic_timing"].get<bool>();
  if (j.contains("cache_dir")) cfg.cache_dir = j["cache_dir"].get<std::string>();
  if (j.contains("reference_multiplier"))
    cfg.reference_multiplier = j["reference_multiplier"].get<int>();
}

std::vector<std::string> all_method_names() { return exprk::schemes::method_names(); }

int do_run(const exprk::study::StudyConfig& cfg) {
  const auto report = exprk::study::run_study(cfg);
  for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::fputs(exprk::study::render_csv(report).c_str(), stdout);
  std::fputs(exprk::study::render_orders(report).c_str(), stdout);
  if (!cfg.out_dir.empty())
    std::fprintf(stderr, "wrote convergence.csv, orders.txt, plot.gp, convergence.svg to %s\n",
                 cfg.out_dir.c_str());
  return 0;
}

int do_verify(const std::vector<std::string>& names, double tolerance) {
  const auto probes = exprk::orderconds::default_probes();
  bool all_ok = true;
  for (const std::string& name : names) {
    const auto m = exprk::schemes::method_by_name(name);
    std::string details;
    const bool ok = exprk::orderconds::verify_claims(m, &details, &probes, tolerance);
    const auto report = exprk::orderconds::check_conditions(m, probes, tolerance);
    std::fputs(exprk::orderconds::render_report(report).c_str(), stdout);
    if (ok) {
      std::printf("%s: all claimed condition statuses verified\n\n", name.c_str());
    } else {
      all_ok = false;
      std::printf("%s: MISMATCH\n%s\n", name.c_str(), details.c_str());
    }
  }
  return all_ok ? 0 : 1;
}

int do_cache(const std::string& dir, bool clear) {
  if (clear) {
    const std::size_t removed = exprk::reference::clear_cache(dir);
    std::printf("removed %zu cache file(s) from %s\n", removed, dir.c_str());
    return 0;
  }
  const auto entries = exprk::reference::list_cache(dir);
  if (entries.empty()) {
    std::printf("no reference cache entries in %s\n", dir.c_str());
    return 0;
  }
  std::printf("%-44s %5s %8s %8s %10s %12s\n", "file", "field", "n", "steps", "gate", "bytes");
  for (const auto& e : entries) {
    if (e.valid)
      std::printf("%-44s %5c %8llu %8llu %10.2e %12ju\n", e.file.c_str(), e.field,
                  static_cast<unsigned long long>(e.n), static_cast<unsigned long long>(e.steps),
                  e.gate_value, static_cast<std::uintmax_t>(e.bytes));
    else
      std::printf("%-44s (unreadable header) %12ju bytes\n", e.file.c_str(),
                  static_cast<std::uintmax_t>(e.bytes));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exponential Runge-Kutta convergence toolbox"};
  app.require_subcommand(1);

  exprk::study::StudyConfig cfg;
  std::string config_file;
  std::vector<std::string> verify_methods;
  std::vector<std::string> table_methods;
  double verify_tol = 1e-9;
  std::string cache_dir;
  bool cache_clear = false;

  CLI::App* run = app.add_subcommand("run", "run a convergence study and emit CSV/plots");
  run->add_option("--config", config_file, "JSON config file; flags override its values");
  run->add_option("--problem", cfg.problem, "parabolic1d | nls1d | grayscott2d");
  run->add_option("--size", cfg.size, "grid points / Fourier modes / points per side");
  run->add_option("--methods", cfg.methods, "integrators to compare")->delimiter(',');
  run->add_option("--steps", cfg.steps, "step counts, strictly increasing")->delimiter(',');
  run->add_option("--tfinal", cfg.t_final, "final time (default: the problem's horizon)");
  run->add_option("--tol", cfg.tolerance, "engine tolerance");
  run->add_option("--iom", cfg.iom_length, "incomplete orthogonalization depth");
  run->add_option("--max-dim", cfg.max_krylov_dim, "maximum Krylov dimension");
  run->add_flag("--dense-oracle", cfg.dense_oracle, "use the dense engine (small problems)");
  run->add_option("--out", cfg.out_dir, "output directory for CSV/plots");
  run->add_option("--seed", cfg.seed, "seed recorded with the study");
  run->add_option("--jobs", cfg.jobs, "parallel (method, N) workers");
  run->add_flag("--deterministic-timing", cfg.deterministic_timing,
                "write 0.0 in the seconds column for reproducible bytes");
  run->add_option("--cache-dir", cfg.cache_dir, "reference solution cache directory");
  run->add_option("--reference-multiplier", cfg.reference_multiplier,
                  "reference steps = multiplier x finest N");

  CLI::App* verify = app.add_subcommand("verify", "check stiff order conditions against claims");
  verify->add_option("methods", verify_methods, "method names (default: all)");
  verify->add_option("--tol", verify_tol, "residual tolerance");

  CLI::App* table = app.add_subcommand("work-table", "per-step engine call summary");
  table->add_option("methods", table_methods, "method names (default: all)");

  CLI::App* cache = app.add_subcommand("cache", "inspect or clear the reference cache");
  cache->add_option("--dir", cache_dir, "cache directory")->required();
  cache->add_flag("--clear", cache_clear, "remove all cache entries");

  // parse the config file first so command-line flags win
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      try {
        apply_config_file(argv[i + 1], cfg);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
      }
      break;
    }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return do_run(cfg);
    if (verify->parsed())
      return do_verify(verify_methods.empty() ? all_method_names() : verify_methods, verify_tol);
    if (table->parsed()) {
      std::fputs(
          exprk::study::work_table(table_methods.empty() ? all_method_names() : table_methods)
              .c_str(),
          stdout);
      return 0;
    }
    if (cache->parsed()) return do_cache(cache_dir, cache_clear);
  } catch (const exprk::LookupError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const exprk::ParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
