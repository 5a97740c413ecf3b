#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "exprk/problems.hpp"
#include "exprk/reference.hpp"
#include "exprk/schemes.hpp"
#include "exprk/stepper.hpp"

namespace exprk::study {

struct StudyConfig {
  std::string problem = "parabolic1d";
  int size = 200;  // interior points / Fourier modes / points per side
  std::vector<std::string> methods = {"expRK4s5", "expRK4s6", "expRK5s8", "expRK5s10"};
  std::vector<long long> steps = {4, 8, 16, 32, 64};
  double t_final = 0.0;  // <= 0 keeps the problem's own horizon
  double tolerance = 1e-12;
  int iom_length = 2;
  int max_krylov_dim = 128;
  bool dense_oracle = false;
  std::string out_dir;  // empty: return the report without writing files
  std::uint64_t seed = 0;
  int jobs = 1;
  // Report 0.0 in the seconds column so repeated runs produce identical bytes.
  bool deterministic_timing = false;
  std::string cache_dir;
  int reference_multiplier = 8;
};

struct RunRecord {
  std::string method;
  long long steps = 0;
  double error = 0.0;
  double seconds = 0.0;
  long long engine_calls = 0;
  long long operator_applications = 0;
  long long g_evaluations = 0;
};

struct MethodFit {
  std::string method;
  double order = std::numeric_limits<double>::quiet_NaN();
  int points_used = 0;
  bool valid = false;
};

struct ConvergenceReport {
  StudyConfig config;
  std::vector<RunRecord> rows;
  std::vector<MethodFit> fits;
  double reference_gate = 0.0;  // 0 when a closed-form solution was available
  bool reference_from_cache = false;
  std::vector<std::string> warnings;
};

// Least-squares slope of log error against log N, restricted to the longest
// initial run of step counts whose errors stay above 50x the engine tolerance.
// Later rows sit on the accuracy floor and would flatten the fit.
inline MethodFit fit_observed_order(const std::string& method, const std::vector<long long>& steps,
                                    const std::vector<double>& errors, double tolerance,
                                    std::vector<std::string>* warnings = nullptr) {
  if (steps.size() != errors.size()) throw DimensionError("order fit needs matched lists");
  MethodFit fit;
  fit.method = method;
  const double floor = 50.0 * tolerance;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(errors[i] > floor)) break;
    lx.push_back(std::log(static_cast<double>(steps[i])));
    ly.push_back(std::log(errors[i]));
  }
  fit.points_used = static_cast<int>(lx.size());
  if (lx.size() < 2) {
    if (warnings)
      warnings->push_back("method " + method + ": " + std::to_string(lx.size()) +
                          " usable point(s) above the accuracy floor; no order estimate");
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double n = static_cast<double>(lx.size());
  fit.order = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.valid = true;
  return fit;
}

// Per-method cost sheet: stage count and, per engine call of one step, the
// evaluation points rho and the highest phi order in the combination.
inline std::string work_table(const std::vector<std::string>& methods) {
  std::string out;
  for (const std::string& name : methods) {
    const schemes::ExpRKMethod m = schemes::method_by_name(name);
    out += m.name + ": order " + std::to_string(m.order) + ", stages " + std::to_string(m.stages) +
           ", engine calls per step " + std::to_string(m.plan.size()) + "\n";
    for (std::size_t b = 0; b < m.plan.size(); ++b) {
      const auto& batch = m.plan[b];
      out += "  call " + std::to_string(b + 1) + ": scalings {";
      for (std::size_t t = 0; t < batch.targets.size(); ++t) {
        if (t) out += ", ";
        out += batch.targets[t].rho.str();
      }
      out += "}, phi orders up to " + std::to_string(batch.q) + "\n";
    }
  }
  return out;
}

namespace detail {

inline std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline void write_atomic(const std::filesystem::path& file, const std::string& content) {
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("failed to write " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

template <class T>
void run_rows(const problems::SemilinearSystem<T>& p, const StudyConfig& cfg, double t_final,
              ConvergenceReport& report) {
  std::vector<T> ref;
  if (p.exact) {
    ref = p.exact(t_final);
  } else {
    reference::ReferenceOptions ropt;
    ropt.finest_steps = cfg.steps.back();
    ropt.multiplier = cfg.reference_multiplier;
    ropt.tolerance = std::min(cfg.tolerance, 1e-12);
    ropt.cache_dir = cfg.cache_dir;
    auto r = reference::reference_solution(p, ropt);
    ref = std::move(r.u);
    report.reference_gate = r.gate_value;
    report.reference_from_cache = r.from_cache;
    for (auto& w : r.warnings) report.warnings.push_back(std::move(w));
  }

  struct Task {
    std::size_t row;
    schemes::ExpRKMethod method;
    long long n_steps;
  };
  std::vector<Task> tasks;
  report.rows.resize(cfg.methods.size() * cfg.steps.size());
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const schemes::ExpRKMethod m = schemes::method_by_name(cfg.methods[mi]);
    for (std::size_t si = 0; si < cfg.steps.size(); ++si)
      tasks.push_back({mi * cfg.steps.size() + si, m, cfg.steps[si]});
  }

  schemes::EngineSettings settings;
  settings.tolerance = cfg.tolerance;
  settings.iom_length = cfg.iom_length;
  settings.max_krylov_dim = cfg.max_krylov_dim;

  auto run_one = [&](const Task& task) {
    const double h = (t_final - p.t0) / static_cast<double>(task.n_steps);
    std::unique_ptr<schemes::PhiEngine<T>> engine;
    if (cfg.dense_oracle)
      engine = std::make_unique<schemes::DenseEngine<T>>(&p.A, h);
    else
      engine = std::make_unique<schemes::KrylovEngine<T>>(&p.A, h, settings);
    const auto start = std::chrono::steady_clock::now();
    const auto result = schemes::integrate(task.method, p.A, p.g, p.t0, t_final,
                                           std::span<const T>(p.initial), task.n_steps, *engine);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    RunRecord& row = report.rows[task.row];
    row.method = task.method.name;
    row.steps = task.n_steps;
    row.error = problems::max_norm_error(result.u, ref);
    row.seconds = cfg.deterministic_timing ? 0.0 : elapsed.count();
    row.engine_calls = result.work.engine_calls;
    row.operator_applications = result.work.operator_applications;
    row.g_evaluations = result.work.g_evaluations;
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1 || tasks.size() <= 1) {
    for (const Task& t : tasks) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          run_one(tasks[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size());
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    std::vector<long long> ns;
    std::vector<double> errs;
    for (std::size_t si = 0; si < cfg.steps.size(); ++si) {
      const RunRecord& row = report.rows[mi * cfg.steps.size() + si];
      ns.push_back(row.steps);
      errs.push_back(row.error);
    }
    report.fits.push_back(
        fit_observed_order(cfg.methods[mi], ns, errs, cfg.tolerance, &report.warnings));
  }
}

}  // namespace detail

inline std::string render_csv(const ConvergenceReport& report) {
  std::string out = "method,N,error,seconds,engine_calls\n";
  for (const RunRecord& r : report.rows) {
    out += r.method + "," + std::to_string(r.steps) + "," +
           detail::format_double("%.12e", r.error) + "," +
           detail::format_double("%.6f", r.seconds) + "," + std::to_string(r.engine_calls) + "\n";
  }
  return out;
}

inline std::string render_orders(const ConvergenceReport& report) {
  std::string out = "method  fitted_order  points_used\n";
  for (const MethodFit& f : report.fits) {
    out += f.method + "  " + (f.valid ? detail::format_double("%.3f", f.order) : "n/a") + "  " +
           std::to_string(f.points_used) + "\n";
  }
  if (report.reference_gate > 0.0)
    out += "reference gate (step-halving drift): " +
           detail::format_double("%.3e", report.reference_gate) + "\n";
  return out;
}

inline std::string render_gnuplot(const ConvergenceReport& report) {
  std::string out;
  out += "set terminal svg size 760,520 dynamic\n";
  out += "set output 'convergence-gnuplot.svg'\n";
  out += "set logscale xy\n";
  out += "set xlabel 'steps N'\nset ylabel 'max error at final time'\n";
  out += "set title '" + report.config.problem + "'\n";
  out += "set key bottom left\n";
  out += "$data << EOD\n";
  std::string prev;
  for (const RunRecord& r : report.rows) {
    if (!prev.empty() && r.method != prev) out += "\n\n";
    out += std::to_string(r.steps) + " " + detail::format_double("%.12e", r.error) + "\n";
    prev = r.method;
  }
  out += "EOD\n";
  double n0 = 1.0, e0 = 1.0;
  if (!report.rows.empty()) {
    n0 = static_cast<double>(report.rows.front().steps);
    e0 = std::max(report.rows.front().error, 1e-300);
  }
  out += "plot \\\n";
  for (std::size_t mi = 0; mi < report.fits.size(); ++mi) {
    out += "  $data index " + std::to_string(mi) + " using 1:2 with linespoints title '" +
           report.fits[mi].method + "', \\\n";
  }
  out += "  " + detail::format_double("%.6e", e0) + "*(x/" + detail::format_double("%.1f", n0) +
         ")**(-4) with lines dashtype 2 lc rgb 'gray40' title 'slope -4', \\\n";
  out += "  " + detail::format_double("%.6e", e0) + "*(x/" + detail::format_double("%.1f", n0) +
         ")**(-5) with lines dashtype 3 lc rgb 'gray60' title 'slope -5'\n";
  return out;
}

inline std::string render_svg(const ConvergenceReport& report) {
  const double width = 760, height = 520, ml = 70, mr = 20, mt = 30, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const RunRecord& r : report.rows) {
    const double lx = std::log10(static_cast<double>(r.steps));
    const double ly = std::log10(std::max(r.error, 1e-300));
    xmin = std::min(xmin, lx), xmax = std::max(xmax, lx);
    ymin = std::min(ymin, ly), ymax = std::max(ymax, ly);
  }
  if (report.rows.empty()) xmin = 0, xmax = 1, ymin = -1, ymax = 0;
  if (xmax - xmin < 1e-9) xmax = xmin + 1;
  if (ymax - ymin < 1e-9) ymax = ymin + 1;
  ymin -= 0.3, ymax += 0.3;
  auto X = [&](double lx) { return ml + (lx - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto Y = [&](double ly) { return height - mb - (ly - ymin) / (ymax - ymin) * (height - mt - mb); };

  std::string s;
  s += "<svg xmlns='http://www.w3.org/2000/svg' width='" + std::to_string(int(width)) +
       "' height='" + std::to_string(int(height)) + "' viewBox='0 0 760 520'>\n";
  s += "<rect width='760' height='520' fill='white'/>\n";
  s += "<text x='380' y='18' text-anchor='middle' font-family='sans-serif' font-size='14'>" +
       report.config.problem + ": max error at final time vs steps</text>\n";

  for (int d = static_cast<int>(std::floor(ymin)); d <= static_cast<int>(std::ceil(ymax)); ++d) {
    if (d < ymin || d > ymax) continue;
    const double y = Y(d);
    s += "<line x1='" + detail::format_double("%.1f", ml) + "' y1='" +
         detail::format_double("%.1f", y) + "' x2='" + detail::format_double("%.1f", width - mr) +
         "' y2='" + detail::format_double("%.1f", y) + "' stroke='#dddddd'/>\n";
    s += "<text x='" + detail::format_double("%.1f", ml - 8) + "' y='" +
         detail::format_double("%.1f", y + 4) +
         "' text-anchor='end' font-family='sans-serif' font-size='11'>1e" + std::to_string(d) +
         "</text>\n";
  }
  for (int d = static_cast<int>(std::floor(xmin)); d <= static_cast<int>(std::ceil(xmax)) + 1; ++d) {
    for (int mult : {1, 2, 5}) {
      const double lx = d + std::log10(static_cast<double>(mult));
      if (lx < xmin - 1e-9 || lx > xmax + 1e-9) continue;
      const double x = X(lx);
      s += "<line x1='" + detail::format_double("%.1f", x) + "' y1='" +
           detail::format_double("%.1f", height - mb) + "' x2='" + detail::format_double("%.1f", x) +
           "' y2='" + detail::format_double("%.1f", height - mb + 5) + "' stroke='#333333'/>\n";
      const long long label = static_cast<long long>(std::llround(mult * std::pow(10.0, d)));
      s += "<text x='" + detail::format_double("%.1f", x) + "' y='" +
           detail::format_double("%.1f", height - mb + 18) +
           "' text-anchor='middle' font-family='sans-serif' font-size='11'>" +
           std::to_string(label) + "</text>\n";
    }
  }
  s += "<rect x='" + detail::format_double("%.1f", ml) + "' y='" + detail::format_double("%.1f", mt) +
       "' width='" + detail::format_double("%.1f", width - ml - mr) + "' height='" +
       detail::format_double("%.1f", height - mt - mb) + "' fill='none' stroke='#333333'/>\n";
  s += "<text x='380' y='505' text-anchor='middle' font-family='sans-serif' font-size='12'>steps "
       "N</text>\n";
  s += "<text x='16' y='270' text-anchor='middle' font-family='sans-serif' font-size='12' "
       "transform='rotate(-90 16 270)'>max error</text>\n";

  // reference slopes anchored to the top-left data corner
  if (!report.rows.empty()) {
    const double lx0 = xmin, lx1 = xmax;
    const double ly0 = ymax - 0.3;
    for (int slope : {4, 5}) {
      const double ly1 = ly0 - slope * (lx1 - lx0);
      s += "<line x1='" + detail::format_double("%.1f", X(lx0)) + "' y1='" +
           detail::format_double("%.1f", Y(ly0)) + "' x2='" + detail::format_double("%.1f", X(lx1)) +
           "' y2='" + detail::format_double("%.1f", Y(std::max(ly1, ymin))) +
           "' stroke='#999999' stroke-dasharray='" + (slope == 4 ? "6 3" : "2 3") + "'/>\n";
      s += "<text x='" + detail::format_double("%.1f", X(lx1) - 4) + "' y='" +
           detail::format_double("%.1f", Y(std::max(ly1, ymin)) - 5) +
           "' text-anchor='end' font-family='sans-serif' font-size='10' fill='#777777'>slope -" +
           std::to_string(slope) + "</text>\n";
    }
  }

  const char* colors[] = {"#1b6ca8", "#c23b22", "#2a8f4a", "#8655b0", "#b08902", "#3a3a3a"};
  std::size_t mi = 0;
  for (std::size_t start = 0; start < report.rows.size();) {
    const std::string& name = report.rows[start].method;
    std::size_t end = start;
    while (end < report.rows.size() && report.rows[end].method == name) ++end;
    const char* color = colors[mi % 6];
    std::string points;
    for (std::size_t i = start; i < end; ++i) {
      const double x = X(std::log10(static_cast<double>(report.rows[i].steps)));
      const double y = Y(std::log10(std::max(report.rows[i].error, 1e-300)));
      points += detail::format_double("%.1f", x) + "," + detail::format_double("%.1f", y) + " ";
      s += "<circle cx='" + detail::format_double("%.1f", x) + "' cy='" +
           detail::format_double("%.1f", y) + "' r='3' fill='" + color + "'/>\n";
    }
    s += "<polyline points='" + points + "' fill='none' stroke='" + std::string(color) +
         "' stroke-width='1.5'/>\n";
    s += "<text x='" + detail::format_double("%.1f", width - mr - 8) + "' y='" +
         detail::format_double("%.1f", mt + 16 + 14 * static_cast<double>(mi)) +
         "' text-anchor='end' font-family='sans-serif' font-size='11' fill='" + color + "'>" + name +
         "</text>\n";
    start = end;
    ++mi;
  }
  s += "</svg>\n";
  return s;
}

inline ConvergenceReport run_study(const StudyConfig& cfg) {
  if (cfg.steps.empty()) throw ParameterError("study needs at least one step count");
  for (std::size_t i = 1; i < cfg.steps.size(); ++i)
    if (cfg.steps[i] <= cfg.steps[i - 1])
      throw ParameterError("step counts must be strictly increasing");
  if (cfg.steps.front() < 1) throw ParameterError("step counts must be positive");
  if (cfg.methods.empty()) throw ParameterError("study needs at least one method");
  for (const std::string& m : cfg.methods) (void)schemes::method_by_name(m);
  if (!(cfg.tolerance > 0.0)) throw ParameterError("engine tolerance must be positive");

  ConvergenceReport report;
  report.config = cfg;

  auto finish = [&](const auto& p) {
    const double t_final = cfg.t_final > 0.0 ? cfg.t_final : p.t_end;
    if (!(t_final > p.t0)) throw ParameterError("final time must exceed the start time");
    if (cfg.dense_oracle && p.n > 1024)
      throw ParameterError("dense engine cross-check is limited to n <= 1024");
    auto q = p;
    q.t_end = t_final;
    detail::run_rows(q, cfg, t_final, report);
  };

  if (cfg.problem == "parabolic1d")
    finish(problems::make_parabolic1d(cfg.size));
  else if (cfg.problem == "nls1d")
    finish(problems::make_nls1d(cfg.size));
  else if (cfg.problem == "grayscott2d")
    finish(problems::make_grayscott2d(cfg.size));
  else
    throw LookupError("unknown problem: " + cfg.problem);

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    detail::write_atomic(dir / "convergence.csv", render_csv(report));
    detail::write_atomic(dir / "orders.txt", render_orders(report));
    detail::write_atomic(dir / "plot.gp", render_gnuplot(report));
    detail::write_atomic(dir / "convergence.svg", render_svg(report));
  }
  return report;
}

}  // namespace exprk::study
