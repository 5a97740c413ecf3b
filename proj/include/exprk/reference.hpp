#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "exprk/problems.hpp"
#include "exprk/schemes.hpp"
#include "exprk/stepper.hpp"

namespace exprk::reference {

// High-accuracy end-state solver used when a problem has no closed form.
// Runs the five-stage-order method at `multiplier` times the finest study
// resolution, then repeats at double that resolution; the max-norm distance
// between the two runs is the self-consistency gate and the finer state is
// returned. Results are cached on disk in the binary layout below.
struct ReferenceOptions {
  long long finest_steps = 1;
  int multiplier = 8;
  double tolerance = 1e-12;
  double gate = 1e-10;
  std::string cache_dir;  // empty disables the cache
};

template <class T>
struct ReferenceResult {
  std::vector<T> u;
  long long steps = 0;  // resolution of the returned (finer) run
  double gate_value = 0.0;
  bool from_cache = false;
  std::vector<std::string> warnings;
};

// Cache file layout, little-endian throughout:
//   offset 0   8 bytes   magic "XRKREF01"
//   offset 8   u32       layout version (1)
//   offset 12  u8        field tag: 'd' real double, 'z' complex double
//   offset 13  u64       vector length n
//   offset 21  f64       final time
//   offset 29  u64       key hash (FNV-1a over "name|n|T|steps|tol")
//   offset 37  u64       step count of the stored run
//   offset 45  f64       recorded self-consistency gate value
//   offset 53  u64       FNV-1a checksum of the payload bytes
//   offset 61  payload   n doubles (real) or 2n doubles (re,im interleaved)
namespace detail {

inline constexpr char kMagic[8] = {'X', 'R', 'K', 'R', 'E', 'F', '0', '1'};
inline constexpr std::uint32_t kVersion = 1;

inline std::uint64_t fnv1a(const char* data, std::size_t len) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline std::uint64_t bits_of(double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, sizeof u);
  return u;
}

template <class V>
void put(std::string& out, V v) {
  char b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));
  out.append(b, sizeof(V));
}

template <class V>
bool get(const std::string& in, std::size_t& pos, V& v) {
  if (pos + sizeof(V) > in.size()) return false;
  std::memcpy(&v, in.data() + pos, sizeof(V));
  pos += sizeof(V);
  return true;
}

template <class T>
constexpr char field_tag() {
  return std::is_same_v<T, std::complex<double>> ? 'z' : 'd';
}

inline std::string key_string(const std::string& name, std::size_t n, double t_end,
                              long long steps, double tol) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s|%zu|%016llx|%lld|%016llx", name.c_str(), n,
                static_cast<unsigned long long>(bits_of(t_end)), steps,
                static_cast<unsigned long long>(bits_of(tol)));
  return buf;
}

template <class T>
void write_cache(const std::filesystem::path& file, std::uint64_t key, std::size_t n,
                 double t_end, long long steps, double gate_value, const std::vector<T>& u) {
  std::string blob(kMagic, sizeof kMagic);
  put(blob, kVersion);
  put(blob, field_tag<T>());
  put(blob, static_cast<std::uint64_t>(n));
  put(blob, t_end);
  put(blob, key);
  put(blob, static_cast<std::uint64_t>(steps));
  put(blob, gate_value);
  std::string payload;
  for (const T& v : u) {
    if constexpr (std::is_same_v<T, std::complex<double>>) {
      put(payload, v.real());
      put(payload, v.imag());
    } else {
      put(payload, static_cast<double>(v));
    }
  }
  put(blob, fnv1a(payload.data(), payload.size()));
  blob += payload;
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw Error("failed to write reference cache file " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

template <class T>
bool read_cache(const std::filesystem::path& file, std::uint64_t key, std::size_t n,
                double t_end, ReferenceResult<T>& result, std::string& why) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    why = "absent";
    return false;
  }
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 61 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
    why = "bad header";
    return false;
  }
  std::size_t pos = sizeof kMagic;
  std::uint32_t version = 0;
  char tag = 0;
  std::uint64_t fn = 0, fkey = 0, fsteps = 0, fsum = 0;
  double ft = 0.0, fgate = 0.0;
  if (!get(blob, pos, version) || !get(blob, pos, tag) || !get(blob, pos, fn) ||
      !get(blob, pos, ft) || !get(blob, pos, fkey) || !get(blob, pos, fsteps) ||
      !get(blob, pos, fgate) || !get(blob, pos, fsum)) {
    why = "truncated header";
    return false;
  }
  if (version != kVersion || tag != field_tag<T>() || fn != n || bits_of(ft) != bits_of(t_end) ||
      fkey != key) {
    why = "key mismatch";
    return false;
  }
  const std::size_t scalars = (field_tag<T>() == 'z' ? 2 : 1) * n;
  if (blob.size() != pos + scalars * sizeof(double)) {
    why = "payload size mismatch";
    return false;
  }
  if (fnv1a(blob.data() + pos, blob.size() - pos) != fsum) {
    why = "payload checksum mismatch";
    return false;
  }
  result.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<T, std::complex<double>>) {
      double re, im;
      get(blob, pos, re);
      get(blob, pos, im);
      result.u[i] = std::complex<double>(re, im);
    } else {
      double v;
      get(blob, pos, v);
      result.u[i] = v;
    }
  }
  result.steps = static_cast<long long>(fsteps);
  result.gate_value = fgate;
  result.from_cache = true;
  return true;
}

template <class T>
std::vector<T> run_fine(const problems::SemilinearSystem<T>& p, long long steps, double tol) {
  const schemes::ExpRKMethod m = schemes::method_by_name("expRK5s10");
  schemes::EngineSettings settings;
  settings.tolerance = tol;
  schemes::KrylovEngine<T> engine(&p.A, (p.t_end - p.t0) / static_cast<double>(steps), settings);
  auto r = schemes::integrate(m, p.A, p.g, p.t0, p.t_end, std::span<const T>(p.initial), steps,
                              engine);
  return r.u;
}

}  // namespace detail

template <class T>
ReferenceResult<T> reference_solution(const problems::SemilinearSystem<T>& p,
                                      const ReferenceOptions& opt) {
  if (p.exact) throw ParameterError("problem has a closed-form solution; no reference run needed");
  if (opt.finest_steps < 1 || opt.multiplier < 1)
    throw ParameterError("reference run needs positive step counts");
  const long long base = opt.finest_steps * opt.multiplier;
  const long long fine = 2 * base;
  const std::uint64_t key =
      detail::fnv1a(detail::key_string(p.name, p.n, p.t_end, base, opt.tolerance));

  std::filesystem::path file;
  ReferenceResult<T> result;
  if (!opt.cache_dir.empty()) {
    std::filesystem::create_directories(opt.cache_dir);
    char hex[24];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(key));
    file = std::filesystem::path(opt.cache_dir) / (p.name + "-" + hex + ".ref");
    std::string why;
    if (detail::read_cache(file, key, p.n, p.t_end, result, why)) return result;
    if (why != "absent")
      result.warnings.push_back("reference cache " + file.string() + " rejected (" + why +
                                "); recomputing");
  }

  const std::vector<T> coarse = detail::run_fine(p, base, opt.tolerance);
  result.u = detail::run_fine(p, fine, opt.tolerance);
  result.steps = fine;
  result.gate_value = problems::max_norm_error(result.u, coarse);
  result.from_cache = false;
  if (!(result.gate_value < opt.gate))
    throw NumericalError("reference self-consistency gate failed: step halving moved the state by " +
                         std::to_string(result.gate_value));

  if (!opt.cache_dir.empty())
    detail::write_cache(file, key, p.n, p.t_end, fine, result.gate_value, result.u);
  return result;
}

struct CacheEntry {
  std::string file;
  bool valid = false;
  char field = '?';
  std::uint64_t n = 0;
  double t_end = 0.0;
  std::uint64_t steps = 0;
  double gate_value = 0.0;
  std::uintmax_t bytes = 0;
};

inline std::vector<CacheEntry> list_cache(const std::string& dir) {
  std::vector<CacheEntry> entries;
  if (!std::filesystem::is_directory(dir)) return entries;
  for (const auto& de : std::filesystem::directory_iterator(dir)) {
    if (!de.is_regular_file() || de.path().extension() != ".ref") continue;
    CacheEntry e;
    e.file = de.path().filename().string();
    e.bytes = de.file_size();
    std::ifstream in(de.path(), std::ios::binary);
    std::string head(53, '\0');
    if (in.read(head.data(), 53) && std::memcmp(head.data(), detail::kMagic, 8) == 0) {
      std::size_t pos = 8;
      std::uint32_t version = 0;
      std::uint64_t key = 0;
      detail::get(head, pos, version);
      detail::get(head, pos, e.field);
      detail::get(head, pos, e.n);
      detail::get(head, pos, e.t_end);
      detail::get(head, pos, key);
      detail::get(head, pos, e.steps);
      detail::get(head, pos, e.gate_value);
      e.valid = version == detail::kVersion;
    }
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const CacheEntry& a, const CacheEntry& b) { return a.file < b.file; });
  return entries;
}

inline std::size_t clear_cache(const std::string& dir) {
  std::size_t removed = 0;
  if (!std::filesystem::is_directory(dir)) return removed;
  for (const auto& de : std::filesystem::directory_iterator(dir))
    if (de.is_regular_file() && de.path().extension() == ".ref")
      removed += std::filesystem::remove(de.path()) ? 1 : 0;
  return removed;
}

}  // namespace exprk::reference
