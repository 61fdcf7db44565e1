#pragma once

// Experiment orchestration: sampling rod configurations, high-fidelity
// snapshots, error measures, and the end-to-end recipes that build each
// reduced model and compare it against the high-fidelity solutions.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "critrom/autoencoder.hpp"
#include "critrom/core_model.hpp"
#include "critrom/errors.hpp"
#include "critrom/hfm.hpp"
#include "critrom/numerics.hpp"
#include "critrom/pod_rom.hpp"
#include "critrom/random.hpp"
#include "critrom/rom_nonlinear.hpp"

namespace critrom {

using Logger = std::function<void(const std::string&)>;

inline void log_to(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

// ---------------------------------------------------------------------------
// Worker pool

inline unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; callers write results into slot i so the outcome
/// does not depend on scheduling. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Samples

enum class Split { seen, unseen };

inline const char* to_string(Split s) { return s == Split::seen ? "seen" : "unseen"; }

struct SampleRecord {
  std::size_t index = 0;
  Split split = Split::seen;
  RodConfig config;
  CriticalitySolution hfm;
};

struct SampleSet {
  std::string case_name;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> seen;
  std::vector<SampleRecord> unseen;
  std::vector<std::size_t> excluded;  // indices whose solve did not converge or failed
  std::vector<std::string> warnings;

  const std::vector<SampleRecord>& of(Split s) const { return s == Split::seen ? seen : unseen; }
};

/// Rod insertions for sample `index`: one uniform [0,1) draw per rod region
/// from a stream derived from (seed, index).
inline RodConfig draw_config(std::uint64_t seed, std::size_t index, std::size_t n_rods) {
  SplitMix64 rng = SplitMix64::stream(seed, index);
  RodConfig c;
  c.z.resize(n_rods);
  for (double& z : c.z) z = rng.uniform();
  return c;
}

/// Draws n configurations, solves each, and labels the first half seen and
/// the second half unseen. Samples whose power method does not converge are
/// excluded (with a warning) rather than aborting the set.
inline SampleSet generate_samples(const CaseDefinition& c, std::size_t n, std::uint64_t seed,
                                  unsigned workers = default_workers(), const Logger& log = {}) {
  if (n < 2) throw ConfigError("generate_samples: need at least 2 samples");
  const std::size_t n_rods = c.geometry.rod_regions.size();
  std::vector<std::optional<CriticalitySolution>> solved(n);
  std::vector<std::string> failure(n);
  std::vector<RodConfig> configs(n);
  for (std::size_t i = 0; i < n; ++i) configs[i] = draw_config(seed, i, n_rods);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      CriticalitySolution s = solve_case(c, configs[i]);
      if (s.converged) {
        solved[i] = std::move(s);
      } else {
        failure[i] = "power method did not converge in " + std::to_string(s.outer_iters) + " outer iterations";
      }
    } catch (const std::exception& e) {
      failure[i] = e.what();
    }
  });

  SampleSet set;
  set.case_name = c.name;
  set.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const Split split = i < n / 2 ? Split::seen : Split::unseen;
    if (!solved[i]) {
      set.excluded.push_back(i);
      std::string msg = "sample " + std::to_string(i) + " excluded: " + failure[i];
      log_to(log, "warning: " + msg);
      set.warnings.push_back(std::move(msg));
      continue;
    }
    SampleRecord r{i, split, configs[i], std::move(*solved[i])};
    (split == Split::seen ? set.seen : set.unseen).push_back(std::move(r));
  }
  return set;
}

/// Fluxes as columns.
inline DenseMatrix flux_matrix(const std::vector<SampleRecord>& samples) {
  if (samples.empty()) throw ConfigError("flux_matrix: no samples");
  DenseMatrix s(samples.front().hfm.flux.size(), samples.size());
  for (std::size_t j = 0; j < samples.size(); ++j) s.set_column(j, samples[j].hfm.flux);
  return s;
}

// ---------------------------------------------------------------------------
// Error measures

/// (ref_k - approx_k) / ||ref||_inf at the cell k of largest |ref - approx|.
inline double signed_max_error(std::span<const double> ref, std::span<const double> approx) {
  detail::require_dims(ref.size() == approx.size(), "signed_max_error: length mismatch");
  const double scale = norm_inf(ref);
  if (!(scale > 0.0)) throw DomainError("signed_max_error: reference flux is zero");
  std::size_t worst = 0;
  double worst_abs = -1.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = std::abs(ref[i] - approx[i]);
    if (d > worst_abs) {
      worst_abs = d;
      worst = i;
    }
  }
  return (ref[worst] - approx[worst]) / scale;
}

/// Error of the reduction itself: phi against decode(encode(phi)).
inline double e_max_reconstruction(std::span<const double> flux_hfm, const ReductionMap& map) {
  return signed_max_error(flux_hfm, map.reconstruct(flux_hfm));
}

inline double e_max_flux(std::span<const double> flux_hfm, std::span<const double> flux_rom) {
  return signed_max_error(flux_hfm, flux_rom);
}

inline double e_keff(double k_hfm, double k_rom) { return k_hfm - k_rom; }

inline double mean_abs(const std::vector<double>& v) {
  if (v.empty()) throw DimensionError("mean_abs: no values");
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

inline double mean_signed(const std::vector<double>& v) {
  if (v.empty()) throw DimensionError("mean_signed: no values");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Per-sample signed errors of one reduced model on one split.
struct ErrorSeries {
  std::vector<std::size_t> sample;
  std::vector<double> compression;
  std::vector<double> flux;
  std::vector<double> keff;
  std::vector<double> k_hfm;
  std::vector<double> k_rom;
  std::size_t failures = 0;
  std::size_t inner_nonconverged = 0;
  std::size_t outer_nonconverged = 0;
};

struct ErrorRow {
  double compression = 0.0;
  double flux = 0.0;
  double keff = 0.0;
};

inline ErrorRow averaged_errors(const ErrorSeries& s) {
  return {mean_abs(s.compression), mean_abs(s.flux), mean_abs(s.keff)};
}

// ---------------------------------------------------------------------------
// Reduced solves over a sample set

struct RomOutcome {
  std::optional<CriticalitySolution> solution;
  double compression = 0.0;
  std::string error;
};

inline CriticalitySolution solve_reduced(const DiscreteSystem& sys, const ReductionMap& map) {
  if (map.kind == MapKind::pod) return solve_pod_rom(sys, *map.basis);
  return solve_ae_rom(sys, map);
}

inline RomOutcome run_reduced(const CaseDefinition& c, const SampleRecord& sample, const ReductionMap& map) {
  RomOutcome out;
  try {
    out.compression = e_max_reconstruction(sample.hfm.flux, map);
    const DiscreteSystem sys = assemble_case(c, sample.config);
    out.solution = solve_reduced(sys, map);
  } catch (const std::exception& e) {
    std::string z;
    for (double v : sample.config.z) z += (z.empty() ? "" : ",") + std::to_string(v);
    out.error = std::string(to_string(map.kind)) + " solve failed for sample " + std::to_string(sample.index) +
                " (z=" + z + "): " + e.what();
  }
  return out;
}

/// Compression, flux and k_eff errors for every sample of a split.
inline ErrorSeries evaluate_split(const CaseDefinition& c, const std::vector<SampleRecord>& samples,
                                  const ReductionMap& map, unsigned workers,
                                  std::vector<CriticalitySolution>* solutions = nullptr,
                                  std::vector<std::string>* failures = nullptr) {
  std::vector<RomOutcome> outcomes(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) { outcomes[i] = run_reduced(c, samples[i], map); });
  ErrorSeries s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RomOutcome& o = outcomes[i];
    if (!o.solution) {
      ++s.failures;
      if (failures) failures->push_back(o.error);
      continue;
    }
    const CriticalitySolution& rom = *o.solution;
    s.sample.push_back(samples[i].index);
    s.compression.push_back(o.compression);
    s.flux.push_back(e_max_flux(samples[i].hfm.flux, rom.flux));
    s.keff.push_back(e_keff(samples[i].hfm.k_eff, rom.k_eff));
    s.k_hfm.push_back(samples[i].hfm.k_eff);
    s.k_rom.push_back(rom.k_eff);
    s.inner_nonconverged += static_cast<std::size_t>(rom.inner_nonconverged);
    if (!rom.converged) ++s.outer_nonconverged;
    if (solutions) solutions->push_back(rom);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Recipes

struct RecipeOverrides {
  std::optional<double> scale;              // core2d only
  std::optional<int> epochs;
  std::optional<std::size_t> samples;       // total, split in half
  std::optional<std::size_t> latent_dim;
  std::optional<std::size_t> svd_basis;     // SVD stage size of the hybrid
  std::optional<std::vector<std::string>> methods;
  unsigned workers = default_workers();
  std::string out_dir;                      // empty: no artifacts
};

struct RecipeConfig {
  std::string name;
  std::string case_name;
  double scale = 1.0;
  std::size_t samples = 200;
  std::size_t latent_dim = 10;
  std::size_t svd_basis = 100;
  std::vector<std::string> methods;
  int epochs = 10000;
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out_dir;
  // showcase rod settings, given as mixing coefficients r
  std::vector<double> showcase_seen_r;
  std::vector<double> showcase_unseen_r;
};

inline const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names{"slab1d_p10", "slab1d_p2", "core2d_p4"};
  return names;
}

/// Defaults per recipe. Scaling core2d below 1 shrinks the grid to
/// round(90 * scale) cells a side and switches to the desk-scale study:
/// 100 + 100 samples, 5000 epochs.
inline RecipeConfig make_recipe(const std::string& name, std::uint64_t seed, const RecipeOverrides& o = {}) {
  RecipeConfig r;
  r.name = name;
  r.seed = seed;
  if (name == "slab1d_p10" || name == "slab1d_p2") {
    r.case_name = "slab1d";
    r.samples = 200;
    r.latent_dim = name == "slab1d_p10" ? 10 : 2;
    r.methods = {"pod", "ae"};
    r.epochs = 10000;
    r.batch_size = 100;
    r.showcase_seen_r = {0.957, 0.115};
    r.showcase_unseen_r = {0.458, 0.932};
  } else if (name == "core2d_p4") {
    r.case_name = "core2d";
    r.scale = o.scale.value_or(1.0);
    const bool reduced = r.scale < 1.0;
    r.samples = reduced ? 200 : 800;
    r.latent_dim = 4;
    r.methods = {"pod", "ae", "svd_ae"};
    r.epochs = reduced ? 5000 : 30000;
    r.batch_size = 50;
    r.showcase_seen_r = {0.9782, 0.9891, 0.7006, 0.8316};
    r.showcase_unseen_r = {0.9452, 0.8647, 0.9996, 0.9776};
  } else {
    throw ConfigError("unknown recipe '" + name + "' (expected slab1d_p10, slab1d_p2 or core2d_p4)");
  }
  if (o.epochs) r.epochs = *o.epochs;
  if (o.samples) r.samples = *o.samples;
  if (o.latent_dim) r.latent_dim = *o.latent_dim;
  if (o.svd_basis) r.svd_basis = *o.svd_basis;
  if (o.methods) {
    for (const auto& m : *o.methods) {
      if (m != "pod" && m != "ae" && m != "svd_ae") throw ConfigError("unknown method '" + m + "'");
    }
    r.methods = *o.methods;
  }
  if (r.samples < 4) throw ConfigError("recipe needs at least 4 samples");
  r.workers = o.workers;
  r.out_dir = o.out_dir;
  return r;
}

/// Architecture used by a recipe for a given input size.
inline NetworkSpec recipe_network(const RecipeConfig& r, std::size_t n_in) {
  if (r.case_name == "slab1d") return slab1d_network(n_in, r.latent_dim);
  return core2d_network(n_in, r.latent_dim);
}

/// Distinct, fixed training seeds per method so adding a method to a run
/// does not change another method's network.
inline std::uint64_t training_seed(std::uint64_t seed, const std::string& method) {
  return SplitMix64::stream(seed, method == "ae" ? 1001 : 1002)();
}

struct TrainedMethod {
  ReductionMap map;
  std::vector<double> loss_history;
  DenseMatrix latent_range;  // P x 2 (min, max) over training data
};

struct RecipeResult {
  RecipeConfig config;
  SampleSet samples;
  std::optional<PodBasis> pod;
  std::map<std::string, TrainedMethod> methods;
  std::map<std::string, std::map<std::string, ErrorSeries>> errors;  // method -> split -> series
  std::vector<std::string> failures;
  nlohmann::json report;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline DenseMatrix latent_range(const ReductionMap& map, const DenseMatrix& snapshots) {
  DenseMatrix range(map.p, 2);
  for (std::size_t k = 0; k < map.p; ++k) {
    range(k, 0) = std::numeric_limits<double>::infinity();
    range(k, 1) = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t j = 0; j < snapshots.cols(); ++j) {
    const Vector latent = map.encode(snapshots.column(j));
    for (std::size_t k = 0; k < map.p; ++k) {
      range(k, 0) = std::min(range(k, 0), latent[k]);
      range(k, 1) = std::max(range(k, 1), latent[k]);
    }
  }
  return range;
}

inline std::vector<double> z_from_r(const CaseDefinition& c, const std::vector<double>& r) {
  const double base = c.materials.at(c.rod_base).sigma_a;
  const double cr = c.materials.at(c.rod_absorber).sigma_a;
  std::vector<double> z;
  for (double v : r) z.push_back(insertion_from_mixing(v, base, cr));
  return z;
}

}  // namespace detail

/// Trains (or builds) the reduction for one method from the seen snapshots.
inline TrainedMethod build_method(const std::string& method, const RecipeConfig& r, const PodBasis& pod,
                                  const DenseMatrix& snapshots, const Logger& log) {
  TrainedMethod out;
  auto progress = [&](const std::string& tag) {
    const int every = std::max(1, r.epochs / 10);
    return [&log, tag, every](int epoch, double loss) {
      if (epoch % every == 0) log_to(log, tag + " epoch " + std::to_string(epoch) + " loss " + detail::fmt(loss));
    };
  };
  TrainConfig tc;
  tc.epochs = r.epochs;
  tc.batch_size = std::min(r.batch_size, snapshots.cols());
  tc.seed = training_seed(r.seed, method);
  if (method == "pod") {
    out.map = make_pod_map(pod);
  } else if (method == "ae") {
    TrainedAutoencoder ae = train(recipe_network(r, snapshots.rows()), snapshots, tc, progress("ae"));
    out.loss_history = ae.loss_history;
    out.map = make_ae_map(std::move(ae));
  } else if (method == "svd_ae") {
    const SvdResult svd = method_of_snapshots(snapshots);
    const std::size_t p_svd = std::min(r.svd_basis, svd.singular_values.size());
    PodBasis wide = build_pod_basis(snapshots, BasisCount{p_svd});
    const DenseMatrix coeffs = matmul_transposed(wide.r, snapshots);
    TrainedAutoencoder ae = train(recipe_network(r, p_svd), coeffs, tc, progress("svd_ae"));
    out.loss_history = ae.loss_history;
    out.map = compose_svd_ae(std::move(wide), std::move(ae));
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  out.latent_range = detail::latent_range(out.map, snapshots);
  return out;
}

inline nlohmann::json error_block(const std::map<std::string, ErrorSeries>& by_split) {
  nlohmann::json j;
  for (const auto& [split, s] : by_split) {
    nlohmann::json row{{"samples", s.flux.size()},
                       {"failures", s.failures},
                       {"inner_nonconverged", s.inner_nonconverged},
                       {"outer_nonconverged", s.outer_nonconverged}};
    if (!s.flux.empty()) {
      const ErrorRow avg = averaged_errors(s);
      row["compression"] = avg.compression;
      row["flux"] = avg.flux;
      row["k_eff"] = avg.keff;
      row["signed_mean"] = {{"compression", mean_signed(s.compression)},
                            {"flux", mean_signed(s.flux)},
                            {"k_eff", mean_signed(s.keff)}};
    }
    j[split] = row;
  }
  return j;
}

inline void write_artifacts(const RecipeResult& res, const CaseDefinition& c, const Logger& log);

/// generate_samples -> POD basis and trained networks on the seen split ->
/// every reduced model on every sample -> averaged error tables. Failures of
/// one method are recorded and the remaining methods still run.
inline RecipeResult run_recipe(const RecipeConfig& config, const Logger& log = {}) {
  RecipeResult res;
  res.config = config;
  const CaseDefinition c = resolve_case(config.case_name, config.scale);
  log_to(log, "recipe " + config.name + ": solving " + std::to_string(config.samples) + " high-fidelity problems on " +
                  std::to_string(c.geometry.cell_count()) + " cells");
  res.samples = generate_samples(c, config.samples, config.seed, config.workers, log);
  for (const auto& w : res.samples.warnings) res.failures.push_back(w);
  const DenseMatrix snapshots = flux_matrix(res.samples.seen);

  res.pod = build_pod_basis(snapshots, BasisCount{std::min(config.latent_dim, snapshots.cols())});
  log_to(log, "POD: P=" + std::to_string(res.pod->p()) + " captures " + detail::fmt(res.pod->capture_fraction));

  for (const auto& method : config.methods) {
    try {
      log_to(log, "building " + method);
      TrainedMethod tm = build_method(method, config, *res.pod, snapshots, log);
      for (Split split : {Split::seen, Split::unseen}) {
        log_to(log, method + ": solving " + to_string(split) + " samples");
        res.errors[method][to_string(split)] =
            evaluate_split(c, res.samples.of(split), tm.map, config.workers, nullptr, &res.failures);
      }
      res.methods.emplace(method, std::move(tm));
    } catch (const std::exception& e) {
      const std::string msg = method + " stage failed: " + e.what();
      log_to(log, "error: " + msg);
      res.failures.push_back(msg);
    }
  }

  nlohmann::json report;
  report["recipe"] = config.name;
  report["case"] = c.name;
  report["seed"] = config.seed;
  report["scale"] = config.scale;
  report["grid"] = {c.geometry.nx, c.geometry.ny};
  report["latent_dim"] = config.latent_dim;
  report["samples"] = {{"requested", config.samples},
                       {"seen", res.samples.seen.size()},
                       {"unseen", res.samples.unseen.size()},
                       {"excluded", res.samples.excluded.size()}};
  report["training"] = {{"epochs", config.epochs}, {"batch_size", config.batch_size}, {"svd_basis", config.svd_basis}};
  report["pod_basis"] = {{"size", res.pod->p()},
                         {"capture_fraction", res.pod->capture_fraction},
                         {"available_modes", res.pod->spectrum.size()}};
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [method, by_split] : res.errors) {
    nlohmann::json m = error_block(by_split);
    const auto it = res.methods.find(method);
    if (it != res.methods.end() && !it->second.loss_history.empty()) {
      m["final_training_loss"] = it->second.loss_history.back();
    }
    methods[method] = m;
  }
  report["methods"] = methods;
  report["failures"] = res.failures;
  res.report = report;

  if (!config.out_dir.empty()) write_artifacts(res, c, log);
  return res;
}

inline RecipeResult run_recipe(const std::string& name, std::uint64_t seed, const RecipeOverrides& o = {},
                               const Logger& log = {}) {
  return run_recipe(make_recipe(name, seed, o), log);
}

// ---------------------------------------------------------------------------
// Artifacts

inline void write_histogram_csv(const std::filesystem::path& p, const std::vector<double>& seen,
                                const std::vector<double>& unseen, std::size_t bins = 30) {
  std::vector<double> all(seen);
  all.insert(all.end(), unseen.begin(), unseen.end());
  std::string text = "bin_low,bin_high,seen,unseen\n";
  if (!all.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(all.begin(), all.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi == lo) hi = lo + 1e-300 + std::abs(lo) * 1e-12;
    const double width = (hi - lo) / static_cast<double>(bins);
    auto count = [&](const std::vector<double>& v) {
      std::vector<std::size_t> c(bins, 0);
      for (double x : v) {
        auto b = static_cast<std::size_t>((x - lo) / width);
        ++c[std::min(b, bins - 1)];
      }
      return c;
    };
    const auto cs = count(seen), cu = count(unseen);
    for (std::size_t b = 0; b < bins; ++b) {
      text += detail::fmt(lo + width * static_cast<double>(b)) + "," +
              detail::fmt(lo + width * static_cast<double>(b + 1)) + "," + std::to_string(cs[b]) + "," +
              std::to_string(cu[b]) + "\n";
    }
  }
  detail::write_text(p, text);
}

inline nlohmann::json quantile_summary(const std::vector<double>& v) {
  if (v.empty()) return nullptr;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  nlohmann::json q{{"min", *lo}, {"max", *hi}};
  for (double f : {0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975}) {
    q["q" + detail::fmt(f * 100.0)] = detail::quantile(v, f);
  }
  // central ranges after trimming 5% / 20% of the values, split between tails
  q["trim5"] = {detail::quantile(v, 0.025), detail::quantile(v, 0.975)};
  q["trim20"] = {detail::quantile(v, 0.1), detail::quantile(v, 0.9)};
  return q;
}

/// Convergence histories of the HFM and every reduced model for one rod setting.
inline void write_showcase(const std::filesystem::path& dir, const std::string& label, const CaseDefinition& c,
                           const std::vector<double>& r, const RecipeResult& res, nlohmann::json& summary) {
  const RodConfig config{detail::z_from_r(c, r)};
  const DiscreteSystem sys = assemble_case(c, config);
  const CriticalitySolution hfm = solve_case(c, config);
  nlohmann::json entry{{"r", r}, {"z", config.z}, {"k_hfm", hfm.k_eff}};
  std::map<std::string, CriticalitySolution> sols{{"hfm", hfm}};
  for (const auto& [method, tm] : res.methods) {
    try {
      CriticalitySolution s = solve_reduced(sys, tm.map);
      entry[method] = {{"k_eff", s.k_eff}, {"e_keff", e_keff(hfm.k_eff, s.k_eff)},
                       {"e_max_flux", e_max_flux(hfm.flux, s.flux)}, {"outer_iterations", s.outer_iters}};
      sols.emplace(method, std::move(s));
    } catch (const std::exception& e) {
      entry[method] = {{"error", e.what()}};
    }
  }
  for (const auto& [method, s] : sols) {
    std::string hist = "outer,k_eff\n";
    for (std::size_t i = 0; i < s.history.size(); ++i) hist += std::to_string(i + 1) + "," + detail::fmt(s.history[i]) + "\n";
    detail::write_text(dir / ("history_" + label + "_" + method + ".csv"), hist);
    std::string flux = "cell,flux\n";
    for (std::size_t i = 0; i < s.flux.size(); ++i) flux += std::to_string(i) + "," + detail::fmt(s.flux[i]) + "\n";
    detail::write_text(dir / ("flux_" + label + "_" + method + ".csv"), flux);
  }
  summary[label] = entry;
}

inline void write_artifacts(const RecipeResult& res, const CaseDefinition& c, const Logger& log) {
  namespace fs = std::filesystem;
  const fs::path dir(res.config.out_dir);
  fs::create_directories(dir);

  // sample index + snapshot matrices
  std::string index;
  for (Split split : {Split::seen, Split::unseen}) {
    for (const auto& s : res.samples.of(split)) {
      index += nlohmann::json{{"sample", s.index},
                              {"split", to_string(split)},
                              {"z", s.config.z},
                              {"k_eff", s.hfm.k_eff},
                              {"converged", s.hfm.converged},
                              {"outer_iterations", s.hfm.outer_iters}}
                   .dump() +
               "\n";
    }
    if (!res.samples.of(split).empty()) {
      save_matrix((dir / (std::string("snapshots_") + to_string(split) + ".bin")).string(),
                  flux_matrix(res.samples.of(split)));
    }
  }
  detail::write_text(dir / "samples.jsonl", index);

  if (res.pod) {
    save_pod_basis((dir / "pod_basis").string(), *res.pod);
    std::string sv = "index,singular_value,capture_fraction\n";
    double total = 0.0, running = 0.0;
    for (double s : res.pod->spectrum) total += s * s;
    for (std::size_t i = 0; i < res.pod->spectrum.size(); ++i) {
      running += res.pod->spectrum[i] * res.pod->spectrum[i];
      sv += std::to_string(i + 1) + "," + detail::fmt(res.pod->spectrum[i]) + "," + detail::fmt(running / total) + "\n";
    }
    detail::write_text(dir / "singular_values.csv", sv);
  }

  nlohmann::json quantiles;
  for (const auto& [method, by_split] : res.errors) {
    std::string rows = "sample,split,e_compression,e_flux,e_keff,k_hfm,k_rom\n";
    for (const auto& [split, s] : by_split) {
      for (std::size_t i = 0; i < s.flux.size(); ++i) {
        rows += std::to_string(s.sample[i]) + "," + split + "," + detail::fmt(s.compression[i]) + "," +
                detail::fmt(s.flux[i]) + "," + detail::fmt(s.keff[i]) + "," + detail::fmt(s.k_hfm[i]) + "," +
                detail::fmt(s.k_rom[i]) + "\n";
      }
    }
    detail::write_text(dir / ("errors_" + method + ".csv"), rows);
    const auto& seen = by_split.at("seen");
    const auto& unseen = by_split.at("unseen");
    write_histogram_csv(dir / ("hist_" + method + "_compression.csv"), seen.compression, unseen.compression);
    write_histogram_csv(dir / ("hist_" + method + "_flux.csv"), seen.flux, unseen.flux);
    write_histogram_csv(dir / ("hist_" + method + "_keff.csv"), seen.keff, unseen.keff);
    for (const auto& [split, s] : by_split) {
      quantiles[method][split] = {{"compression", quantile_summary(s.compression)},
                                  {"flux", quantile_summary(s.flux)},
                                  {"k_eff", quantile_summary(s.keff)}};
    }
  }
  detail::write_text(dir / "histogram_quantiles.json", quantiles.dump(2) + "\n");

  for (const auto& [method, tm] : res.methods) {
    if (!tm.loss_history.empty()) {
      std::ofstream out(dir / ("loss_" + method + ".csv"));
      write_loss_csv(out, tm.loss_history);
    }
    std::string lr = "latent,min,max\n";
    for (std::size_t k = 0; k < tm.latent_range.rows(); ++k) {
      lr += std::to_string(k + 1) + "," + detail::fmt(tm.latent_range(k, 0)) + "," + detail::fmt(tm.latent_range(k, 1)) + "\n";
    }
    detail::write_text(dir / ("latent_range_" + method + ".csv"), lr);
  }

  nlohmann::json showcase;
  try {
    write_showcase(dir, "seen", c, res.config.showcase_seen_r, res, showcase);
    write_showcase(dir, "unseen", c, res.config.showcase_unseen_r, res, showcase);
  } catch (const std::exception& e) {
    showcase["error"] = e.what();
    log_to(log, std::string("warning: showcase runs failed: ") + e.what());
  }
  detail::write_text(dir / "showcase.json", showcase.dump(2) + "\n");

  detail::write_text(dir / "failures.json", nlohmann::json(res.failures).dump(2) + "\n");
  detail::write_text(dir / "report.json", res.report.dump(2) + "\n");
  log_to(log, "wrote " + (dir / "report.json").string());
}

}  // namespace critrom
