// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code
// is non-zero if any selected criterion fails.
//
//   acceptance [--only 1,2,8a,...] [--seed N]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "critrom/harness.hpp"

using namespace critrom;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

std::uint64_t g_seed = 1;

void progress(const std::string& msg) { std::fprintf(stderr, "  %s\n", msg.c_str()); }

double unseen(const RecipeResult& r, const std::string& method, const std::string& field) {
  return r.report.at("methods").at(method).at("unseen").at(field).get<double>();
}

// Recipe runs shared between criteria of the same process.
struct TimedRun {
  RecipeResult result;
  double seconds = 0.0;
};

std::map<std::string, TimedRun> g_runs;

const TimedRun& recipe_run(const std::string& key, const std::string& recipe, const RecipeOverrides& o) {
  auto it = g_runs.find(key);
  if (it != g_runs.end()) return it->second;
  const auto t0 = std::chrono::steady_clock::now();
  RecipeResult r = run_recipe(recipe, g_seed, o, progress);
  const double dt = seconds_since(t0);
  return g_runs.emplace(key, TimedRun{std::move(r), dt}).first->second;
}

RecipeOverrides methods_only(std::vector<std::string> methods) {
  RecipeOverrides o;
  o.methods = std::move(methods);
  return o;
}

// 1: infinite medium
Outcome infinite_medium() {
  const auto t0 = std::chrono::steady_clock::now();
  Geometry g;
  g.nx = 100;
  g.dx = 0.1;
  g.material_names = {"fuel"};
  g.cell_material.assign(100, 0);
  g.boundary.fill(Boundary::reflective);
  const CrossSectionSet fuel{0.45, 2.0, 0.5, 1.0};
  const DiscreteSystem sys = assemble(
      MaterialField{std::vector<CrossSectionSet>(100, fuel), std::vector<double>(100, diffusion_coefficient(fuel))}, g);
  const CriticalitySolution sol = power_method(sys, flat_initial_flux(sys), 1.0, gauss_seidel_inner(sys));
  const double dt = seconds_since(t0);
  const double err = std::abs(sol.k_eff - 0.5 / 0.45);
  return {err <= 1e-7 && dt < 1.0 && sol.converged,
          "k_eff " + std::to_string(sol.k_eff) + ", |error| " + sci(err) + " (tol 1e-7), " + std::to_string(dt) + " s"};
}

double dense_k_eff(const DiscreteSystem& sys) {
  const DenseMatrix a = sys.a.to_dense();
  Eigen::MatrixXd ae(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) ae(i, j) = a(i, j);
  Eigen::MatrixXd be = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (std::size_t i = 0; i < sys.n_dof; ++i) be(i, i) = sys.b[i];
  Eigen::EigenSolver<Eigen::MatrixXd> es(ae.partialPivLu().solve(be), false);
  double best = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) best = std::max(best, std::abs(es.eigenvalues()[i]));
  return best;
}

// 2: power method against a dense eigensolve
Outcome oracle_equivalence() {
  CaseSpec spec = slab1d_spec();
  spec.cells_x = 50;
  const CaseDefinition c = build_case(spec);
  SplitMix64 rng(SplitMix64::stream(g_seed, 2)());
  double worst = 0.0, worst_tight = 0.0;
  double solver_time = 0.0;
  for (int t = 0; t < 20; ++t) {
    const RodConfig rods{{rng.uniform(), rng.uniform()}};
    const DiscreteSystem sys = assemble_case(c, rods);
    const auto t0 = std::chrono::steady_clock::now();
    const CriticalitySolution sol = power_method(sys, flat_initial_flux(sys), 1.0, gauss_seidel_inner(sys));
    solver_time += seconds_since(t0);
    const double oracle = dense_k_eff(sys);
    worst = std::max(worst, std::abs(sol.k_eff - oracle));
    // Same solver with a tighter stop, to separate the stopping rule from
    // discretisation or solver errors.
    const CriticalitySolution tight =
        power_method(sys, flat_initial_flux(sys), 1.0, gauss_seidel_inner(sys, {1e-12, 10000}), {5000, 1e-13});
    worst_tight = std::max(worst_tight, std::abs(tight.k_eff - oracle));
  }
  return {worst <= 1e-8 && solver_time < 10.0,
          "max |k - k_dense| " + sci(worst) + " over 20 configs (tol 1e-8), " + std::to_string(solver_time) +
              " s; with k_tol 1e-13 the gap is " + sci(worst_tight)};
}

// 3: POD error band, slab1d_p10
Outcome pod_band() {
  const TimedRun& run = recipe_run("p10_pod", "slab1d_p10", methods_only({"pod"}));
  const double flux = unseen(run.result, "pod", "flux");
  const double k = unseen(run.result, "pod", "k_eff");
  const bool ok = flux >= 1e-6 && flux <= 1e-4 && k >= 1e-8 && k <= 1e-5 && run.seconds < 120.0;
  return {ok, "unseen flux " + sci(flux) + " in [1e-6,1e-4], k_eff " + sci(k) + " in [1e-8,1e-5], " +
                  std::to_string(run.seconds) + " s"};
}

// 4: projection error below ROM flux error
Outcome projection_ordering() {
  const TimedRun& run = recipe_run("p10_pod", "slab1d_p10", methods_only({"pod"}));
  bool ok = true;
  std::string detail;
  for (const char* split : {"seen", "unseen"}) {
    const auto& row = run.result.report.at("methods").at("pod").at(split);
    const double proj = row.at("compression").get<double>();
    const double flux = row.at("flux").get<double>();
    ok = ok && proj <= flux;
    detail += std::string(split) + ": projection " + sci(proj) + " <= flux " + sci(flux) + "; ";
  }
  return {ok, detail};
}

// 8a: 1D capture with P = 10
Outcome capture_1d() {
  const TimedRun& run = recipe_run("p10_pod", "slab1d_p10", methods_only({"pod"}));
  const double cap = run.result.pod->capture_fraction;
  return {cap >= 0.9999, "P=10 captures " + std::to_string(cap * 100.0) + "% (need >= 99.99%)"};
}

// 5: AE error band, slab1d_p10
Outcome ae_band() {
  const TimedRun& run = recipe_run("p10_ae", "slab1d_p10", methods_only({"ae"}));
  const double flux = unseen(run.result, "ae", "flux");
  const double k = unseen(run.result, "ae", "k_eff");
  const double comp = unseen(run.result, "ae", "compression");
  const bool ok = flux <= 2e-2 && k <= 1e-3 && run.seconds < 1800.0;
  return {ok, "unseen flux " + sci(flux) + " (<= 2e-2), k_eff " + sci(k) + " (<= 1e-3), compression " + sci(comp) +
                  ", " + std::to_string(run.seconds) + " s"};
}

// 6: two latent variables, AE beats POD
Outcome two_variables() {
  const TimedRun& run = recipe_run("p2", "slab1d_p2", {});
  const double ae_k = unseen(run.result, "ae", "k_eff"), pod_k = unseen(run.result, "pod", "k_eff");
  const double ae_f = unseen(run.result, "ae", "flux"), pod_f = unseen(run.result, "pod", "flux");
  return {ae_k < pod_k && ae_f < pod_f, "unseen k_eff AE " + sci(ae_k) + " vs POD " + sci(pod_k) + "; flux AE " +
                                            sci(ae_f) + " vs POD " + sci(pod_f)};
}

RecipeOverrides scaled_2d() {
  RecipeOverrides o;
  o.scale = 0.33;
  return o;
}

// 7: scaled 2D, SVD-AE beats POD
Outcome hybrid_2d() {
  const TimedRun& run = recipe_run("2d_scaled", "core2d_p4", scaled_2d());
  const double s_k = unseen(run.result, "svd_ae", "k_eff"), p_k = unseen(run.result, "pod", "k_eff");
  const double s_f = unseen(run.result, "svd_ae", "flux"), p_f = unseen(run.result, "pod", "flux");
  std::string detail = "unseen k_eff SVD-AE " + sci(s_k) + " vs POD " + sci(p_k) + "; flux SVD-AE " + sci(s_f) +
                       " vs POD " + sci(p_f);
  if (run.result.report.at("methods").contains("ae")) {
    detail += "; AE k_eff " + sci(unseen(run.result, "ae", "k_eff")) + ", flux " + sci(unseen(run.result, "ae", "flux"));
  }
  detail += "; " + std::to_string(run.seconds) + " s";
  return {s_k < p_k && s_f < p_f && run.seconds < 7200.0, detail};
}

// 8c: scaled 2D capture
Outcome capture_2d_scaled() {
  const TimedRun& run = recipe_run("2d_scaled", "core2d_p4", scaled_2d());
  const double cap = run.result.pod->capture_fraction;
  return {cap >= 0.99, "30x30 grid, P=4 captures " + std::to_string(cap * 100.0) + "% (need >= 99%)"};
}

// 8b: full-scale 2D capture, using exactly the seen half of the full recipe
Outcome capture_2d_full() {
  const RecipeConfig r = make_recipe("core2d_p4", g_seed);
  const CaseDefinition c = resolve_case(r.case_name, r.scale);
  const std::size_t n_seen = r.samples / 2;
  std::vector<CriticalitySolution> sols(n_seen);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(n_seen, default_workers(), [&](std::size_t i) {
    sols[i] = solve_case(c, draw_config(g_seed, i, c.geometry.rod_regions.size()));
  });
  DenseMatrix s(c.geometry.cell_count(), n_seen);
  std::size_t unconverged = 0;
  for (std::size_t i = 0; i < n_seen; ++i) {
    s.set_column(i, sols[i].flux);
    if (!sols[i].converged) ++unconverged;
  }
  const PodBasis basis = build_pod_basis(s, BasisCount{4});
  return {basis.capture_fraction >= 0.995,
          "90x90 grid, " + std::to_string(n_seen) + " seen snapshots (" + std::to_string(unconverged) +
              " unconverged), P=4 captures " + std::to_string(basis.capture_fraction * 100.0) + "% (need >= 99.5%), " +
              std::to_string(seconds_since(t0)) + " s"};
}

Network random_network(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  Network net = init_network(make_spec(sizes), seed);
  SplitMix64 rng(seed + 100);
  for (auto& l : net.layers)
    for (double& b : l.b) b = rng.uniform(-0.3, 0.3);
  return net;
}

// 9: backprop against central differences
Outcome gradient_suite() {
  const double h = 1e-5;
  std::size_t probed = 0;
  double worst = 0.0;
  const std::vector<std::vector<std::size_t>> shapes = {{6, 4, 2, 4, 6}, {20, 15, 8, 15, 20}, {30, 20, 5, 20, 30}};
  for (std::size_t n = 0; n < shapes.size(); ++n) {
    Network net = random_network(shapes[n], 40 + n);
    SplitMix64 rng(50 + n);
    DenseMatrix batch(5, shapes[n].front());
    for (double& v : batch.data()) v = rng.uniform();
    const Gradients g = backprop_mse(net, batch);
    auto check = [&](double& p, double analytic) {
      const double saved = p;
      p = saved + h;
      const double up = reconstruction_loss(net, batch);
      p = saved - h;
      const double down = reconstruction_loss(net, batch);
      p = saved;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6}));
      ++probed;
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      for (std::size_t i = 0; i < net.layers[l].w.data().size(); ++i) check(net.layers[l].w.data()[i], g.layers[l].w.data()[i]);
      for (std::size_t i = 0; i < net.layers[l].b.size(); ++i) check(net.layers[l].b[i], g.layers[l].b[i]);
    }
  }
  const double e = 1e-7;
  const double left = (elu(0.0) - elu(-e)) / e, right = (elu(e) - elu(0.0)) / e;
  const bool c1 = std::abs(left - 1.0) <= 1e-7 && std::abs(right - 1.0) <= 1e-8 && elu(0.0) == 0.0;
  return {probed >= 1000 && worst <= 1e-4 && c1,
          std::to_string(probed) + " parameters, worst relative error " + sci(worst) + " (tol 1e-4); ELU slopes at 0: " +
              std::to_string(left) + " / " + std::to_string(right)};
}

DenseMatrix slab_snapshots(const CaseDefinition& c, std::size_t count, std::uint64_t seed) {
  DenseMatrix s(c.geometry.cell_count(), count);
  for (std::size_t j = 0; j < count; ++j) s.set_column(j, solve_case(c, draw_config(seed, j, 2)).flux);
  return s;
}

// 10: decoder linearisation
Outcome linearization_suite() {
  const CaseDefinition c = build_case(slab1d_spec());
  const DenseMatrix s = slab_snapshots(c, 60, g_seed);
  const PodBasis basis = build_pod_basis(s, BasisCount{10});
  const ReductionMap pod = make_pod_map(basis);
  double pod_err = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    const LinearizedMap lin = linearize_decoder(pod, pod.encode(s.column(j)));
    for (std::size_t i = 0; i < lin.c.data().size(); ++i)
      pod_err = std::max(pod_err, std::abs(lin.c.data()[i] - basis.r.data()[i]));
  }

  ReductionMap toy;
  toy.kind = MapKind::ae;
  toy.n = toy.p = 2;
  toy.encode = [](std::span<const double> x) { return Vector(x.begin(), x.end()); };
  toy.decode = [](std::span<const double> a) { return Vector{a[0] * a[0], a[1]}; };
  toy.decode_rows = [](const DenseMatrix& a) {
    DenseMatrix out(a.rows(), 2);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      out(r, 0) = a(r, 0) * a(r, 0);
      out(r, 1) = a(r, 1);
    }
    return out;
  };
  const LinearizedMap tl = linearize_decoder(toy, Vector{1.0, 1.0}, 1e-6);
  const double toy_err = std::max({std::abs(tl.c(0, 0) - 2.0), std::abs(tl.c(0, 1)), std::abs(tl.c(1, 0)),
                                   std::abs(tl.c(1, 1) - 1.0)});

  TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.batch_size = 60;
  cfg.seed = g_seed;
  const ReductionMap ae = make_ae_map(train(slab1d_network(100, 10), s, cfg));
  const Vector anchor = ae.encode(s.column(3));
  const LinearizedMap lin = linearize_decoder(ae, anchor);
  SplitMix64 rng(99);
  Vector v(ae.p);
  for (double& x : v) x = rng.uniform(-1, 1);
  auto remainder = [&](double eps) {
    Vector moved = anchor;
    for (std::size_t k = 0; k < v.size(); ++k) moved[k] += eps * v[k];
    const Vector phi = ae.decode(moved);
    const Vector cv = matvec(lin.c, v);
    double r = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) r += std::pow(phi[i] - lin.anchor_flux[i] - eps * cv[i], 2);
    return std::sqrt(r);
  };
  std::string ratios;
  bool ratios_ok = true;
  for (double eps : {1e-2, 5e-3, 2.5e-3}) {
    const double ratio = remainder(eps) / remainder(eps / 2);
    ratios_ok = ratios_ok && std::abs(ratio - 4.0) <= 0.5;
    ratios += (ratios.empty() ? "" : ", ") + std::to_string(ratio);
  }
  return {pod_err <= 1e-10 && toy_err <= 1e-5 && ratios_ok,
          "|C - R| " + sci(pod_err) + " (tol 1e-10); toy Jacobian error " + sci(toy_err) +
              " (tol 1e-5); Richardson ratios " + ratios + " (4 +- 0.5)"};
}

// 11: the nonlinear ROM collapses to POD for a linear map
Outcome degeneration() {
  const CaseDefinition c = build_case(slab1d_spec());
  const PodBasis basis = build_pod_basis(slab_snapshots(c, 50, g_seed), BasisCount{10});
  const ReductionMap map = make_pod_map(basis);
  AeInnerOptions opts;
  opts.regularization = 1e-10;
  double worst = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    const DiscreteSystem sys = assemble_case(c, draw_config(g_seed + 7, t, 2));
    const CriticalitySolution a = solve_ae_rom(sys, map, pod_initial_flux(sys, basis), 1.0, opts);
    const CriticalitySolution p = solve_pod_rom(sys, basis);
    worst = std::max(worst, std::abs(a.k_eff - p.k_eff));
  }
  return {worst <= 1e-6, "max |k_ae(pod map) - k_pod| " + sci(worst) + " over 10 configs (tol 1e-6)"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 12: byte-identical reports
Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("critrom_acceptance_" + std::to_string(g_seed));
  fs::remove_all(root);
  RecipeOverrides o;
  o.epochs = 300;
  o.out_dir = (root / "first").string();
  o.workers = 1;
  run_recipe("slab1d_p2", g_seed, o, progress);
  o.out_dir = (root / "second").string();
  o.workers = 4;
  run_recipe("slab1d_p2", g_seed, o, progress);
  const std::string a = slurp(root / "first" / "report.json");
  const std::string b = slurp(root / "second" / "report.json");
  const bool same = !a.empty() && a == b;
  fs::remove_all(root);
  return {same, "report.json " + std::to_string(a.size()) + " bytes, " + (same ? "identical" : "DIFFERENT") +
                    " across two runs (1 and 4 workers)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1", infinite_medium},   {"2", oracle_equivalence}, {"3", pod_band},           {"4", projection_ordering},
      {"5", ae_band},           {"6", two_variables},      {"7", hybrid_2d},          {"8a", capture_1d},
      {"8b", capture_2d_full},  {"8c", capture_2d_scaled}, {"9", gradient_suite},     {"10", linearization_suite},
      {"11", degeneration},     {"12", determinism}};

  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string id; std::getline(list, id, ',');) only.insert(id);
    } else if (!std::strcmp(argv[i], "--seed") && i + 1 < argc) {
      g_seed = std::stoull(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,8a,...] [--seed N]\n");
      return 2;
    }
  }

  int failed = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
