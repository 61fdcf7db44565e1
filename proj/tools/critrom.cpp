// critrom command line: generate snapshots, build reductions, solve single
// configurations and run the end-to-end recipes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "critrom/harness.hpp"

namespace fs = std::filesystem;
using namespace critrom;

namespace {

struct Options {
  std::string case_name = "slab1d";
  std::string recipe = "slab1d_p10";
  std::uint64_t seed = 1;
  std::string method = "pod";
  std::size_t latent_dim = 0;
  int epochs = 0;
  double scale = 1.0;
  std::size_t samples = 0;
  std::size_t batch_size = 0;
  std::size_t svd_basis = 100;
  unsigned workers = default_workers();
  std::string out = "out";
  std::vector<double> z;
  bool quiet = false;
};

Logger stderr_logger(const Options& o) {
  if (o.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::string normalise_method(std::string m) {
  if (m == "svd-ae") m = "svd_ae";
  if (m != "pod" && m != "ae" && m != "svd_ae" && m != "hfm") {
    throw ConfigError("unknown method '" + m + "' (expected pod, ae, svd-ae or hfm)");
  }
  return m;
}

bool is_one_d(const Options& o) { return resolve_case(o.case_name, o.scale).geometry.dims == 1; }

std::string write_sample_index(const SampleSet& set) {
  std::string index;
  for (Split split : {Split::seen, Split::unseen}) {
    for (const auto& s : set.of(split)) {
      index += nlohmann::json{{"sample", s.index},
                              {"split", to_string(split)},
                              {"z", s.config.z},
                              {"k_eff", s.hfm.k_eff},
                              {"converged", s.hfm.converged},
                              {"outer_iterations", s.hfm.outer_iters}}
                   .dump() +
               "\n";
    }
  }
  return index;
}

int cmd_generate(const Options& o) {
  const CaseDefinition c = resolve_case(o.case_name, o.scale);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const SampleSet set = generate_samples(c, o.samples ? o.samples : 200, o.seed, o.workers, stderr_logger(o));
  std::ofstream(dir / "samples.jsonl") << write_sample_index(set);
  for (Split split : {Split::seen, Split::unseen}) {
    if (set.of(split).empty()) continue;
    save_matrix((dir / (std::string("snapshots_") + to_string(split) + ".bin")).string(), flux_matrix(set.of(split)));
  }
  std::printf("%zu seen, %zu unseen, %zu excluded -> %s\n", set.seen.size(), set.unseen.size(), set.excluded.size(),
              dir.string().c_str());
  return set.excluded.empty() ? 0 : 3;
}

TrainConfig train_config(const Options& o, bool one_d, const std::string& method, std::size_t n_samples) {
  TrainConfig tc;
  tc.epochs = o.epochs ? o.epochs : (one_d ? 10000 : 30000);
  tc.batch_size = std::min(o.batch_size ? o.batch_size : (one_d ? 100 : 50), n_samples);
  tc.seed = training_seed(o.seed, method);
  return tc;
}

NetworkSpec network_for(bool one_d, std::size_t n_in, std::size_t latent) {
  return one_d ? slab1d_network(n_in, latent) : core2d_network(n_in, latent);
}

int cmd_train(const Options& o) {
  const std::string method = normalise_method(o.method);
  if (method == "hfm") throw ConfigError("train: the high-fidelity model has nothing to train");
  const fs::path dir(o.out);
  const DenseMatrix snapshots = load_matrix((dir / "snapshots_seen.bin").string());
  const bool one_d = is_one_d(o);
  const std::size_t latent = o.latent_dim ? o.latent_dim : (one_d ? 10 : 4);
  const Logger log = stderr_logger(o);
  auto progress = [&log](int epoch, double loss) {
    if (epoch % 500 == 0) log_to(log, "epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
  };

  if (method == "pod") {
    const PodBasis basis = build_pod_basis(snapshots, BasisCount{latent});
    save_pod_basis((dir / "model_pod").string(), basis);
    std::printf("pod: P=%zu captures %.10f\n", basis.p(), basis.capture_fraction);
  } else if (method == "ae") {
    const TrainConfig tc = train_config(o, one_d, method, snapshots.cols());
    const TrainedAutoencoder ae = train(network_for(one_d, snapshots.rows(), latent), snapshots, tc, progress);
    save_model((dir / "model_ae.bin").string(), ae);
    std::ofstream loss(dir / "loss_ae.csv");
    write_loss_csv(loss, ae.loss_history);
    std::printf("ae: latent %zu, final loss %.6e\n", latent, ae.loss_history.back());
  } else {
    const SvdResult svd = method_of_snapshots(snapshots);
    const std::size_t p_svd = std::min(o.svd_basis, svd.singular_values.size());
    const PodBasis wide = build_pod_basis(snapshots, BasisCount{p_svd});
    const DenseMatrix coeffs = matmul_transposed(wide.r, snapshots);
    const TrainConfig tc = train_config(o, one_d, method, snapshots.cols());
    const TrainedAutoencoder ae = train(network_for(one_d, p_svd, latent), coeffs, tc, progress);
    save_pod_basis((dir / "model_svd_ae_basis").string(), wide);
    save_model((dir / "model_svd_ae.bin").string(), ae);
    std::ofstream loss(dir / "loss_svd_ae.csv");
    write_loss_csv(loss, ae.loss_history);
    std::printf("svd_ae: %zu SVD modes, latent %zu, final loss %.6e\n", p_svd, latent, ae.loss_history.back());
  }
  return 0;
}

ReductionMap load_map(const fs::path& dir, const std::string& method) {
  if (method == "pod") return make_pod_map(load_pod_basis((dir / "model_pod").string()));
  if (method == "ae") return make_ae_map(load_model((dir / "model_ae.bin").string()));
  return compose_svd_ae(load_pod_basis((dir / "model_svd_ae_basis").string()),
                        load_model((dir / "model_svd_ae.bin").string()));
}

int cmd_solve(const Options& o) {
  const std::string method = normalise_method(o.method);
  const CaseDefinition c = resolve_case(o.case_name, o.scale);
  RodConfig config{o.z};
  if (config.z.empty()) config.z.assign(c.geometry.rod_regions.size(), 0.0);
  const DiscreteSystem sys = assemble_case(c, config);
  const CriticalitySolution hfm = solve_case(c, config);
  nlohmann::json out{{"case", c.name}, {"z", config.z}, {"hfm", {{"k_eff", hfm.k_eff}, {"converged", hfm.converged},
                                                                 {"outer_iterations", hfm.outer_iters}}}};
  std::printf("hfm     k_eff %.10f  (%d outer)\n", hfm.k_eff, hfm.outer_iters);
  if (method != "hfm") {
    const ReductionMap map = load_map(fs::path(o.out), method);
    const CriticalitySolution rom = solve_reduced(sys, map);
    out[method] = rom_diagnostics("cli", method, rom);
    out[method]["e_keff"] = e_keff(hfm.k_eff, rom.k_eff);
    out[method]["e_max_flux"] = e_max_flux(hfm.flux, rom.flux);
    std::printf("%-7s k_eff %.10f  (%d outer)  e_keff %+.3e  e_max flux %+.3e\n", method.c_str(), rom.k_eff,
                rom.outer_iters, e_keff(hfm.k_eff, rom.k_eff), e_max_flux(hfm.flux, rom.flux));
  }
  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "solve.json") << out.dump(2) << '\n';
  return 0;
}

void print_report(const nlohmann::json& rep) {
  std::printf("recipe %s  case %s  seed %s  grid %s\n", rep.at("recipe").get<std::string>().c_str(),
              rep.at("case").get<std::string>().c_str(), rep.at("seed").dump().c_str(), rep.at("grid").dump().c_str());
  std::printf("POD P=%s captures %.8f of the snapshot energy\n", rep.at("pod_basis").at("size").dump().c_str(),
              rep.at("pod_basis").at("capture_fraction").get<double>());
  std::printf("%-8s %-7s %8s %14s %14s %14s\n", "method", "split", "samples", "compression", "flux", "k_eff");
  for (const auto& [method, block] : rep.at("methods").items()) {
    for (const char* split : {"seen", "unseen"}) {
      if (!block.contains(split)) continue;
      const auto& row = block.at(split);
      auto cell = [&](const char* k) { return row.contains(k) ? row.at(k).get<double>() : NAN; };
      std::printf("%-8s %-7s %8s %14.4e %14.4e %14.4e\n", method.c_str(), split, row.at("samples").dump().c_str(),
                  cell("compression"), cell("flux"), cell("k_eff"));
    }
  }
  if (!rep.at("failures").empty()) std::printf("%zu failure(s), see failures.json\n", rep.at("failures").size());
}

int cmd_recipe(const Options& o, const CLI::App& sub) {
  RecipeOverrides ov;
  if (sub.count("--scale")) ov.scale = o.scale;
  if (o.epochs) ov.epochs = o.epochs;
  if (o.samples) ov.samples = o.samples;
  if (o.latent_dim) ov.latent_dim = o.latent_dim;
  if (sub.count("--svd-basis")) ov.svd_basis = o.svd_basis;
  if (sub.count("--method")) ov.methods = std::vector<std::string>{normalise_method(o.method)};
  ov.workers = o.workers;
  ov.out_dir = o.out;
  const RecipeResult res = run_recipe(o.recipe, o.seed, ov, stderr_logger(o));
  print_report(res.report);
  return res.failures.empty() ? 0 : 3;
}

int cmd_report(const Options& o) {
  std::ifstream in(fs::path(o.out) / "report.json");
  if (!in) throw ConfigError("no report.json under " + o.out);
  print_report(nlohmann::json::parse(in));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Criticality reduced-order models: POD and autoencoder ROMs for neutron diffusion"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* s) {
    s->add_option("--seed", o.seed, "random seed")->capture_default_str();
    s->add_option("--out", o.out, "output directory")->capture_default_str();
    s->add_option("--workers", o.workers, "worker threads for sample solves")->capture_default_str();
    s->add_flag("--quiet", o.quiet, "no progress output");
  };
  auto add_case = [&o](CLI::App* s) {
    s->add_option("--case", o.case_name, "slab1d, core2d or a case file")->capture_default_str();
    s->add_option("--scale", o.scale, "core2d grid scale (cells = round(90 * scale))")->capture_default_str();
  };
  auto add_training = [&o](CLI::App* s) {
    s->add_option("--method", o.method, "pod, ae or svd-ae");
    s->add_option("--latent-dim", o.latent_dim, "POD basis size / latent variables");
    s->add_option("--epochs", o.epochs, "training epochs");
  };

  auto* gen = app.add_subcommand("generate", "solve random rod configurations with the high-fidelity model");
  add_common(gen);
  add_case(gen);
  gen->add_option("--samples", o.samples, "number of configurations (first half seen)");

  auto* tr = app.add_subcommand("train", "build a reduction from <out>/snapshots_seen.bin");
  add_common(tr);
  add_case(tr);
  add_training(tr);
  tr->add_option("--batch-size", o.batch_size, "mini-batch size");
  tr->add_option("--svd-basis", o.svd_basis, "SVD modes feeding the hybrid autoencoder")->capture_default_str();

  auto* so = app.add_subcommand("solve", "solve one configuration with the HFM and optionally a trained ROM");
  add_common(so);
  add_case(so);
  so->add_option("--method", o.method, "hfm, pod, ae or svd-ae (models are read from --out)");
  so->add_option("--z", o.z, "rod insertion fractions, one per rod")->expected(1, -1);

  auto* re = app.add_subcommand("recipe", "end-to-end experiment: samples, reductions, error tables");
  add_common(re);
  add_training(re);
  re->add_option("--recipe", o.recipe, "slab1d_p10, slab1d_p2 or core2d_p4")->capture_default_str();
  re->add_option("--scale", o.scale, "core2d grid scale; below 1 also shrinks samples and epochs");
  re->add_option("--samples", o.samples, "total samples (split in half)");
  re->add_option("--svd-basis", o.svd_basis, "SVD modes feeding the hybrid autoencoder");

  auto* rp = app.add_subcommand("report", "print the error table of <out>/report.json");
  rp->add_option("--out", o.out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_generate(o);
    if (tr->parsed()) return cmd_train(o);
    if (so->parsed()) {
      if (!so->count("--method")) o.method = "hfm";
      return cmd_solve(o);
    }
    if (re->parsed()) return cmd_recipe(o, *re);
    if (rp->parsed()) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
