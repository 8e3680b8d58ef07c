#include "gammafem/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>

#include "gammafem/dsm.hpp"
#include "gammafem/eit.hpp"
#include "gammafem/feature.hpp"
#include "gammafem/io.hpp"
#include "gammafem/parallel.hpp"

namespace gfem {

namespace {

constexpr double kPi = std::numbers::pi;
using nlohmann::json;

// -- config plumbing ---------------------------------------------------------

void check_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::vector<double> as_double_list(const json& value, const std::string& key) {
  try {
    if (value.is_number()) return {value.get<double>()};
    return value.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' must be a number or list");
  }
}

std::vector<Index> as_index_list(const json& value, const std::string& key) {
  try {
    if (value.is_number()) return {value.get<Index>()};
    return value.get<std::vector<Index>>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' must be an integer or list");
  }
}

struct Common {
  std::uint64_t seed = 0;
  Index threads = 1;
  std::string out_dir = "out";
};

Common common_config(const json& cfg) {
  Common c;
  c.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  c.threads = get_or<Index>(cfg, "threads", default_threads());
  c.out_dir = get_or<std::string>(cfg, "out_dir", "out");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  std::filesystem::create_directories(c.out_dir);
  set_default_threads(c.threads);
  return c;
}

std::string joined(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

NoiseKind noise_kind_from(const std::string& name) {
  if (name == "none") return NoiseKind::None;
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "lowfreq") return NoiseKind::LowFreq;
  throw ConfigError("noise.kind must be one of none|gaussian|lowfreq");
}

struct NoiseConfig {
  NoiseKind kind = NoiseKind::LowFreq;
  double delta = 0.0;
};

NoiseConfig noise_config(const json& cfg, NoiseKind default_kind) {
  NoiseConfig n;
  n.kind = default_kind;
  if (!cfg.contains("noise")) return n;
  const json& obj = cfg.at("noise");
  check_keys(obj, {"kind", "delta"}, "noise");
  n.kind = noise_kind_from(get_or<std::string>(obj, "kind",
                                               default_kind == NoiseKind::Gaussian ? "gaussian"
                                                                                   : "lowfreq"));
  n.delta = get_or<double>(obj, "delta", 0.0);
  if (n.delta < 0.0) throw ConfigError("noise.delta must be >= 0");
  return n;
}

AdamOptions optimizer_config(const json& cfg) {
  AdamOptions opts;
  opts.learning_rate = 2e-2;
  if (!cfg.contains("optimizer")) return opts;
  const json& obj = cfg.at("optimizer");
  check_keys(obj, {"learning_rate", "max_iterations", "gradient_tol"}, "optimizer");
  opts.learning_rate = get_or<double>(obj, "learning_rate", opts.learning_rate);
  opts.max_iterations = get_or<Index>(obj, "max_iterations", opts.max_iterations);
  opts.gradient_tol = get_or<double>(obj, "gradient_tol", opts.gradient_tol);
  if (opts.learning_rate <= 0.0 || opts.max_iterations < 1)
    throw ConfigError("optimizer: bad learning_rate or max_iterations");
  return opts;
}

// -- shared pipeline pieces --------------------------------------------------

SimplicialMesh recon_mesh(Index n) {
  const double lo[2] = {-1.0, -1.0}, hi[2] = {1.0, 1.0};
  return uniform_mesh(2, n, lo, hi);
}

struct ReconStack {
  SimplicialMesh mesh;
  std::unique_ptr<LagrangeSpace> space;
  std::unique_ptr<BoundarySpace> boundary;
  std::unique_ptr<SpectralBasis> basis;
};

ReconStack build_stack(Index mesh_n, Index k0, Index refine_level) {
  ReconStack stack;
  stack.mesh = recon_mesh(mesh_n);
  stack.space = std::make_unique<LagrangeSpace>(stack.mesh, 1);
  stack.boundary = make_boundary_space(stack.mesh);
  stack.basis = std::make_unique<SpectralBasis>(*stack.boundary, k0, refine_level);
  return stack;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Warm-up run discarded, median of `repeats` reported.
double timed_median(Index repeats, const std::function<void()>& fn) {
  fn();
  std::vector<double> times;
  for (Index r = 0; r < repeats; ++r) {
    const double t0 = now_seconds();
    fn();
    times.push_back(now_seconds() - t0);
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

// -- bench-assembly ----------------------------------------------------------

int cmd_bench_assembly(const json& cfg) {
  check_keys(cfg, {"seed", "threads", "out_dir", "mesh_sizes", "orders", "cg_tol", "repeats"},
             "bench-assembly");
  const Common common = common_config(cfg);
  const auto sizes = get_or<std::vector<Index>>(cfg, "mesh_sizes", {128, 256});
  const auto orders = get_or<std::vector<Index>>(cfg, "orders", {1, 2});
  const double tol = get_or<double>(cfg, "cg_tol", 1e-10);
  const Index repeats = get_or<Index>(cfg, "repeats", 5);

  auto exact = [](std::span<const double> x) { return std::cos(kPi * x[0]) * std::cos(kPi * x[1]); };
  auto source = [&](std::span<const double> x) { return 2.0 * kPi * kPi * exact(x); };

  CsvWriter values(joined(common.out_dir, "bench_assembly.csv"));
  values.header({"mesh_n", "order", "dofs", "l2_error"});
  CsvWriter timing(joined(common.out_dir, "bench_assembly_timing.csv"));
  timing.header({"mesh_n", "order", "dofs", "assembly_seconds", "cg_seconds", "cg_iterations"});

  for (Index n : sizes) {
    const double lo[2] = {0.0, 0.0}, hi[2] = {1.0, 1.0};
    const auto mesh = uniform_mesh(2, n, lo, hi);
    for (Index order : orders) {
      const LagrangeSpace space(mesh, order);
      const double t_assembly =
          timed_median(repeats, [&] { (void)assemble_stiffness(space, 1.0); });
      const CsrMatrix k = assemble_stiffness(space, 1.0);
      const auto w = boundary_weights(space);
      const auto load = assemble_volume_load(space, source);

      const MeanZeroSolver solver(k, w, SolverBackend::Cg, {tol, 0, false});
      std::vector<double> solution;
      const double t_cg = timed_median(repeats, [&] { solution = solver.solve(load); });
      const double err = error_norms(space, solution, exact).l2;

      values.row({static_cast<double>(n), static_cast<double>(order),
                  static_cast<double>(space.ndof()), err});
      timing.row({static_cast<double>(n), static_cast<double>(order),
                  static_cast<double>(space.ndof()), t_assembly, t_cg, 0.0});
    }
  }
  return kExitOk;
}

// -- bench-batched -----------------------------------------------------------

int cmd_bench_batched(const json& cfg) {
  check_keys(cfg, {"seed", "threads", "out_dir", "mesh_n", "channels", "cg_tol", "repeats"},
             "bench-batched");
  const Common common = common_config(cfg);
  const Index n = get_or<Index>(cfg, "mesh_n", 32);
  const Index l_count = get_or<Index>(cfg, "channels", 10);
  const double tol = get_or<double>(cfg, "cg_tol", 1e-10);
  const Index repeats = get_or<Index>(cfg, "repeats", 5);

  const double lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
  const auto mesh = uniform_mesh(3, n, lo, hi);
  const LagrangeSpace space(mesh, 1);
  const CsrMatrix k = assemble_stiffness(space, 1.0);
  const auto w = boundary_weights(space);
  const MeanZeroSolver solver(k, w, SolverBackend::Cg, {tol, 0, false});

  auto exact = [](Index l, std::span<const double> x) {
    const double f = static_cast<double>(l + 1) * kPi;
    return std::cos(f * x[0]) * std::cos(f * x[1]) * std::cos(f * x[2]);
  };
  auto source = [&](Index l, std::span<const double> x) {
    const double f = static_cast<double>(l + 1) * kPi;
    return 3.0 * f * f * exact(l, x);
  };
  auto neumann = [](Index, std::span<const double>, std::span<const double>) { return 0.0; };

  DenseTensor serial_solutions({l_count, space.ndof()});
  auto run_serial = [&] {
    for (Index l = 0; l < l_count; ++l) {
      LinearForm form(space);
      form.add_integrator(ScalarSourceIntegrator{
          [&, l](std::span<const double> x) { return source(l, x); }, nullptr, false, -1});
      form.add_integrator(ScalarNeumannIntegrator{
          [&, l](std::span<const double> x, std::span<const double> nrm) {
            return neumann(l, x, nrm);
          },
          nullptr, false, -1});
      const DenseTensor load = form.assemble();
      const auto sol = solver.solve(
          {load.data().data(), static_cast<std::size_t>(space.ndof())});
      std::copy(sol.begin(), sol.end(), serial_solutions.data().begin() + l * space.ndof());
    }
  };

  DenseTensor batched_solutions;
  auto run_batched = [&] {
    LinearForm form(space, l_count);
    form.add_integrator(ScalarSourceIntegrator{nullptr, source, true, -1});
    form.add_integrator(ScalarNeumannIntegrator{nullptr, neumann, true, -1});
    const DenseTensor loads = form.assemble();
    batched_solutions = solver.solve_rows(loads);
  };

  const double t_serial = timed_median(repeats, run_serial);
  const double t_batched = timed_median(repeats, run_batched);

  double max_diff = 0.0;
  for (Index i = 0; i < serial_solutions.size(); ++i)
    max_diff = std::max(max_diff, std::abs(serial_solutions[i] - batched_solutions[i]));

  // Nodal error against the manufactured solutions, for the record.
  double linf_exact = 0.0;
  for (Index l = 0; l < l_count; ++l)
    for (Index v = 0; v < mesh.num_nodes(); ++v) {
      const std::span<const double> x(mesh.nodes.data().data() + v * 3, 3);
      linf_exact = std::max(linf_exact,
                            std::abs(batched_solutions[l * space.ndof() + v] - exact(l, x)));
    }

  const double speedup = t_batched > 0.0 ? t_serial / t_batched : 0.0;

  CsvWriter values(joined(common.out_dir, "bench_batched.csv"));
  values.header({"dofs", "channels", "max_batched_vs_serial", "linf_vs_exact"});
  values.row({static_cast<double>(space.ndof()), static_cast<double>(l_count), max_diff,
              linf_exact});
  CsvWriter timing(joined(common.out_dir, "bench_batched_timing.csv"));
  timing.header({"dofs", "serial_ms", "batched_ms", "speedup", "speedup_warn"});
  timing.row({static_cast<double>(space.ndof()), 1e3 * t_serial, 1e3 * t_batched, speedup,
              speedup >= 1.5 ? 0.0 : 1.0});

  if (max_diff > 1e-12) return kExitCheckFailed;
  return kExitOk;
}

// -- eigenbasis ---------------------------------------------------------------

int cmd_eigenbasis(const json& cfg) {
  check_keys(cfg, {"seed", "threads", "out_dir", "mesh_n", "k0", "refine_level"}, "eigenbasis");
  const Common common = common_config(cfg);
  const Index n = get_or<Index>(cfg, "mesh_n", 64);
  const Index k0 = get_or<Index>(cfg, "k0", 32);
  const Index refine_level = get_or<Index>(cfg, "refine_level", 2);

  const auto stack = build_stack(n, k0, refine_level);
  write_spectral_basis_file(joined(common.out_dir, "spectral_basis.gfb"), *stack.basis);

  const double perimeter = stack.boundary->trace.perimeter;
  CsvWriter csv(joined(common.out_dir, "eigenvalues.csv"));
  csv.header({"k", "lambda", "analytic", "rel_error"});
  double worst = 0.0;
  for (Index k = 1; k <= k0; ++k) {
    const double lambda = stack.basis->eigenvalues()[static_cast<std::size_t>(k - 1)];
    const double analytic =
        std::pow(2.0 * kPi * std::ceil(static_cast<double>(k) / 2.0) / perimeter, 2);
    const double rel = std::abs(lambda - analytic) / analytic;
    if (k <= 16) worst = std::max(worst, rel);
    csv.row({static_cast<double>(k), lambda, analytic, rel});
  }

  // Orthonormality deviation of the stored basis.
  const auto& psi = stack.basis->eigenvectors();
  const auto& mass = stack.basis->fine_mass();
  const Index nf = stack.basis->fine_size();
  double ortho = 0.0;
  std::vector<double> col(static_cast<std::size_t>(nf));
  for (Index j = 0; j < k0; ++j) {
    for (Index i = 0; i < nf; ++i) col[static_cast<std::size_t>(i)] = psi[i * k0 + j];
    const auto mcol = mass.matvec(col);
    for (Index i2 = 0; i2 <= j; ++i2) {
      double dot = 0.0;
      for (Index i = 0; i < nf; ++i) dot += psi[i * k0 + i2] * mcol[static_cast<std::size_t>(i)];
      ortho = std::max(ortho, std::abs(dot - (i2 == j ? 1.0 : 0.0)));
    }
  }

  json summary;
  summary["k0"] = k0;
  summary["refine_level"] = refine_level;
  summary["perimeter"] = perimeter;
  summary["max_rel_error_k_le_16"] = worst;
  summary["orthonormality_deviation"] = ortho;
  write_json_file(joined(common.out_dir, "eigenbasis_summary.json"), summary);
  return worst <= 1e-2 && ortho <= 1e-8 ? kExitOk : kExitCheckFailed;
}

// -- gen-data ------------------------------------------------------------------

int cmd_gen_data(const json& cfg) {
  check_keys(cfg,
             {"seed", "threads", "out_dir", "mesh_n", "samples", "n_circles", "channels",
              "sigma_inclusion", "sigma_background", "noise", "data_refine", "k0", "refine_level",
              "grid_n"},
             "gen-data");
  const Common common = common_config(cfg);
  const Index n = get_or<Index>(cfg, "mesh_n", 64);
  const Index samples = get_or<Index>(cfg, "samples", 4);
  const Index n_circles = get_or<Index>(cfg, "n_circles", 3);
  const auto channels =
      cfg.contains("channels") ? as_index_list(cfg.at("channels"), "channels")
                               : std::vector<Index>{1, 2, 3, 4, 5, 6, 8, 16};
  const double sigma1 = get_or<double>(cfg, "sigma_inclusion", 10.0);
  const double sigma0 = get_or<double>(cfg, "sigma_background", 1.0);
  const NoiseConfig noise = noise_config(cfg, NoiseKind::LowFreq);
  const Index data_refine = get_or<Index>(cfg, "data_refine", 1);
  const Index k0 = get_or<Index>(cfg, "k0", 32);
  const Index refine_level = get_or<Index>(cfg, "refine_level", 2);
  const Index grid_n = get_or<Index>(cfg, "grid_n", 64);

  const auto stack = build_stack(n, k0, refine_level);
  const BackgroundDtn dtn(*stack.space, *stack.boundary, {1e-12, 0, false});
  const EitGenerator generator(stack.mesh, *stack.boundary, data_refine, channels);

  json manifest;
  manifest["mesh_n"] = n;
  manifest["samples"] = samples;
  manifest["n_circles"] = n_circles;
  manifest["channels"] = channels;
  manifest["sigma_inclusion"] = sigma1;
  manifest["sigma_background"] = sigma0;
  manifest["noise"] = {{"kind", noise.kind == NoiseKind::None
                                    ? "none"
                                    : (noise.kind == NoiseKind::Gaussian ? "gaussian" : "lowfreq")},
                       {"delta", noise.delta}};
  manifest["data_refine"] = data_refine;
  manifest["k0"] = k0;
  manifest["refine_level"] = refine_level;
  manifest["grid_n"] = grid_n;
  manifest["seed"] = common.seed;
  json sample_meta = json::array();
  std::vector<json> metas(static_cast<std::size_t>(samples));

  parallel_for(samples, common.threads, [&](Index s) {
    Rng stream = Rng::split(common.seed, static_cast<std::uint64_t>(s));
    const std::uint64_t sample_seed = stream.next_u64();
    auto sample = generator.generate(sample_seed, n_circles, sigma1, sigma0);
    const CauchyData noisy =
        add_noise(sample.data, noise.delta, noise.kind, stream.next_u64(), stack.basis.get());
    const auto xi = compute_xi(noisy, dtn, *stack.boundary);

    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "sample_%04lld", static_cast<long long>(s));
    const std::string base = joined(common.out_dir, prefix);
    write_tensor_file(base + "_gN.gft", noisy.g_neumann);
    write_tensor_file(base + "_gD.gft", noisy.g_dirichlet);
    write_tensor_file(base + "_xi.gft", xi.values);
    const auto sigma = conductivity_from_inclusions(stack.mesh, sample.inclusions, sigma1, sigma0);
    write_tensor_file(base + "_sigma.gft",
                      DenseTensor({static_cast<Index>(sigma.cell_sigma.size())},
                                  std::vector<double>(sigma.cell_sigma.begin(),
                                                      sigma.cell_sigma.end())));
    write_tensor_file(base + "_truth.gft", characteristic_image(sample.inclusions, grid_n));

    json meta;
    meta["index"] = s;
    meta["seed"] = sample_seed;
    json circles = json::array();
    for (const auto& c : sample.inclusions.circles)
      circles.push_back({{"cx", c.cx}, {"cy", c.cy}, {"r", c.r}});
    meta["circles"] = circles;
    metas[static_cast<std::size_t>(s)] = std::move(meta);
  });

  for (auto& m : metas) sample_meta.push_back(std::move(m));
  manifest["sample_meta"] = std::move(sample_meta);
  write_json_file(joined(common.out_dir, "manifest.json"), manifest);
  return kExitOk;
}

// -- recover-gamma -------------------------------------------------------------

DenseTensor shared_xi(const BoundarySpace& boundary, const std::vector<Index>& labels) {
  const auto currents = standard_currents(boundary, labels);
  const Index nb = boundary.n_bdof();
  DenseTensor xi({1, nb});
  for (Index l = 0; l < currents.extent(0); ++l)
    for (Index i = 0; i < nb; ++i) xi[i] += currents[l * nb + i];
  std::span<double> row(xi.data().data(), static_cast<std::size_t>(nb));
  boundary.project_mean_zero(row);
  return xi;
}

int cmd_recover_gamma(const json& cfg) {
  check_keys(cfg,
             {"seed", "threads", "out_dir", "mesh_n", "k0", "refine_level", "xi_mode",
              "xi_channels", "gamma_true", "gamma_init", "subdomain", "optimizer", "noise"},
             "recover-gamma");
  const Common common = common_config(cfg);
  const Index n = get_or<Index>(cfg, "mesh_n", 64);
  const Index k0 = get_or<Index>(cfg, "k0", 32);
  const Index refine_level = get_or<Index>(cfg, "refine_level", 2);
  const auto gamma_true =
      cfg.contains("gamma_true") ? as_double_list(cfg.at("gamma_true"), "gamma_true")
                                 : std::vector<double>{0.75};
  auto gamma_init = cfg.contains("gamma_init")
                        ? as_double_list(cfg.at("gamma_init"), "gamma_init")
                        : std::vector<double>(gamma_true.size(), 0.0);
  if (gamma_init.size() != gamma_true.size())
    throw ConfigError("gamma_init and gamma_true must have equal length");
  const Index l_count = static_cast<Index>(gamma_true.size());
  const std::string xi_mode = get_or<std::string>(cfg, "xi_mode", "shared");
  const auto subdomain = get_or<std::vector<double>>(cfg, "subdomain", {-0.5, 0.5, -0.5, 0.5});
  if (subdomain.size() != 4) throw ConfigError("subdomain must be [xlo, xhi, ylo, yhi]");
  const AdamOptions adam = optimizer_config(cfg);
  NoiseConfig noise;
  if (cfg.contains("noise")) {
    check_keys(cfg.at("noise"), {"delta"}, "noise");
    noise.delta = get_or<double>(cfg.at("noise"), "delta", 0.0);
  }

  const auto stack = build_stack(n, k0, refine_level);

  DenseTensor xi;
  if (xi_mode == "shared") {
    xi = shared_xi(*stack.boundary, {1, 2, 3, 4, 5, 6, 8, 16});
  } else if (xi_mode == "per_channel") {
    auto labels = cfg.contains("xi_channels") ? as_index_list(cfg.at("xi_channels"), "xi_channels")
                                              : std::vector<Index>{};
    if (labels.empty())
      for (Index l = 1; l <= l_count; ++l) labels.push_back(l);
    if (static_cast<Index>(labels.size()) != l_count)
      throw ConfigError("xi_channels must list one current per gamma component");
    xi = standard_currents(*stack.boundary, labels);
  } else {
    throw ConfigError("xi_mode must be shared or per_channel");
  }

  const FeatureOperator op(*stack.space, *stack.boundary, *stack.basis, xi, l_count);

  // Self-consistent target, optionally perturbed by multiplicative noise.
  const DenseTensor phi_true = op.forward(gamma_true);
  std::vector<double> target(static_cast<std::size_t>(stack.space->ndof()), 0.0);
  for (Index l = 0; l < l_count; ++l)
    for (Index i = 0; i < stack.space->ndof(); ++i)
      target[static_cast<std::size_t>(i)] += phi_true[l * stack.space->ndof() + i];
  if (noise.delta > 0.0) {
    Rng rng = Rng::split(common.seed, 0xD1CEull);
    multiplicative_noise(target, noise.delta, rng);
  }

  GammaRecoveryProblem problem;
  problem.op = &op;
  problem.phi_target = std::move(target);
  problem.subdomain_mass =
      assemble_mass_subdomain(*stack.space,
                              [&](std::span<const double> c) {
                                return c[0] > subdomain[0] && c[0] < subdomain[1] &&
                                       c[1] > subdomain[2] && c[1] < subdomain[3];
                              })
          .matrix;
  problem.optimizer = adam;
  problem.true_gamma = gamma_true;

  const double t0 = now_seconds();
  const RecoveryResult result = recover_gamma(problem, gamma_init);
  const double elapsed = now_seconds() - t0;

  CsvWriter traj(joined(common.out_dir, "trajectory.csv"));
  {
    std::vector<std::string> head = {"iteration"};
    for (Index l = 0; l < l_count; ++l) head.push_back("gamma_" + std::to_string(l));
    head.push_back("loss");
    traj.header(head);
  }
  for (const auto& point : result.trajectory) {
    std::vector<double> row = {static_cast<double>(point.iteration)};
    row.insert(row.end(), point.gammas.begin(), point.gammas.end());
    row.push_back(point.loss);
    traj.row(row);
  }

  double worst_abs = 0.0;
  for (Index l = 0; l < l_count; ++l)
    worst_abs = std::max(worst_abs, std::abs(result.gammas[static_cast<std::size_t>(l)] -
                                             gamma_true[static_cast<std::size_t>(l)]));

  json summary;
  summary["gamma_true"] = gamma_true;
  summary["gamma_initial"] = gamma_init;
  summary["gamma_final"] = result.gammas;
  summary["loss"] = result.loss;
  summary["iterations"] = result.trajectory.back().iteration;
  summary["converged"] = result.converged;
  summary["max_abs_error"] = worst_abs;
  summary["noise_delta"] = noise.delta;
  summary["xi_mode"] = xi_mode;
  write_json_file(joined(common.out_dir, "recover_summary.json"), summary);

  json timing;
  timing["seconds"] = elapsed;
  write_json_file(joined(common.out_dir, "recover_timing.json"), timing);
  return kExitOk;
}

// -- dsm ------------------------------------------------------------------------

int cmd_dsm(const json& cfg) {
  check_keys(cfg,
             {"seed", "threads", "out_dir", "mesh_n", "grid_n", "k0", "refine_level", "channels",
              "n_circles", "gammas", "sigma_inclusion", "sigma_background", "noise", "data_refine"},
             "dsm");
  const Common common = common_config(cfg);
  const Index n = get_or<Index>(cfg, "mesh_n", 64);
  const Index grid_n = get_or<Index>(cfg, "grid_n", 64);
  const Index k0 = get_or<Index>(cfg, "k0", 32);
  const Index refine_level = get_or<Index>(cfg, "refine_level", 2);
  const auto channels =
      cfg.contains("channels") ? as_index_list(cfg.at("channels"), "channels")
                               : std::vector<Index>{1, 2, 3, 4, 5, 6, 8, 16};
  const Index n_circles = get_or<Index>(cfg, "n_circles", 1);
  const auto gammas = cfg.contains("gammas") ? as_double_list(cfg.at("gammas"), "gammas")
                                             : std::vector<double>{0.75};
  const double sigma1 = get_or<double>(cfg, "sigma_inclusion", 10.0);
  const double sigma0 = get_or<double>(cfg, "sigma_background", 1.0);
  const NoiseConfig noise = noise_config(cfg, NoiseKind::LowFreq);
  const Index data_refine = get_or<Index>(cfg, "data_refine", 1);

  const auto stack = build_stack(n, k0, refine_level);
  const BackgroundDtn dtn(*stack.space, *stack.boundary, {1e-12, 0, false});
  const EitGenerator generator(stack.mesh, *stack.boundary, data_refine, channels);

  Rng stream = Rng::split(common.seed, 0);
  const auto sample = generator.generate(stream.next_u64(), n_circles, sigma1, sigma0);
  const CauchyData noisy =
      add_noise(sample.data, noise.delta, noise.kind, stream.next_u64(), stack.basis.get());
  const auto xi = compute_xi(noisy, dtn, *stack.boundary);

  const ProbeCache cache(*stack.space, *stack.boundary, *stack.basis, grid_n);
  const DenseTensor truth = characteristic_image(sample.inclusions, grid_n);
  {
    IndexImage truth_img;
    truth_img.grid_n = grid_n;
    truth_img.values.assign(truth.data().begin(), truth.data().end());
    export_image_csv(truth_img, joined(common.out_dir, "truth.csv"));
  }

  json summary;
  summary["channels"] = channels;
  summary["gammas"] = gammas;
  json per_gamma = json::array();

  const Index l_count = static_cast<Index>(channels.size());
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    const double gamma = gammas[gi];
    std::vector<IndexImage> images(static_cast<std::size_t>(l_count));
    parallel_for(l_count, common.threads, [&](Index l) {
      images[static_cast<std::size_t>(l)] = index_image(cache, xi.channel(l), gamma);
    });
    for (Index l = 0; l < l_count; ++l) {
      char name[64];
      std::snprintf(name, sizeof name, "index_g%zu_ch%lld.csv", gi,
                    static_cast<long long>(channels[static_cast<std::size_t>(l)]));
      export_image_csv(images[static_cast<std::size_t>(l)], joined(common.out_dir, name));
    }
    const IndexImage fused = fuse_images(images);
    char base[64];
    std::snprintf(base, sizeof base, "fused_g%zu", gi);
    export_image_csv(fused, joined(common.out_dir, std::string(base) + ".csv"));
    export_image_pgm(fused, joined(common.out_dir, std::string(base) + ".pgm"));

    // Localization diagnostics against the truth image.
    Index best = 0;
    for (Index i = 1; i < grid_n * grid_n; ++i)
      if (fused.values[static_cast<std::size_t>(i)] > fused.values[static_cast<std::size_t>(best)])
        best = i;
    double mean_inside = 0.0, mean_outside = 0.0;
    Index n_inside = 0, n_outside = 0;
    for (Index i = 0; i < grid_n * grid_n; ++i) {
      if (truth[i] > 0.5) {
        mean_inside += fused.values[static_cast<std::size_t>(i)];
        ++n_inside;
      } else {
        mean_outside += fused.values[static_cast<std::size_t>(i)];
        ++n_outside;
      }
    }
    if (n_inside > 0) mean_inside /= static_cast<double>(n_inside);
    if (n_outside > 0) mean_outside /= static_cast<double>(n_outside);

    json g;
    g["gamma"] = gamma;
    g["argmax_index"] = best;
    g["argmax_x"] = cache.grid_points()[best * 2 + 0];
    g["argmax_y"] = cache.grid_points()[best * 2 + 1];
    g["argmax_inside_truth"] = truth[best] > 0.5;
    g["mean_inside"] = mean_inside;
    g["mean_outside"] = mean_outside;
    g["fused_max"] = fused.vmax;
    per_gamma.push_back(g);
  }
  summary["per_gamma"] = per_gamma;
  summary["factorizations"] = cache.factorization_count();
  json circles = json::array();
  for (const auto& c : sample.inclusions.circles)
    circles.push_back({{"cx", c.cx}, {"cy", c.cy}, {"r", c.r}});
  summary["circles"] = circles;
  write_json_file(joined(common.out_dir, "dsm_summary.json"), summary);
  return kExitOk;
}

// -- grad-check -------------------------------------------------------------------

int cmd_grad_check(const json& cfg) {
  check_keys(cfg,
             {"seed", "threads", "out_dir", "mesh_n", "channels", "draws", "fd_step", "threshold",
              "k0", "refine_level", "corrupt_gradient"},
             "grad-check");
  const Common common = common_config(cfg);
  const Index n = get_or<Index>(cfg, "mesh_n", 32);
  const Index l_count = get_or<Index>(cfg, "channels", 3);
  const Index draws = get_or<Index>(cfg, "draws", 20);
  const double step = get_or<double>(cfg, "fd_step", 1e-5);
  const double threshold = get_or<double>(cfg, "threshold", 1e-5);
  const Index k0 = get_or<Index>(cfg, "k0", 32);
  const Index refine_level = get_or<Index>(cfg, "refine_level", 2);
  const bool corrupt = get_or<bool>(cfg, "corrupt_gradient", false);

  const auto stack = build_stack(n, k0, refine_level);
  const auto subdomain = assemble_mass_subdomain(*stack.space, [](std::span<const double> c) {
    return std::abs(c[0]) < 0.5 && std::abs(c[1]) < 0.5;
  });

  CsvWriter report(joined(common.out_dir, "grad_check.csv"));
  report.header({"draw", "components", "max_rel_error"});

  double worst = 0.0;
  for (Index draw = 0; draw < draws; ++draw) {
    Rng rng = Rng::split(common.seed, static_cast<std::uint64_t>(draw) + 1);
    const Index nb = stack.boundary->n_bdof();
    DenseTensor xi({l_count, nb});
    for (Index i = 0; i < xi.size(); ++i) xi[i] = rng.uniform(-1.0, 1.0);
    for (Index l = 0; l < l_count; ++l)
      stack.boundary->project_mean_zero(
          {xi.data().data() + l * nb, static_cast<std::size_t>(nb)});

    std::vector<double> gammas(static_cast<std::size_t>(l_count));
    for (double& g : gammas) g = rng.uniform(0.1, 0.9);

    const FeatureOperator op(*stack.space, *stack.boundary, *stack.basis, xi, l_count);

    // A self-consistent target at a different Gamma keeps the loss generic.
    std::vector<double> gamma_target(static_cast<std::size_t>(l_count));
    for (double& g : gamma_target) g = rng.uniform(0.1, 0.9);
    const DenseTensor phi_t = op.forward(gamma_target);
    std::vector<double> target(static_cast<std::size_t>(stack.space->ndof()), 0.0);
    for (Index l = 0; l < l_count; ++l)
      for (Index i = 0; i < stack.space->ndof(); ++i)
        target[static_cast<std::size_t>(i)] += phi_t[l * stack.space->ndof() + i];

    GammaRecoveryProblem problem;
    problem.op = &op;
    problem.phi_target = std::move(target);
    problem.subdomain_mass = subdomain.matrix;

    double err;
    if (!corrupt) {
      err = fd_gradient_check(problem, gammas, step);
    } else {
      // Negative control: bias the adjoint gradient and recompute the error.
      auto lg = loss_and_grad(problem, gammas);
      for (double& g : lg.gradient) g += 1e-3 * std::max(1.0, std::abs(g));
      std::vector<double> probe = gammas;
      err = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i) {
        probe[i] = gammas[i] + step;
        const double up = loss_and_grad(problem, probe).loss;
        probe[i] = gammas[i] - step;
        const double down = loss_and_grad(problem, probe).loss;
        probe[i] = gammas[i];
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(fd), std::abs(lg.gradient[i]), 1e-12});
        err = std::max(err, std::abs(fd - lg.gradient[i]) / denom);
      }
    }
    worst = std::max(worst, err);
    report.row({static_cast<double>(draw), static_cast<double>(l_count), err});
  }

  json summary;
  summary["draws"] = draws;
  summary["threshold"] = threshold;
  summary["max_rel_error"] = worst;
  summary["pass"] = worst <= threshold;
  write_json_file(joined(common.out_dir, "grad_check_summary.json"), summary);
  return worst <= threshold ? kExitOk : kExitCheckFailed;
}

}  // namespace

std::vector<std::string> command_names() {
  return {"bench-assembly", "bench-batched", "eigenbasis", "gen-data",
          "recover-gamma", "dsm",           "grad-check"};
}

int run_command(const std::string& command, nlohmann::json config) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  static const std::map<std::string, int (*)(const json&)> registry = {
      {"bench-assembly", &cmd_bench_assembly},
      {"bench-batched", &cmd_bench_batched},
      {"eigenbasis", &cmd_eigenbasis},
      {"gen-data", &cmd_gen_data},
      {"recover-gamma", &cmd_recover_gamma},
      {"dsm", &cmd_dsm},
      {"grad-check", &cmd_grad_check},
  };
  const auto it = registry.find(command);
  if (it == registry.end()) throw ConfigError("unknown command: " + command);
  return it->second(config);
}

}  // namespace gfem
