// roughfilter command-line runner.
//
//   roughfilter <command> [--config PATH] [--seed N] [--out DIR] [--threads N]
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include <CLI11.hpp>

#include <Eigen/Core>
#include <boost/version.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "roughfilter/config.hpp"
#include "roughfilter/experiments.hpp"

#ifndef ROUGHFILTER_VERSION
#define ROUGHFILTER_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace roughfilter;

namespace {

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Csv {
 public:
  Csv(const std::string& header, int precision) {
    os_ << std::setprecision(precision);
    os_ << header << "\n";
  }
  template <class... Ts>
  void row(const Ts&... v) {
    bool first = true;
    ((os_ << (first ? "" : ","), field(v), first = false), ...);
    os_ << "\n";
  }
  std::string str() const { return os_.str(); }

 private:
  template <class T>
  void field(const T& v) {
    if constexpr (std::is_convertible_v<T, std::string_view>) {
      const std::string_view sv(v);
      if (sv.find_first_of(",\"\n") == std::string_view::npos) {
        os_ << sv;
        return;
      }
      os_ << '"';
      for (char ch : sv) os_ << (ch == '"' ? "\"\"" : std::string(1, ch));
      os_ << '"';
    } else {
      os_ << v;
    }
  }

  std::ostringstream os_;
};

/// Single writer for every artifact of a run; records sizes and checksums for the manifest.
class Collector {
 public:
  explicit Collector(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << content;
    files_.push_back({name, content.size(), fnv1a(content)});
  }

  void manifest(const ExperimentConfig& c, const std::string& status, const std::string& message) {
    std::ostringstream os;
    os << "[run]\n"
       << "tool = roughfilter " << ROUGHFILTER_VERSION << "\n"
       << "command = " << to_string(c.run.command) << "\n"
       << "seed = " << c.run.seed << "\n"
       << "config_fnv1a = " << hex64(fnv1a(c.canonical())) << "\n"
       << "eigen = " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "\n"
       << "boost = " << BOOST_VERSION / 100000 << "." << BOOST_VERSION / 100 % 1000 << "." << BOOST_VERSION % 100 << "\n"
       << "compiler = " << compiler() << "\n"
       << "status = " << status << "\n";
    if (!message.empty()) os << "message = " << message << "\n";
    os << "[files]\n";
    for (const auto& f : files_) os << f.name << " = " << f.bytes << " " << hex64(f.hash) << "\n";
    std::ofstream out(dir_ / "manifest.txt", std::ios::binary);
    out << os.str();
  }

 private:
  static std::string compiler() {
#if defined(__clang__)
    return "clang " __clang_version__;
#elif defined(__GNUC__)
    return "gcc " __VERSION__;
#else
    return "unknown";
#endif
  }

  struct Entry {
    std::string name;
    std::size_t bytes;
    std::uint64_t hash;
  };
  fs::path dir_;
  std::vector<Entry> files_;
};

struct Run {
  ExperimentConfig cfg;
  Collector& out;
  int threads;
  int prec() const { return cfg.output.precision; }
  const Scenario& s() const { return cfg.scenario; }
};

std::string path_header(const Scenario& s) {
  std::string h = "t";
  for (std::size_t i = 0; i < s.d_X; ++i) h += ",X_" + std::to_string(i + 1);
  for (std::size_t j = 0; j < s.d_Y; ++j) h += ",Y_" + std::to_string(j + 1);
  for (std::size_t j = 0; j < s.d_Y; ++j) h += ",W_" + std::to_string(j + 1);
  return h;
}

std::string path_csv(const Scenario& s, const TruthPath& p, int prec) {
  std::ostringstream os;
  os << std::setprecision(prec) << path_header(s) << "\n";
  for (std::size_t k = 0; k < p.grid.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    os << p.grid[k];
    for (Eigen::Index i = 0; i < p.X.rows(); ++i) os << "," << p.X(i, c);
    for (Eigen::Index j = 0; j < p.Y.rows(); ++j) os << "," << p.Y(j, c);
    for (Eigen::Index j = 0; j < p.W.rows(); ++j) os << "," << p.W(j, c);
    os << "\n";
  }
  return os.str();
}

std::string warnings_text(const std::vector<std::string>& w) {
  std::string s;
  for (const auto& line : w) s += line + "\n";
  return s;
}

// ---------------------------------------------------------------- commands

void cmd_sample(Run& r) {
  const auto& s = r.s();
  Csv m("quantity,empirical,analytic,stderr,z", r.prec());
  for (const auto& row : sampling_moments(s.kernel, s.grid_n, r.cfg.run.n_paths, r.cfg.run.seed, s.method, r.threads))
    m.row(row.name, row.empirical, row.analytic, row.stderr_, (row.empirical - row.analytic) / row.stderr_);
  r.out.write("sample_moments.csv", m.str());

  auto rep = condition_report(s.kernel, s.outer_grid(), r.cfg.p_exponent());
  Csv c("item,value,status,detail", r.prec());
  for (const auto& it : rep.items) c.row(it.name, it.value, it.status == DiagnosticStatus::Pass ? "pass" : "warn", it.detail);
  r.out.write("sample_conditions.csv", c.str());

  JointSampler sampler(s.kernel, s.outer_grid(), s.method);
  Rng rng = make_rng(r.cfg.run.seed, 0);
  auto smp = sampler.draw(s.d_B, s.d_B, rng, derive_seed(r.cfg.run.seed, 0));
  std::string h = "t";
  for (std::size_t i = 0; i < s.d_B; ++i) h += ",B_" + std::to_string(i + 1);
  for (std::size_t i = 0; i < s.d_B; ++i) h += ",W_" + std::to_string(i + 1);
  std::ostringstream os;
  os << std::setprecision(r.prec()) << h << "\n";
  for (std::size_t k = 0; k < smp.grid.size(); ++k) {
    os << smp.grid[k];
    for (Eigen::Index i = 0; i < smp.B.rows(); ++i) os << "," << smp.B(i, static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < smp.W.rows(); ++i) os << "," << smp.W(i, static_cast<Eigen::Index>(k));
    os << "\n";
  }
  r.out.write("sample_path.csv", os.str());
}

void cmd_lift(Run& r) {
  const auto& s = r.s();
  const double p = r.cfg.p_exponent();
  const int level = s.level > 0 ? s.level : level_for_p(p);
  const std::size_t dims = s.d_B + s.d_Y;
  auto smp = sample_joint(s.kernel, s.outer_grid(), dims, 0, 1, r.cfg.run.seed, s.method, 1).front();
  auto lift = lift_segmentwise(as_sampled(smp.grid, smp.B), level);
  double gl = 0.0;
  for (const auto& g : lift.increments()) gl = std::max(gl, grouplike_residual(g));
  Csv rep("metric,value", r.prec());
  rep.row("dimension", dims);
  rep.row("level", level);
  rep.row("p", p);
  rep.row("chen_residual", chen_residual(lift, 64, r.cfg.run.seed));
  rep.row("grouplike_residual", gl);
  rep.row("p_variation", lift_p_variation(lift, p));
  r.out.write("lift_report.csv", rep.str());
  if (r.cfg.output.trace) {
    std::ostringstream os;
    write_lift_csv(os, lift);
    r.out.write("lift.csv", os.str());
  }
  const int n_max = static_cast<int>(std::log2(static_cast<double>(s.grid_n)) + 0.5);
  const int n_min = std::max(1, n_max - static_cast<int>(r.cfg.run.refine_levels));
  if (n_min < n_max) {
    Csv d("level_coarse,level_fine,mean_distance,stderr,max_distance", r.prec());
    for (const auto& row : dyadic_convergence_study(s.kernel, dims, n_min, n_max, p, r.cfg.run.n_paths, r.cfg.run.seed, r.threads))
      d.row(row.level_coarse, row.level_coarse + 1, row.mean, row.stderr_, row.max);
    r.out.write("lift_dyadic.csv", d.str());
  }
}

void cmd_rde(Run& r) {
  const auto& s = r.s();
  auto truth = simulate_truth(s, r.cfg.run.seed);
  if (r.cfg.output.trace) r.out.write("rde_truth.csv", path_csv(s, truth, r.prec()));

  // (X, Y) under the reference measure driven by the geometric lift of (B^X, Y)
  auto p = simulate_truth(s, r.cfg.run.seed, Measure::Reference);
  Eigen::MatrixXd drv(static_cast<Eigen::Index>(s.d_B + s.d_Y), p.B.cols());
  drv << p.B, p.Y;
  const auto sigma = augment_with_identity(s.sigma_field(), s.d_Y);
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.d_X + s.d_Y));
  z0.head(static_cast<Eigen::Index>(s.d_X)) = p.X.col(0);
  const RdeOptions opt = s.rde_options();
  const int level = s.lift_level();
  const std::size_t N = p.grid.size() - 1, L = r.cfg.run.refine_levels;
  if (N % (std::size_t{1} << L) != 0) throw ConfigError("[run] refine_levels: fine grid has too few intervals");
  std::vector<ControlledSolution> sols;
  for (std::size_t l = 0; l <= L; ++l) {
    const std::size_t stride = std::size_t{1} << (L - l);
    std::vector<double> g;
    std::vector<Eigen::VectorXd> v;
    for (std::size_t k = 0; k <= N; k += stride) {
      g.push_back(p.grid[k]);
      v.push_back(drv.col(static_cast<Eigen::Index>(k)));
    }
    sols.push_back(solve_rde(lift_segmentwise(SampledFunction1D(g, v), level), sigma, z0, opt));
  }
  Csv ref("intervals,sup_distance_to_finest", r.prec());
  const auto& fine = sols.back();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& z = sols[l];
    const std::size_t stride = std::size_t{1} << (L - l);
    double d = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) d = std::max(d, (z.at(k) - fine.at(k * stride)).cwiseAbs().maxCoeff());
    ref.row(z.size() - 1, d);
  }
  r.out.write("rde_refinement.csv", ref.str());
  if (r.cfg.output.trace) {
    auto lift = lift_segmentwise(as_sampled(p.grid, drv), level);
    auto J = solve_jacobian(lift, sigma, fine, opt);
    std::ostringstream os;
    os << std::setprecision(r.prec());
    write_solution_csv(os, fine, &J);
    r.out.write("rde_solution.csv", os.str());
  }
}

void cmd_filter(Run& r) {
  const auto& s = r.s();
  const auto t_eval = r.cfg.eval_times();
  auto truth = simulate_truth(s, r.cfg.run.seed);
  if (r.cfg.output.trace) r.out.write("truth.csv", path_csv(s, truth, r.prec()));
  FilterOptions fo;
  fo.threads = r.threads;
  std::vector<std::string> warnings;
  auto fs = filter_samples(s, observed(truth), r.cfg.run.n_mc, derive_seed(r.cfg.run.seed, 1), t_eval, fo);
  warnings.insert(warnings.end(), fs.warnings.begin(), fs.warnings.end());
  Csv f("t,value,stderr,n,ess,kind", r.prec());
  for (const auto& e : unnormalized_estimates(fs, s.phi, &warnings)) f.row(e.t, e.value, e.stderr_, e.n_samples, e.ess, to_string(e.kind));
  for (const auto& e : normalized_estimates(fs, s.phi, &warnings)) f.row(e.t, e.value, e.stderr_, e.n_samples, e.ess, to_string(e.kind));
  r.out.write("filter.csv", f.str());

  if (r.cfg.output.density) {
    Csv d("t,x,rho", r.prec());
    for (std::size_t k = 0; k < t_eval.size(); ++k) {
      const auto col = fs.X[k].col(0);
      const double lo = col.minCoeff(), hi = col.maxCoeff(), pad = 0.25 * (hi - lo) + 1e-3;
      const auto xg = uniform_space_grid(lo - pad, hi + pad, 201);
      std::vector<double> rho;
      try {
        rho = filter_density(fs, k, 0, xg);
      } catch (const std::invalid_argument& e) {
        warnings.push_back(std::string("density skipped at t = ") + std::to_string(t_eval[k]) + ": " + e.what());
        continue;
      }
      for (std::size_t i = 0; i < xg.size(); ++i) d.row(t_eval[k], xg[i], rho[i]);
    }
    r.out.write("density.csv", d.str());
  }

  if (is_linear_gaussian(s)) {
    auto kb = kalman_bucy(truth.grid, truth.Y.row(0), s.x0.mean, s.x0.sd * s.x0.sd, s.sigma.offset + s.sigma.scale, s.b.scale * s.b.x_coef);
    Csv k("t,mean,variance", r.prec());
    for (std::size_t i = 0; i < kb.grid.size(); ++i) k.row(kb.grid[i], kb.mean[i], kb.var[i]);
    r.out.write("kalman_bucy.csv", k.str());
  }

  if (s.b.is_zero()) {
    auto rows = no_information_check(s, r.cfg.run.n_mc, t_eval, r.cfg.run.seed, r.threads);
    Csv c("t,filter,filter_stderr,prior,prior_stderr,z", r.prec());
    bool ok = true;
    for (const auto& row : rows) {
      c.row(row.t, row.filter, row.filter_stderr, row.prior, row.prior_stderr, row.z);
      ok = ok && row.z <= 3.0;
    }
    r.out.write("prior_check.csv", c.str());
    if (!ok) throw NumericalFailure("b = 0 check failed: normalized filter differs from the prior Monte Carlo mean by more than 3 standard errors");
  }
  if (!warnings.empty()) r.out.write("warnings.txt", warnings_text(warnings));
}

void cmd_trapezoid(Run& r) {
  const auto& s = r.s();
  TruthSimulator sim(s);
  const std::size_t n = r.cfg.run.n_paths, D = s.d_B + 2 * s.d_Y;
  const auto form = registry_field(s.b, s.d_X, s.d_Y, 1, D, s.b_entries(0, s.d_B + s.d_Y, true), "b-hat");
  std::vector<TrapezoidResult> res(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        auto p = sim.simulate(derive_seed(r.cfg.run.seed, i), Measure::Reference);
        auto lift = lift_joint_hybrid(p.grid, p.B, p.Y, p.W, s.lift_level(), s.inner_refine);
        auto z = solve_decoupled(s, lift, p.X.col(0));
        res[i] = trapezoid_check(compose_one_form(form, z), lift, s.kernel, s.d_B, s.d_Y);
      },
      r.threads);
  Csv c("path,trapezoid_sum,rough_integral,young_correction,defect", r.prec());
  std::vector<double> d(n), sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.row(i, res[i].tr_sum, res[i].rough_value, res[i].young_correction, res[i].defect);
    d[i] = res[i].defect;
    sq[i] = d[i] * d[i];
  }
  r.out.write("trapezoid.csv", c.str());
  auto ms = mean_stderr(d);
  Csv sum("metric,value", r.prec());
  sum.row("hurst", s.kernel.hurst());
  sum.row("mean_defect", ms.mean);
  sum.row("stderr", ms.stderr_);
  sum.row("z", ms.stderr_ > 0 ? ms.mean / ms.stderr_ : 0.0);
  sum.row("rms_defect", std::sqrt(pairwise_sum(sq) / static_cast<double>(n)));
  r.out.write("trapezoid_summary.csv", sum.str());
  if (!s.kernel.is_brownian())
    r.out.write("warnings.txt", "the closed-form correction is exact only at H = 1/2; the defect at other H is diagnostic\n");
}

void cmd_zakai(Run& r) {
  const auto& s = r.s();
  const auto t_eval = r.cfg.eval_times();
  auto p = simulate_truth(s, r.cfg.run.seed);
  const auto obs = observed(p);
  const auto xg = auto_space_grid(s, r.cfg.run.space_points);
  ZakaiOptions o;
  o.kappa = r.cfg.run.kappa;
  auto g = solve_zakai(s, obs, xg, o);
  std::vector<std::string> warnings = g.warnings;
  if (r.cfg.output.density) {
    Csv d("t,x,rho", r.prec());
    for (double t : t_eval) {
      const auto sl = g.slice(g.time_index(t));
      for (std::size_t i = 0; i < xg.size(); ++i) d.row(t, xg[i], sl[i]);
    }
    r.out.write("zakai_density.csv", d.str());
  }
  const bool lg = is_linear_gaussian(s);
  KalmanBucyResult kb;
  if (lg) kb = kalman_bucy(p.grid, p.Y.row(0), s.x0.mean, s.x0.sd * s.x0.sd, s.sigma.offset + s.sigma.scale, s.b.scale * s.b.x_coef);
  Csv sum(lg ? "t,mass,mean,variance,kalman_mean,kalman_variance" : "t,mass,mean,variance", r.prec());
  for (double t : t_eval) {
    if (lg) {
      const auto k = detail::grid_index(kb.grid, t, "zakai");
      sum.row(t, zakai_mass(g, t), zakai_mean(g, t), zakai_variance(g, t), kb.mean[k], kb.var[k]);
    } else {
      sum.row(t, zakai_mass(g, t), zakai_mean(g, t), zakai_variance(g, t));
    }
  }
  r.out.write("zakai_summary.csv", sum.str());
  Csv diag("metric,value", r.prec());
  diag.row("kappa", g.kappa);
  diag.row("clipped_negatives", g.clipped_negatives);
  diag.row("min_relative", g.min_relative);
  diag.row("max_boundary_mass", g.max_boundary_mass);
  diag.row("diffusion_substeps", g.diffusion_substeps);
  r.out.write("zakai_diagnostics.csv", diag.str());

  auto pc = compare_zakai_particle(s, obs, r.cfg.run.n_mc, xg, o.kappa, derive_seed(r.cfg.run.seed, 1), t_eval, r.threads);
  Csv pcsv("t,l1_distance", r.prec());
  for (std::size_t i = 0; i < pc.t.size(); ++i) pcsv.row(pc.t[i], pc.l1[i]);
  r.out.write("zakai_particle.csv", pcsv.str());

  Csv conv("level,intervals,sup_distance", r.prec());
  for (const auto& row : rough_viscosity_convergence(s, obs, xg, o.kappa, r.cfg.run.refine_levels)) conv.row(row.level, row.intervals, row.sup_distance);
  r.out.write("zakai_convergence.csv", conv.str());
  if (!warnings.empty()) r.out.write("warnings.txt", warnings_text(warnings));
}

void cmd_calibrate(Run& r) {
  auto cal = calibrate_kappa(r.s(), r.cfg.run.draws, r.cfg.run.seed, r.cfg.run.space_points, r.threads);
  Csv c("draw,kappa,zakai_mean,kalman_mean,rel_error", r.prec());
  for (const auto& row : cal.rows) c.row(row.draw, row.kappa, row.zakai_mean, row.kalman_mean, row.rel_error);
  r.out.write("kappa.csv", c.str());
  Csv s("kappa,reproducible,draws", r.prec());
  s.row(cal.kappa, cal.reproducible ? "true" : "false", r.cfg.run.draws);
  r.out.write("kappa_summary.csv", s.str());
  std::cout << "kappa = " << cal.kappa << (cal.reproducible ? " (identical across draws)" : " (NOT identical across draws)") << "\n";
}

std::vector<Check> selftest_checks(const Run& r) {
  const auto& s = r.s();
  const std::uint64_t seed = r.cfg.run.seed;
  std::vector<Check> out;

  auto alg = algebra_residuals(200, seed);
  out.push_back(check_le("algebra", "associativity", alg.associativity, 1e-12));
  out.push_back(check_le("algebra", "chen", alg.chen, 1e-12));
  out.push_back(check_le("algebra", "grouplike", alg.grouplike, 1e-12));
  out.push_back(check_le("algebra", "inverse", alg.inverse, 1e-12));

  for (const auto& row : sampling_moments(s.kernel, 32, 2000, seed, s.method, r.threads))
    out.push_back(check_le("sampling", row.name + "_|z|", std::abs(row.empirical - row.analytic) / row.stderr_, 4.0));
  out.push_back(check_le("sampling", "kernel_collapse", kernel_collapse_error(16), 1e-8));

  {
    auto p = simulate_truth(s, seed, Measure::Reference);
    auto lift = lift_joint_hybrid(p.grid, p.B, p.Y, p.W, s.lift_level(), s.inner_refine);
    double gl = 0.0;
    for (const auto& g : lift.increments()) gl = std::max(gl, grouplike_residual(g));
    out.push_back(check_le("lift", "hybrid_chen", chen_residual(lift, 64, seed), 1e-12));
    out.push_back(check_le("lift", "hybrid_grouplike", gl, 1e-12));
  }

  auto rde = rde_checks(seed);
  out.push_back(check_le("rde", "linear_slope_deficit", 1.8 - rde.matrix_slope, 0.0, "slope " + std::to_string(rde.matrix_slope)));
  out.push_back(check_le("rde", "flow_gap", rde.flow_gap, 1e-9));
  out.push_back(check_le("rde", "brownian_reduction_gap", rde.brownian_reduction_gap, 1e-9));

  auto ws = weight_study(s, 2000, 4, s.grid_n * s.inner_refine, {std::max<std::size_t>(1, s.grid_n / 2), s.grid_n}, seed, r.threads);
  out.push_back(check_le("weights", "E[Lambda_T]_|z|", std::abs(ws.lambda.mean - 1.0) / ws.lambda.stderr_, 4.0));
  out.push_back(check_le("weights", "E[exp Xi_T]_|z|", std::abs(ws.exp_xi.mean - 1.0) / ws.exp_xi.stderr_, 4.0));

  auto tr = trapezoid_study(300, 256, 8, 1, seed, r.threads);
  out.push_back(check_le("trapezoid", "mean_defect_|z|", std::abs(tr.defect.mean) / tr.defect.stderr_, 3.0));

  {
    Scenario z = s;
    z.b = constant_spec(0.0);
    for (const auto& row : no_information_check(z, 1000, r.cfg.eval_times(), seed, r.threads))
      out.push_back(check_le("filter", "zero_drift_equals_prior_|z| t=" + std::to_string(row.t), row.z, 3.0));
    auto p = simulate_truth(s, seed);
    FilterOptions one, two;
    one.threads = 1;
    two.threads = 2;
    auto a = normalized_filter(s, observed(p), 200, seed, {s.T}, one);
    auto b = normalized_filter(s, observed(p), 200, seed, {s.T}, two);
    out.push_back(check_true("filter", "thread_count_invariance", a[0].value == b[0].value && a[0].stderr_ == b[0].stderr_));
  }

  {
    auto lg = linear_gaussian_scenario();
    auto kb = kalman_study(lg, 2, 2000, seed, r.threads);
    out.push_back(check_le("filter", "kalman_bucy_relative_error", kb.mean_rel_error, 0.05));

    auto heat = linear_gaussian_scenario(0.5, 1.0, 0.0, 0.5);
    heat.b = constant_spec(0.0);
    auto g = solve_zakai(heat, observed(simulate_truth(heat, seed)), auto_space_grid(heat, 256), {});
    double mass_err = 0.0;
    for (double t : g.t_grid) mass_err = std::max(mass_err, std::abs(zakai_mass(g, t) / zakai_mass(g, 0.0) - 1.0));
    out.push_back(check_le("zakai", "zero_drift_mass", mass_err, 1e-6));
    const double growth = zakai_variance(g, heat.T) - zakai_variance(g, 0.0);
    out.push_back(check_le("zakai", "heat_variance_relative_error", std::abs(growth / 0.25 - 1.0), 0.02));
    auto cal = calibrate_kappa(lg, 2, seed, 128, r.threads);
    out.push_back(check_true("zakai", "kappa_calibration_reproducible", cal.reproducible, "kappa " + std::to_string(cal.kappa)));
  }

  auto rb = robustness_study(s, 0.5, 3, 1000, seed, r.threads);
  out.push_back(check_true("robustness", "change_shrinks_with_shift", rb.monotone, "changes " + join_values(rb.change)));
  return out;
}

void cmd_selftest(Run& r) {
  auto checks = selftest_checks(r);
  Csv c("suite,check,value,bound,status,detail", r.prec());
  std::size_t failed = 0;
  for (const auto& k : checks) {
    c.row(k.suite, k.name, k.value, k.bound, k.pass ? "pass" : "fail", k.detail);
    std::cout << (k.pass ? "  ok   " : "  FAIL ") << k.suite << "/" << k.name << " = " << k.value << " (bound " << k.bound << ")\n";
    if (!k.pass) ++failed;
  }
  r.out.write("selftest.csv", c.str());
  if (failed) throw NumericalFailure(std::to_string(failed) + " self-test check(s) failed");
  std::cout << "selftest: all " << checks.size() << " checks passed\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust filtering with rough drivers: sampling, lifts, RDEs, particle filter and Zakai PDE"};
  std::string command, config_path, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("command", command, "sample | lift | rde | filter | trapezoid | zakai | calibrate-kappa | selftest (default: [run] command)");
  app.add_option("--config", config_path, "configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides [run] seed)");
  app.add_option("--out", out_dir, "output directory (overrides [run] output_dir)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (overrides [run] threads and ROUGHFILTER_THREADS)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  ExperimentConfig cfg;
  try {
    cfg = config_path.empty() ? parse_config_string("") : load_config(config_path);
    if (!command.empty()) cfg.run.command = parse_command(command);
    if (*seed_opt) cfg.run.seed = seed;
    if (!out_dir.empty()) cfg.run.out_dir = out_dir;
    if (*threads_opt) {
      if (threads < 1) throw ConfigError("--threads must be positive");
      cfg.run.threads = threads;
    }
  } catch (const ConfigError& e) {
    std::cerr << "roughfilter: " << e.what() << "\n";
    return 1;
  }

  std::unique_ptr<Collector> collector;
  try {
    collector = std::make_unique<Collector>(cfg.run.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "roughfilter: cannot create output directory: " << e.what() << "\n";
    return 1;
  }
  Run run{cfg, *collector, cfg.run.threads};
  int code = 0;
  std::string status = "ok", message;
  try {
    collector->write("config.cfg", cfg.canonical());
    switch (cfg.run.command) {
      case Command::Sample: cmd_sample(run); break;
      case Command::Lift: cmd_lift(run); break;
      case Command::Rde: cmd_rde(run); break;
      case Command::Filter: cmd_filter(run); break;
      case Command::Trapezoid: cmd_trapezoid(run); break;
      case Command::Zakai: cmd_zakai(run); break;
      case Command::CalibrateKappa: cmd_calibrate(run); break;
      case Command::Selftest: cmd_selftest(run); break;
    }
  } catch (const ConfigError& e) {
    code = 1;
    status = "config-error";
    message = e.what();
  } catch (const std::invalid_argument& e) {
    code = 1;
    status = "config-error";
    message = e.what();
  } catch (const RdeBlowup& e) {
    code = 2;
    status = "numerical-failure";
    message = e.what();
  } catch (const std::exception& e) {
    code = 2;
    status = "numerical-failure";
    message = e.what();
  }
  if (code == 2) collector->write("diagnostics.txt", to_string(cfg.run.command) + ": " + message + "\n");
  collector->manifest(cfg, status, message);
  if (code != 0) std::cerr << "roughfilter: " << message << "\n";
  return code;
}
