#pragma once

// Experiment configuration: flat key = value lines grouped in [scenario], [run]
// and [output] sections. Parsing is strict: unknown sections or keys are errors.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "filtering.hpp"

namespace roughfilter {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Command { Sample, Lift, Rde, Filter, Trapezoid, Zakai, CalibrateKappa, Selftest };

inline const std::vector<std::pair<std::string, Command>>& command_names() {
  static const std::vector<std::pair<std::string, Command>> names{
      {"sample", Command::Sample}, {"lift", Command::Lift},           {"rde", Command::Rde},
      {"filter", Command::Filter}, {"trapezoid", Command::Trapezoid}, {"zakai", Command::Zakai},
      {"calibrate-kappa", Command::CalibrateKappa}, {"selftest", Command::Selftest}};
  return names;
}

inline Command parse_command(const std::string& s) {
  for (const auto& [name, c] : command_names())
    if (name == s) return c;
  std::string all;
  for (const auto& [name, c] : command_names()) all += (all.empty() ? "" : ", ") + name;
  throw ConfigError("unknown command '" + s + "' (expected one of: " + all + ")");
}

inline std::string to_string(Command c) {
  for (const auto& [name, cc] : command_names())
    if (cc == c) return name;
  return "?";
}

struct RunConfig {
  Command command = Command::Filter;
  std::uint64_t seed = 1;
  std::size_t n_mc = 1000;
  std::size_t n_paths = 100;
  std::vector<double> t_eval;  ///< empty: {T}
  std::size_t refine_levels = 3;
  double kappa = 0.5;
  std::optional<double> p;  ///< variation exponent; default from H
  double blowup_bound = 1e8;
  std::size_t space_points = 256;
  std::size_t draws = 5;
  int threads = 0;
  std::string out_dir = "out";
};

struct OutputConfig {
  int precision = 17;
  bool density = true;
  bool trace = true;
};

struct ExperimentConfig {
  Scenario scenario;
  RunConfig run;
  OutputConfig output;

  std::vector<double> eval_times() const { return run.t_eval.empty() ? std::vector<double>{scenario.T} : run.t_eval; }
  double p_exponent() const { return run.p ? *run.p : default_p(scenario.kernel.hurst()); }
  std::string canonical() const;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

class KeyReader {
 public:
  KeyReader(const boost::property_tree::ptree& section, std::string name) : sec_(section), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto it = sec_.find(key);
    if (it == sec_.not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  std::string str(const std::string& key, const std::string& def) { return raw(key).value_or(def); }

  double num(const std::string& key, double def) {
    auto r = raw(key);
    return r ? to_double(key, *r) : def;
  }

  std::optional<double> opt_num(const std::string& key) {
    auto r = raw(key);
    if (!r) return std::nullopt;
    return to_double(key, *r);
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    auto r = raw(key);
    if (!r) return def;
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(r->data(), r->data() + r->size(), v);
    if (ec != std::errc() || p != r->data() + r->size()) fail(key, "expected a nonnegative integer, got '" + *r + "'");
    return v;
  }

  bool flag(const std::string& key, bool def) {
    auto r = raw(key);
    if (!r) return def;
    if (*r == "true" || *r == "1" || *r == "yes") return true;
    if (*r == "false" || *r == "0" || *r == "no") return false;
    fail(key, "expected true or false, got '" + *r + "'");
    return def;
  }

  std::vector<double> list(const std::string& key) {
    std::vector<double> out;
    auto r = raw(key);
    if (!r) return out;
    std::stringstream ss(*r);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    return out;
  }

  void check_unknown() const {
    for (const auto& kv : sec_) {
      if (!used_.count(kv.first)) throw ConfigError("[" + name_ + "] unknown key '" + kv.first + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const { throw ConfigError("[" + name_ + "] " + key + ": " + msg); }

 private:
  double to_double(const std::string& key, const std::string& s) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected a number, got '" + s + "'");
    return v;
  }

  const boost::property_tree::ptree& sec_;
  std::string name_;
  std::set<std::string> used_;
};

inline FieldSpec read_field(KeyReader& r, const std::string& name, FieldSpec def) {
  FieldSpec f = def;
  if (auto fam = r.raw(name)) {
    try {
      f.family = parse_field_family(*fam);
    } catch (const std::invalid_argument& e) {
      r.fail(name, e.what());
    }
  }
  f.offset = r.num(name + ".offset", f.offset);
  f.scale = r.num(name + ".scale", f.scale);
  f.x_coef = r.num(name + ".x_coef", f.x_coef);
  f.y_coef = r.num(name + ".y_coef", f.y_coef);
  return f;
}

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& sec : tree) {
    if (sec.first != "scenario" && sec.first != "run" && sec.first != "output") {
      if (sec.second.empty()) throw ConfigError("key '" + sec.first + "' outside any section");
      throw ConfigError("unknown section [" + sec.first + "]");
    }
  }
  const pt::ptree empty;
  auto section = [&](const char* n) -> const pt::ptree& {
    auto it = tree.find(n);
    return it == tree.not_found() ? empty : it->second;
  };

  ExperimentConfig c;
  {
    detail::KeyReader r(section("scenario"), "scenario");
    Scenario& s = c.scenario;
    const std::string fam = r.str("kernel", "brownian");
    const double H = r.num("hurst", 0.5);
    s.T = r.num("T", 1.0);
    const auto quad = r.count("quadrature_points", 64);
    KernelFamily kf;
    try {
      kf = parse_kernel_family(fam);
    } catch (const std::invalid_argument& e) {
      r.fail("kernel", e.what());
    }
    if (!(H > 0.25 && H <= 0.5)) r.fail("hurst", "must lie in (1/4, 1/2]");
    if (!(s.T > 0.0)) r.fail("T", "must be positive");
    if (quad < 2) r.fail("quadrature_points", "must be at least 2");
    s.kernel = VolterraKernel(kf, H, s.T, static_cast<int>(quad));
    s.d_X = r.count("d_x", 1);
    s.d_Y = r.count("d_y", 1);
    s.d_B = r.count("d_b", s.d_X);
    s.grid_n = r.count("grid_n", 64);
    if (!detail::is_power_of_two(s.grid_n)) r.fail("grid_n", "must be a power of two");
    s.inner_refine = r.count("inner_refine", 8);
    if (!detail::is_power_of_two(s.inner_refine)) r.fail("inner_refine", "must be a power of two");
    const auto level = r.count("level", 0);
    if (level > 3 || level == 1) r.fail("level", "must be 0 (automatic), 2 or 3");
    s.level = static_cast<int>(level);
    try {
      s.method = parse_sampling_method(r.str("sampling", "convolution"));
    } catch (const std::invalid_argument& e) {
      r.fail("sampling", e.what());
    }
    FieldSpec sig_def;
    sig_def.family = FieldFamily::Constant;
    sig_def.offset = 0.0;
    sig_def.scale = 1.0;
    s.sigma = detail::read_field(r, "sigma", sig_def);
    FieldSpec b_def;
    b_def.family = FieldFamily::Linear;
    s.b = detail::read_field(r, "b", b_def);

    const std::string x0 = r.str("x0", "point");
    if (x0 == "point") s.x0.kind = InitialLaw::Kind::Point;
    else if (x0 == "gaussian") s.x0.kind = InitialLaw::Kind::Gaussian;
    else r.fail("x0", "expected point or gaussian, got '" + x0 + "'");
    s.x0.mean = r.num("x0.mean", 0.0);
    s.x0.sd = r.num("x0.sd", s.x0.kind == InitialLaw::Kind::Gaussian ? 1.0 : 0.0);

    const std::string phi = r.str("phi", "coordinate");
    if (phi == "coordinate") s.phi.kind = TestFunction::Kind::Coordinate;
    else if (phi == "indicator") s.phi.kind = TestFunction::Kind::IndicatorAbove;
    else if (phi == "polynomial") s.phi.kind = TestFunction::Kind::Polynomial;
    else if (phi == "tanh" || phi == "gauss") {
      s.phi.kind = TestFunction::Kind::BoundedSmooth;
      s.phi.tag = phi;
    } else r.fail("phi", "expected coordinate, indicator, polynomial, tanh or gauss, got '" + phi + "'");
    s.phi.coord = r.count("phi.coord", 0);
    s.phi.threshold = r.num("phi.threshold", 0.0);
    s.phi.coeffs = r.list("phi.coeffs");
    if (s.phi.kind == TestFunction::Kind::Polynomial && s.phi.coeffs.empty()) r.fail("phi.coeffs", "polynomial test function needs coefficients");
    s.phi.factor = r.num("phi.factor", 1.0);
    r.check_unknown();
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[scenario] ") + e.what());
    }
  }
  {
    detail::KeyReader r(section("run"), "run");
    RunConfig& run = c.run;
    run.command = parse_command(r.str("command", "filter"));
    run.seed = r.count("seed", 1);
    run.n_mc = r.count("n_mc", 1000);
    if (run.n_mc < 2) r.fail("n_mc", "must be at least 2");
    run.n_paths = r.count("n_paths", 100);
    if (run.n_paths < 2) r.fail("n_paths", "must be at least 2");
    run.t_eval = r.list("t_eval");
    const auto outer = c.scenario.outer_grid();
    for (double t : run.t_eval) {
      if (!(t >= 0.0 && t <= c.scenario.T)) r.fail("t_eval", "times must lie in [0, T]");
      try {
        detail::grid_index(outer, t, "t_eval");
      } catch (const std::invalid_argument&) {
        r.fail("t_eval", "time " + std::to_string(t) + " is not on the outer grid");
      }
    }
    run.refine_levels = r.count("refine_levels", 3);
    if (run.refine_levels < 1 || run.refine_levels > 5) r.fail("refine_levels", "must lie in 1..5");
    run.kappa = r.num("kappa", 0.5);
    if (run.kappa != 0.5 && run.kappa != 1.0) r.fail("kappa", "must be 0.5 or 1");
    run.p = r.opt_num("p");
    if (run.p && !(*run.p >= 2.0 && *run.p < 4.0)) r.fail("p", "must lie in [2, 4)");
    run.blowup_bound = r.num("blowup_bound", 1e8);
    if (!(run.blowup_bound > 0.0)) r.fail("blowup_bound", "must be positive");
    c.scenario.blowup_bound = run.blowup_bound;
    run.space_points = r.count("space_points", 256);
    if (run.space_points < 16) r.fail("space_points", "must be at least 16");
    run.draws = r.count("draws", 5);
    if (run.draws < 1) r.fail("draws", "must be at least 1");
    run.threads = static_cast<int>(r.count("threads", 0));
    run.out_dir = r.str("output_dir", "out");
    r.check_unknown();
  }
  {
    detail::KeyReader r(section("output"), "output");
    c.output.precision = static_cast<int>(r.count("precision", 17));
    if (c.output.precision < 1 || c.output.precision > 17) r.fail("precision", "must lie in 1..17");
    c.output.density = r.flag("density", true);
    c.output.trace = r.flag("trace", true);
    const std::string fmt = r.str("format", "csv");
    if (fmt != "csv") r.fail("format", "only csv is supported");
    r.check_unknown();
  }
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Fully resolved configuration in a fixed key order; hashed into the manifest.
inline std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17);
  const Scenario& s = scenario;
  auto field = [&](const char* n, const FieldSpec& f) {
    os << n << " = " << to_string(f.family) << "\n"
       << n << ".offset = " << f.offset << "\n"
       << n << ".scale = " << f.scale << "\n"
       << n << ".x_coef = " << f.x_coef << "\n"
       << n << ".y_coef = " << f.y_coef << "\n";
  };
  os << "[scenario]\n"
     << "kernel = " << to_string(s.kernel.family()) << "\n"
     << "hurst = " << s.kernel.hurst() << "\n"
     << "T = " << s.T << "\n"
     << "quadrature_points = " << s.kernel.quadrature_points() << "\n"
     << "d_x = " << s.d_X << "\nd_y = " << s.d_Y << "\nd_b = " << s.d_B << "\n"
     << "grid_n = " << s.grid_n << "\ninner_refine = " << s.inner_refine << "\nlevel = " << s.level << "\n"
     << "sampling = " << (s.method == SamplingMethod::Cholesky ? "cholesky" : "convolution") << "\n";
  field("sigma", s.sigma);
  field("b", s.b);
  os << "x0 = " << (s.x0.kind == InitialLaw::Kind::Point ? "point" : "gaussian") << "\n"
     << "x0.mean = " << s.x0.mean << "\nx0.sd = " << s.x0.sd << "\n";
  const char* phis[] = {"coordinate", "indicator", "polynomial", "bounded"};
  os << "phi = " << (s.phi.kind == TestFunction::Kind::BoundedSmooth ? s.phi.tag : std::string(phis[static_cast<int>(s.phi.kind)])) << "\n"
     << "phi.coord = " << s.phi.coord << "\nphi.threshold = " << s.phi.threshold << "\nphi.factor = " << s.phi.factor << "\nphi.coeffs = ";
  for (std::size_t i = 0; i < s.phi.coeffs.size(); ++i) os << (i ? ", " : "") << s.phi.coeffs[i];
  os << "\n[run]\n"
     << "command = " << to_string(run.command) << "\nseed = " << run.seed << "\nn_mc = " << run.n_mc << "\nn_paths = " << run.n_paths
     << "\nt_eval = ";
  const auto te = eval_times();
  for (std::size_t i = 0; i < te.size(); ++i) os << (i ? ", " : "") << te[i];
  os << "\nrefine_levels = " << run.refine_levels << "\nkappa = " << run.kappa << "\np = " << p_exponent()
     << "\nblowup_bound = " << run.blowup_bound << "\nspace_points = " << run.space_points << "\ndraws = " << run.draws << "\n"
     << "[output]\nprecision = " << output.precision << "\ndensity = " << output.density << "\ntrace = " << output.trace << "\n";
  return os.str();
}

}  // namespace roughfilter
