#include "fpaccel/lab.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fpaccel/gmres.hpp"
#include "fpaccel/rng.hpp"
#include "fpaccel/util.hpp"

namespace fpaccel::lab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Sub-stream seeds for starts and perturbations, decoupled from the
// problem seed so regenerating data does not shift the starting points.
constexpr std::uint64_t kStartStream = 0x9e3779b97f4a7c15ull;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

double require_number(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_number()) fail(key, "expected a number");
  return j[key].get<double>();
}

MethodKind parse_kind(const std::string& s, const std::string& key) {
  if (s == "fixed_point") return MethodKind::FixedPoint;
  if (s == "aa") return MethodKind::AA;
  if (s == "ngmres") return MethodKind::NGMRES;
  if (s == "nesterov") return MethodKind::NesterovRestart;
  if (s == "saa") return MethodKind::SAA;
  if (s == "sngmres") return MethodKind::SNGMRES;
  if (s == "sngmresr") return MethodKind::SNGMRESR;
  fail(key, "unknown method kind '" + s + "'");
}

std::string kind_name(MethodKind k) {
  switch (k) {
    case MethodKind::FixedPoint: return "fixed_point";
    case MethodKind::AA: return "aa";
    case MethodKind::NGMRES: return "ngmres";
    case MethodKind::NesterovRestart: return "nesterov";
    case MethodKind::SAA: return "saa";
    case MethodKind::SNGMRES: return "sngmres";
    case MethodKind::SNGMRESR: return "sngmresr";
  }
  return "?";
}

bool is_stationary_kind(MethodKind k) {
  return k == MethodKind::SAA || k == MethodKind::SNGMRES ||
         k == MethodKind::SNGMRESR;
}

MethodConfig parse_method(const json& j, int index) {
  const std::string where = "methods[" + std::to_string(index) + "]";
  if (!j.is_object()) fail(where, "expected an object");
  MethodConfig mc;
  if (!j.contains("kind") || !j["kind"].is_string()) {
    fail(where + ".kind", "expected a string");
  }
  mc.kind = parse_kind(j["kind"].get<std::string>(), where + ".kind");
  if (j.contains("map")) {
    const std::string m = j["map"].get<std::string>();
    if (m == "als") {
      mc.map = FixedPointKind::Tag::Als;
    } else if (m == "sd") {
      mc.map = FixedPointKind::Tag::Sd;
    } else {
      fail(where + ".map", "expected 'als' or 'sd'");
    }
  }
  if (j.contains("m")) {
    if (j["m"].is_string() && j["m"].get<std::string>() == "inf") {
      mc.window = MethodSpec::kUnboundedWindow;
    } else if (j["m"].is_number_integer()) {
      mc.window = j["m"].get<int>();
    } else {
      fail(where + ".m", "expected an integer or 'inf'");
    }
  }
  if (j.contains("globalize")) mc.globalize = j["globalize"].get<bool>();
  if (j.contains("alpha")) {
    if (j["alpha"].is_number()) {
      mc.alpha = j["alpha"].get<double>();
    } else if (j["alpha"].is_string()) {
      mc.alpha_rule = j["alpha"].get<std::string>();
      if (mc.alpha_rule != "optimal" && mc.alpha_rule != "one_over_L" &&
          mc.alpha_rule != "saa_optimal") {
        fail(where + ".alpha",
             "expected a number or one of 'optimal', 'one_over_L', 'saa_optimal'");
      }
    } else {
      fail(where + ".alpha", "expected a number or a rule name");
    }
  }
  if (j.contains("beta")) {
    if (j["beta"].is_string() && j["beta"].get<std::string>() == "predicted") {
      mc.beta_predicted = true;
    } else if (j["beta"].is_array()) {
      mc.beta = j["beta"].get<std::vector<double>>();
    } else {
      fail(where + ".beta", "expected an array or 'predicted'");
    }
  }
  if (is_stationary_kind(mc.kind) && !mc.beta_predicted) {
    if (mc.beta.empty()) fail(where + ".beta", "stationary methods need coefficients");
    if (!j.contains("m")) {
      mc.window = static_cast<int>(mc.beta.size()) -
                  (mc.kind == MethodKind::SNGMRES ? 1 : 0);
    }
  }
  if (is_stationary_kind(mc.kind) && mc.beta_predicted) {
    if (!j.contains("m")) mc.window = 1;
    if (mc.window != 1) {
      fail(where, "predicted coefficients are only available for window 1");
    }
  }
  mc.name = j.contains("name") ? j["name"].get<std::string>()
                               : kind_name(mc.kind) + std::string("-") +
                                     (mc.map == FixedPointKind::Tag::Als ? "als" : "sd");
  return mc;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  if (j.contains("schema")) cfg.schema = j["schema"].get<int>();
  if (cfg.schema != 1) throw ConfigError("config key 'schema': unsupported version");
  if (!j.contains("seed") || !j["seed"].is_number()) {
    fail("seed", "a seed is mandatory");
  }
  cfg.seed = j["seed"].get<std::uint64_t>();

  if (!j.contains("problem") || !j["problem"].is_object()) {
    fail("problem", "expected an object");
  }
  const json& p = j["problem"];
  if (p.contains("tensor_path")) {
    cfg.problem.tensor_path = p["tensor_path"].get<std::string>();
  } else {
    if (!p.contains("dims") || !p["dims"].is_array()) {
      fail("problem.dims", "expected an array of extents");
    }
    for (const auto& d : p["dims"]) {
      cfg.problem.synthetic.dims.push_back(d.get<Eigen::Index>());
    }
    cfg.problem.synthetic.rank =
        static_cast<Eigen::Index>(require_number(p, "rank"));
    cfg.problem.synthetic.collinearity = require_number(p, "collinearity");
    cfg.problem.synthetic.noise_homo =
        p.contains("noise_homo") ? p["noise_homo"].get<double>() : 0.0;
    cfg.problem.synthetic.noise_hetero =
        p.contains("noise_hetero") ? p["noise_hetero"].get<double>() : 0.0;
    cfg.problem.synthetic.seed = cfg.seed;
    try {
      cfg.problem.synthetic.validate();
    } catch (const std::invalid_argument& e) {
      fail("problem", e.what());
    }
  }

  if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty()) {
    fail("methods", "at least one method is required");
  }
  int idx = 0;
  for (const auto& m : j["methods"]) cfg.methods.push_back(parse_method(m, idx++));

  if (j.contains("max_iter")) cfg.max_iter = j["max_iter"].get<int>();
  if (j.contains("f_tol")) cfg.f_tol = j["f_tol"].get<double>();
  if (j.contains("refine_max_iter")) cfg.refine_max_iter = j["refine_max_iter"].get<int>();
  if (j.contains("refine_tol")) cfg.refine_tol = j["refine_tol"].get<double>();
  if (j.contains("start")) {
    cfg.start = j["start"].get<std::string>();
    if (cfg.start != "random" && cfg.start != "near_fixed_point") {
      fail("start", "expected 'random' or 'near_fixed_point'");
    }
  }
  if (j.contains("start_perturbation")) {
    cfg.start_perturbation = j["start_perturbation"].get<double>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();

  if (j.contains("analysis")) {
    const json& a = j["analysis"];
    if (a.contains("spectrum")) cfg.analysis.spectrum = a["spectrum"].get<bool>();
    if (a.contains("bounds")) cfg.analysis.bounds = a["bounds"].get<bool>();
    if (a.contains("fov")) cfg.analysis.fov = a["fov"].get<bool>();
    if (a.contains("gmres_compare")) {
      cfg.analysis.gmres_compare = a["gmres_compare"].get<bool>();
    }
    if (a.contains("estimate_window")) {
      cfg.analysis.estimate_window = a["estimate_window"].get<int>();
    }
    if (a.contains("fov_angles")) cfg.analysis.fov_angles = a["fov_angles"].get<int>();
    if (a.contains("grid")) {
      cfg.analysis.grid.start = a["grid"]["start"].get<double>();
      cfg.analysis.grid.stop = a["grid"]["stop"].get<double>();
      cfg.analysis.grid.step = a["grid"]["step"].get<double>();
    }
    if (a.contains("kappa_bars")) {
      cfg.analysis.kappa_bars = a["kappa_bars"].get<std::vector<double>>();
    }
    if (a.contains("seeds")) {
      cfg.analysis.seeds = a["seeds"].get<std::vector<std::uint64_t>>();
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse(j);
}

PreparedInstance prepare_instance(const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  DenseTensor data;
  Eigen::Index rank;
  if (cfg.problem.tensor_path) {
    LoadedTensor loaded = load_tensor_file(*cfg.problem.tensor_path);
    data = std::move(loaded.tensor);
    rank = loaded.rank;
  } else {
    SyntheticSpec spec = cfg.problem.synthetic;
    spec.seed = seed;
    data = generate_synthetic(spec).tensor;
    rank = spec.rank;
  }
  CpdProblem problem(std::move(data), rank);

  // Uniform random start in [0,1), refined by block least squares.
  Rng rng(seed ^ kStartStream);
  Eigen::VectorXd x_init(problem.dof());
  for (Eigen::Index i = 0; i < x_init.size(); ++i) x_init[i] = rng.uniform();
  const FactorPoint p0 =
      FactorPoint::unflatten(x_init, problem.dims(), problem.rank());

  FactorPoint xstar = problem.refine_fixed_point(
      p0, FixedPointKind::als(), cfg.refine_max_iter, cfg.refine_tol);

  PreparedInstance inst{std::move(problem), std::move(x_init), std::move(xstar),
                        0.0, 0.0, {}, {}, {}, {}};
  inst.f_star = inst.problem.objective(inst.xstar);
  inst.gnorm_star = inst.problem.gradient(inst.xstar).norm();
  inst.hessian = inst.problem.hessian(inst.xstar, DerivativeMode::Analytic);
  inst.condition =
      modified_condition_number(inst.hessian, inst.problem.degeneracy_count());
  inst.als_jacobian = inst.problem.jacobian_fixed_point(
      FixedPointKind::als(), inst.xstar, DerivativeMode::Analytic);
  inst.als_spectrum = modified_spectral_radius(
      inst.als_jacobian, inst.problem.degeneracy_count(), 1.0);
  inst.als_spectrum.condition = inst.condition;
  return inst;
}

ResolvedMethod resolve_method(const MethodConfig& mc,
                              const PreparedInstance& inst) {
  ResolvedMethod rm;
  rm.config = mc;
  const double L = inst.condition.L;
  const double ell = inst.condition.ell;
  const double rho_als = inst.als_spectrum.rho;

  // SD step selection.
  if (mc.map == FixedPointKind::Tag::Sd) {
    if (mc.alpha) {
      rm.alpha = *mc.alpha;
    } else if (mc.alpha_rule == "one_over_L") {
      rm.alpha = 1.0 / L;
    } else if (mc.alpha_rule == "saa_optimal") {
      rm.alpha = 4.0 / (3.0 * L + ell);
    } else {
      rm.alpha = 2.0 / (L + ell);  // default/"optimal"
    }
  }

  MethodSpec spec;
  spec.kind = mc.kind;
  spec.window = mc.window;
  spec.globalize = mc.globalize;
  spec.beta = mc.beta;

  const bool sd = mc.map == FixedPointKind::Tag::Sd;
  switch (mc.kind) {
    case MethodKind::FixedPoint:
      if (sd) {
        const double rho =
            std::max(std::abs(1.0 - rm.alpha * ell), std::abs(1.0 - rm.alpha * L));
        rm.rho_theory = rho;
        rm.theory_formula = "sd-spectral-radius";
      } else {
        rm.rho_theory = rho_als;
        rm.theory_formula = "als-spectral-radius";
      }
      break;
    case MethodKind::SAA:
      if (mc.beta_predicted) {
        if (sd) {
          const SdParams p = optimal_sd_params(L, ell, SdAcceleration::SaaOptimal);
          rm.alpha = p.alpha;
          spec.beta = {p.beta};
          rm.rho_theory = p.rho;
          rm.theory_formula = "saa1-sd-optimal";
        } else {
          const OptimalCoefficient oc =
              complex_lower_bound(rho_als, StationaryVariant::SAA);
          spec.beta = {oc.beta};
          rm.rho_theory = oc.rho;
          rm.theory_formula = "saa1-als-predicted";
        }
        spec.window = 1;
      }
      break;
    case MethodKind::SNGMRESR:
      if (mc.beta_predicted) {
        if (sd) {
          const SdParams p =
              optimal_sd_params(L, ell, SdAcceleration::SngmresrOptimal);
          rm.alpha = p.alpha;
          spec.beta = {p.beta};
          rm.rho_theory = p.rho;
          rm.theory_formula = "sngmresr1-sd-optimal";
        } else {
          const OptimalCoefficient oc =
              complex_lower_bound(rho_als, StationaryVariant::SNGMRESR);
          spec.beta = {oc.beta};
          rm.rho_theory = oc.rho;
          rm.theory_formula = "sngmresr1-als-lower-bound";
        }
        spec.window = 1;
      }
      break;
    default:
      break;  // nonstationary accelerators carry no closed-form factor
  }
  spec.validate();
  rm.spec = spec;
  return rm;
}

double recompute_theory(const std::string& formula, const json& facts,
                        double alpha) {
  const auto kappa = [&] { return facts.at("kappa_bar").get<double>(); };
  const auto L = [&] { return facts.at("L").get<double>(); };
  const auto ell = [&] { return facts.at("ell").get<double>(); };
  const auto rho_als = [&] { return facts.at("rho_qprime_als").get<double>(); };
  if (formula == "sd-spectral-radius") {
    return std::max(std::abs(1.0 - alpha * ell()), std::abs(1.0 - alpha * L()));
  }
  if (formula == "sd-optimal-step-factor") return sd_convergence_factor(kappa());
  if (formula == "als-spectral-radius") return rho_als();
  if (formula == "saa1-sd-one-over-L") {
    return optimal_sd_params(L(), ell(), SdAcceleration::SaaAlphaOneOverL).rho;
  }
  if (formula == "saa1-sd-optimal") {
    return optimal_sd_params(L(), ell(), SdAcceleration::SaaOptimal).rho;
  }
  if (formula == "sngmresr1-sd-optimal") {
    return optimal_sd_params(L(), ell(), SdAcceleration::SngmresrOptimal).rho;
  }
  if (formula == "saa1-als-predicted") {
    return complex_lower_bound(rho_als(), StationaryVariant::SAA).rho;
  }
  if (formula == "sngmresr1-als-lower-bound") {
    return complex_lower_bound(rho_als(), StationaryVariant::SNGMRESR).rho;
  }
  throw std::invalid_argument("recompute_theory: unknown formula '" + formula + "'");
}

namespace {

FixedPointSystem make_system(const CpdProblem& problem,
                             const FixedPointKind& kind) {
  FixedPointSystem sys;
  const auto dims = problem.dims();
  const auto rank = problem.rank();
  sys.q = [&problem, kind, dims, rank](const Eigen::VectorXd& x) {
    return problem.apply(kind, FactorPoint::unflatten(x, dims, rank)).flatten();
  };
  sys.grad = [&problem](const Eigen::VectorXd& x) {
    return problem.gradient_flat(x);
  };
  sys.f = [&problem, dims, rank](const Eigen::VectorXd& x) {
    return problem.objective(FactorPoint::unflatten(x, dims, rank));
  };
  return sys;
}

Eigen::VectorXd starting_point(const ExperimentConfig& cfg,
                               const PreparedInstance& inst) {
  if (cfg.start == "random") return inst.x_init;
  Rng rng(cfg.seed ^ (kStartStream * 3));
  Eigen::VectorXd u(inst.problem.dof());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform() - 0.5;
  const Eigen::VectorXd xs = inst.xstar.flatten();
  return xs + cfg.start_perturbation * xs.norm() * u / u.norm();
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  }
  return out;
}

json facts_json(const PreparedInstance& inst) {
  json facts;
  facts["kappa_bar"] = inst.condition.kappa_bar;
  facts["L"] = inst.condition.L;
  facts["ell"] = inst.condition.ell;
  facts["rho_qprime_als"] = inst.als_spectrum.rho;
  facts["dominant_re_als"] = inst.als_spectrum.dominant.real();
  facts["dominant_im_als"] = inst.als_spectrum.dominant.imag();
  facts["f_star"] = inst.f_star;
  facts["gnorm_star"] = inst.gnorm_star;
  return facts;
}

/// Spectrum box of the non-excluded ALS Jacobian eigenvalues.
std::pair<double, double> spectrum_box(const SpectralReport& rep) {
  double r1 = 0.0, r2 = 0.0;
  for (Eigen::Index i = rep.num_excluded; i < rep.eigenvalues.size(); ++i) {
    r1 = std::max(r1, std::abs(rep.eigenvalues[i].real()));
    r2 = std::max(r2, std::abs(rep.eigenvalues[i].imag()));
  }
  return {r1, r2};
}

json bounds_json(const PreparedInstance& inst) {
  json b;
  const double rho = inst.als_spectrum.rho;
  b["rho_p"] = complex_lower_bound(rho, StationaryVariant::SAA).rho;
  b["rho_p_reduced"] = complex_lower_bound(rho, StationaryVariant::SNGMRESR).rho;
  const auto [r1, r2] = spectrum_box(inst.als_spectrum);
  b["r1"] = r1;
  b["r2"] = r2;
  try {
    const RectBounds rb = rect_bounds_sngmres_r1(r1, r2);
    b["delta1"] = rb.delta1;
    b["delta2"] = rb.delta2 ? json(*rb.delta2) : json(nullptr);
  } catch (const std::invalid_argument&) {
    b["delta1"] = nullptr;
    b["delta2"] = nullptr;
  }
  return b;
}

void write_text_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << content;
}

}  // namespace

int cmd_run(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::load_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  fs::create_directories(cfg.output_dir);
  PreparedInstance inst = prepare_instance(cfg, cfg.seed);
  const Eigen::VectorXd x0 = starting_point(cfg, inst);
  const double gap_floor = std::max(1e-26, 1e-12 * std::abs(inst.f_star));

  json report;
  report["schema"] = 1;
  report["seed"] = cfg.seed;
  report["facts"] = facts_json(inst);
  if (cfg.analysis.bounds) report["bounds"] = bounds_json(inst);

  const fs::path xstar_path = fs::path(cfg.output_dir) / "xstar.fp";
  save_factor_point_file(xstar_path.string(), inst.xstar);
  std::vector<std::string> manifest{"xstar.fp"};

  bool diverged = false;
  json method_rows = json::array();
  for (const MethodConfig& mc : cfg.methods) {
    ResolvedMethod rm = resolve_method(mc, inst);
    const FixedPointKind map_kind = mc.map == FixedPointKind::Tag::Sd
                                        ? FixedPointKind::sd(rm.alpha)
                                        : FixedPointKind::als();
    const FixedPointSystem sys = make_system(inst.problem, map_kind);
    const Trace trace =
        is_stationary_kind(mc.kind)
            ? run_stationary(sys, rm.spec, x0, cfg.max_iter, cfg.f_tol,
                             /*record_iterates=*/true)
            : run_accelerated(sys, rm.spec, x0, cfg.max_iter, cfg.f_tol,
                              /*record_iterates=*/true);
    diverged |= trace.status == RunStatus::Diverged;

    const std::string csv_name = "trace_" + sanitize(mc.name) + ".csv";
    {
      std::ofstream os(fs::path(cfg.output_dir) / csv_name);
      trace.write_csv(os, inst.f_star);
    }
    manifest.push_back(csv_name);

    json row;
    row["name"] = mc.name;
    row["kind"] = kind_name(mc.kind);
    row["map"] = mc.map == FixedPointKind::Tag::Sd ? "sd" : "als";
    if (mc.map == FixedPointKind::Tag::Sd) row["alpha"] = rm.alpha;
    if (!rm.spec.beta.empty()) row["beta"] = rm.spec.beta;
    row["status"] = trace.status == RunStatus::Converged ? "converged"
                    : trace.status == RunStatus::Diverged ? "diverged"
                                                          : "max_iter";
    row["trace_csv"] = csv_name;

    const Eigen::VectorXd xs = inst.xstar.flatten();
    bool same_basin = false;
    if (trace.records.back().x && trace.records.back().x->allFinite()) {
      same_basin = (*trace.records.back().x - xs).norm() <= 1e-6 * (1.0 + xs.norm());
    }
    row["same_basin"] = same_basin;
    if (same_basin) {
      try {
        row["rho_hat"] = estimate_convergence_factor(
            trace, inst.f_star, cfg.analysis.estimate_window, gap_floor);
      } catch (const std::invalid_argument&) {
        row["rho_hat"] = nullptr;
      }
    } else {
      row["rho_hat"] = nullptr;
    }
    row["rho_theory"] = rm.rho_theory ? json(*rm.rho_theory) : json(nullptr);
    row["theory_formula"] = rm.theory_formula;
    method_rows.push_back(std::move(row));
  }
  report["methods"] = std::move(method_rows);

  if (cfg.analysis.spectrum) {
    report["als_spectrum"] = inst.als_spectrum.to_json();
  }
  report["manifest"] = manifest;
  write_text_file(fs::path(cfg.output_dir) / "report.json", report.dump(2) + "\n");
  return diverged ? 3 : 0;
}

int cmd_spectrum(const std::string& config_path, const std::string& map,
                 const std::string& method, const std::string& xstar_path,
                 const std::string& out_path) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::load_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  PreparedInstance inst = prepare_instance(cfg, cfg.seed);

  FactorPoint xstar = inst.xstar;
  if (!xstar_path.empty()) {
    xstar = load_factor_point_file(xstar_path);
    const double gnorm = inst.problem.gradient(xstar).norm();
    const double scale = 1.0 + xstar.flatten().norm();
    if (gnorm > 1e-8 * scale) {
      std::cerr << "error: checkpoint gradient norm " << format_g17(gnorm)
                << " is too large for spectral analysis\n";
      return 1;
    }
    inst.xstar = xstar;
    inst.f_star = inst.problem.objective(xstar);
    inst.hessian = inst.problem.hessian(xstar, DerivativeMode::Analytic);
    inst.condition =
        modified_condition_number(inst.hessian, inst.problem.degeneracy_count());
    inst.als_jacobian = inst.problem.jacobian_fixed_point(
        FixedPointKind::als(), xstar, DerivativeMode::Analytic);
    inst.als_spectrum = modified_spectral_radius(
        inst.als_jacobian, inst.problem.degeneracy_count(), 1.0);
  }

  const int excl = inst.problem.degeneracy_count();
  Eigen::MatrixXd jac;
  if (map == "sd") {
    const double alpha = 2.0 / (inst.condition.L + inst.condition.ell);
    jac = inst.problem.jacobian_fixed_point(FixedPointKind::sd(alpha), inst.xstar,
                                            DerivativeMode::Analytic);
  } else if (map == "als") {
    jac = inst.als_jacobian;
  } else {
    std::cerr << "error: --map must be 'als' or 'sd'\n";
    return 2;
  }
  SpectralReport base = modified_spectral_radius(jac, excl, 1.0);
  base.condition = inst.condition;

  json out;
  out["map"] = map;
  out["base"] = base.to_json();
  out["facts"] = facts_json(inst);
  out["bounds"] = bounds_json(inst);

  if (!method.empty() && method != "none") {
    StationaryVariant variant;
    if (method == "saa1") {
      variant = StationaryVariant::SAA;
    } else if (method == "sngmresr1") {
      variant = StationaryVariant::SNGMRESR;
    } else {
      std::cerr << "error: --method must be 'saa1' or 'sngmresr1'\n";
      return 2;
    }
    const OptimalCoefficient oc = complex_lower_bound(base.rho, variant);
    Eigen::VectorXd beta(1);
    beta[0] = oc.beta;
    const CompanionMatrix t = build_companion(jac, variant, beta);
    const SpectralReport trep = modified_spectral_radius(t.matrix, excl, 1.0);
    json mj;
    mj["variant"] = to_string(variant);
    mj["beta"] = oc.beta;
    mj["rho_predicted"] = oc.rho;
    mj["companion"] = trep.to_json();
    mj["prediction_gap"] = trep.rho - oc.rho;
    out["method"] = std::move(mj);
  }

  const std::string path = out_path.empty() ? "spectrum.json" : out_path;
  write_text_file(path, out.dump(2) + "\n");
  std::cout << path << '\n';
  return 0;
}

namespace {

std::string csv_row(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  row += '\n';
  return row;
}

}  // namespace

int cmd_table(const std::string& kind, const std::string& config_path,
              const std::string& out_path) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::load_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::vector<std::uint64_t> seeds = cfg.analysis.seeds;
  if (seeds.empty()) seeds.push_back(cfg.seed);

  std::string csv;
  if (kind == "sd_factors") {
    csv = "kappa_bar,rho_sd,rho_saa1_one_over_L,rho_saa1_optimal,rho_sngmresr1\n";
    std::vector<double> kappas = cfg.analysis.kappa_bars;
    if (kappas.empty()) {
      for (std::uint64_t s : seeds) {
        kappas.push_back(prepare_instance(cfg, s).condition.kappa_bar);
      }
    }
    for (double kappa : kappas) {
      const double L = kappa, ell = 1.0;
      csv += csv_row({format_g17(kappa), format_g17(sd_convergence_factor(kappa)),
                      format_g17(optimal_sd_params(L, ell,
                                                   SdAcceleration::SaaAlphaOneOverL).rho),
                      format_g17(optimal_sd_params(L, ell,
                                                   SdAcceleration::SaaOptimal).rho),
                      format_g17(optimal_sd_params(L, ell,
                                                   SdAcceleration::SngmresrOptimal).rho)});
    }
  } else if (kind == "als_bounds") {
    csv = "seed,rho_qprime,r1,r2,rho_p_reduced,delta1,rho_bruteforce,delta2\n";
    for (std::uint64_t s : seeds) {
      PreparedInstance inst = prepare_instance(cfg, s);
      const auto [r1, r2] = spectrum_box(inst.als_spectrum);
      const RectBounds rb = rect_bounds_sngmres_r1(r1, r2);
      Eigen::VectorXcd survivors =
          inst.als_spectrum.eigenvalues.tail(inst.als_spectrum.eigenvalues.size() -
                                             inst.als_spectrum.num_excluded);
      const BruteForceResult bf = brute_force_beta_spectrum(
          survivors, StationaryVariant::SNGMRESR, 1, cfg.analysis.grid, 0);
      csv += csv_row(
          {std::to_string(s), format_g17(inst.als_spectrum.rho), format_g17(r1),
           format_g17(r2),
           format_g17(complex_lower_bound(inst.als_spectrum.rho,
                                          StationaryVariant::SNGMRESR).rho),
           format_g17(rb.delta1), format_g17(bf.rho),
           rb.delta2 ? format_g17(*rb.delta2) : "nan"});
    }
  } else if (kind == "bruteforce") {
    csv = "seed,method,m,rho,beta1,beta2\n";
    struct Row {
      StationaryVariant variant;
      int m;
    };
    const Row rows[] = {{StationaryVariant::SAA, 1},
                        {StationaryVariant::SAA, 2},
                        {StationaryVariant::SNGMRESR, 1},
                        {StationaryVariant::SNGMRESR, 2},
                        {StationaryVariant::SNGMRES, 0},
                        {StationaryVariant::SNGMRES, 1}};
    for (std::uint64_t s : seeds) {
      PreparedInstance inst = prepare_instance(cfg, s);
      Eigen::VectorXcd survivors =
          inst.als_spectrum.eigenvalues.tail(inst.als_spectrum.eigenvalues.size() -
                                             inst.als_spectrum.num_excluded);
      for (const Row& r : rows) {
        const BruteForceResult bf = brute_force_beta_spectrum(
            survivors, r.variant, r.m, cfg.analysis.grid, 0);
        csv += csv_row({std::to_string(s), to_string(r.variant),
                        std::to_string(r.m), format_g17(bf.rho),
                        format_g17(bf.beta[0]),
                        bf.beta.size() > 1 ? format_g17(bf.beta[1]) : ""});
      }
    }
  } else if (kind == "gmres_bounds") {
    csv = "seed,nu,r,rho_beta_num,c_beta_num,rho_beta_bb,c_beta_bb,zero_in_fov\n";
    for (std::uint64_t s : seeds) {
      PreparedInstance inst = prepare_instance(cfg, s);
      const Eigen::Index n = inst.als_jacobian.rows();
      const Eigen::MatrixXd lin_sys =
          Eigen::MatrixXd::Identity(n, n) - inst.als_jacobian;  // M^{-1} H
      const Projection proj =
          project_nonsingular(lin_sys, inst.problem.degeneracy_count());
      const FovReport fov = fov_report(proj.b, cfg.analysis.fov_angles);
      std::string rho_bb = "nan", c_bb = "nan";
      if (fov.rect.re_min > 0.0) {
        const double r_bb = std::hypot(
            std::max(std::abs(fov.rect.re_min), std::abs(fov.rect.re_max)),
            fov.rect.im_half);
        const BeckermannBound bb = beckermann_factor(fov.rect.re_min, r_bb);
        rho_bb = format_g17(bb.rho_beta);
        c_bb = format_g17(bb.c_beta);
      }
      csv += csv_row({std::to_string(s), format_g17(fov.nu),
                      format_g17(fov.numerical_radius),
                      std::isfinite(fov.rho_beta) ? format_g17(fov.rho_beta) : "nan",
                      std::isfinite(fov.c_beta) ? format_g17(fov.c_beta) : "nan",
                      rho_bb, c_bb, fov.zero_in_fov ? "1" : "0"});
    }
  } else {
    std::cerr << "error: unknown table kind '" << kind << "'\n";
    return 2;
  }

  const std::string path = out_path.empty() ? ("table_" + kind + ".csv") : out_path;
  write_text_file(path, csv);
  std::cout << path << '\n';
  return 0;
}

int cmd_gmres_compare(const std::string& config_path) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::load_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  fs::create_directories(cfg.output_dir);
  PreparedInstance inst = prepare_instance(cfg, cfg.seed);
  const Eigen::VectorXd xs = inst.xstar.flatten();
  const Eigen::VectorXd x0 = starting_point(cfg, inst);
  const Eigen::Index n = xs.size();

  // Linearized system (I - q') x = (I - q') x*.
  const Eigen::MatrixXd a_sys = Eigen::MatrixXd::Identity(n, n) - inst.als_jacobian;
  const Eigen::VectorXd b_sys = a_sys * xs;

  const int iters = std::min<int>(cfg.max_iter, static_cast<int>(n));
  GmresHistory direct = gmres(a_sys, b_sys, x0, iters, 1e-14);
  const Projection proj = project_nonsingular(a_sys, inst.problem.degeneracy_count());
  GmresHistory projected = gmres(proj.b, proj.q.transpose() * b_sys,
                                 proj.q.transpose() * x0, iters, 1e-14);

  const FixedPointSystem sys = make_system(inst.problem, FixedPointKind::als());
  struct NamedSpec {
    std::string name;
    MethodSpec spec;
  };
  const NamedSpec specs[] = {
      {"aa_inf", MethodSpec::aa(MethodSpec::kUnboundedWindow)},
      {"aa_10", MethodSpec::aa(10)},
      {"ngmres_inf", MethodSpec::ngmres(MethodSpec::kUnboundedWindow)},
      {"ngmres_10", MethodSpec::ngmres(10)},
  };
  std::vector<std::string> manifest;
  for (const NamedSpec& ns : specs) {
    const Trace trace = run_accelerated(sys, ns.spec, x0, cfg.max_iter, 0.0);
    const std::string name = "trace_" + ns.name + ".csv";
    std::ofstream os(fs::path(cfg.output_dir) / name);
    trace.write_csv(os, inst.f_star);
    manifest.push_back(name);
  }
  {
    std::ofstream os(fs::path(cfg.output_dir) / "gmres_linearized.csv");
    direct.write_csv(os);
    manifest.push_back("gmres_linearized.csv");
  }
  {
    std::ofstream os(fs::path(cfg.output_dir) / "gmres_projected.csv");
    projected.write_csv(os);
    manifest.push_back("gmres_projected.csv");
  }

  json out;
  out["facts"] = facts_json(inst);
  const FovReport fov = fov_report(proj.b, cfg.analysis.fov_angles);
  out["fov"] = fov.to_json();
  out["manifest"] = manifest;
  write_text_file(fs::path(cfg.output_dir) / "gmres_compare.json",
                  out.dump(2) + "\n");
  return 0;
}

}  // namespace fpaccel::lab
