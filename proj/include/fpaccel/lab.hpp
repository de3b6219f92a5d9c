#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fpaccel/accel.hpp"
#include "fpaccel/cpd.hpp"
#include "fpaccel/spectral.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel::lab {

/// Config problems are either generated from a SyntheticSpec or loaded
/// from a tensor cache file.
struct ProblemConfig {
  SyntheticSpec synthetic;
  std::optional<std::string> tensor_path;
};

struct MethodConfig {
  std::string name;
  MethodKind kind = MethodKind::FixedPoint;
  FixedPointKind::Tag map = FixedPointKind::Tag::Als;
  int window = 0;  // MethodSpec::kUnboundedWindow for "inf"
  bool globalize = false;
  std::optional<double> alpha;   // explicit SD step
  std::string alpha_rule;        // "optimal" | "one_over_L" | "saa_optimal" | ""
  std::vector<double> beta;      // explicit stationary coefficients
  bool beta_predicted = false;   // resolve coefficients from theory at x*
};

struct AnalysisConfig {
  bool spectrum = true;
  bool bounds = true;
  bool fov = false;
  bool gmres_compare = false;
  int estimate_window = 25;
  int fov_angles = 512;
  GridSpec grid{-1.0, 1.0, 0.05};
  std::vector<double> kappa_bars;       // optional direct input rows
  std::vector<std::uint64_t> seeds;     // extra seeds for table rows
};

/// Parse failures carry the offending key so the CLI can point at it.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  int schema = 1;
  std::uint64_t seed = 0;
  ProblemConfig problem;
  std::vector<MethodConfig> methods;
  int max_iter = 200;
  double f_tol = 0.0;
  int refine_max_iter = 20000;
  double refine_tol = 1e-13;
  std::string start = "near_fixed_point";  // or "random"
  double start_perturbation = 1e-2;
  std::string output_dir = "out";
  AnalysisConfig analysis;

  static ExperimentConfig parse(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);
};

/// Everything derived once per problem instance: the refined fixed point
/// and the spectral facts the method rows and tables draw from.
struct PreparedInstance {
  CpdProblem problem;
  Eigen::VectorXd x_init;  // random start used for refinement
  FactorPoint xstar;
  double f_star = 0.0;
  double gnorm_star = 0.0;
  ConditionReport condition;            // of H(x*)
  SpectralReport als_spectrum;          // of q'_ALS(x*)
  Eigen::MatrixXd als_jacobian;
  Eigen::MatrixXd hessian;
};

PreparedInstance prepare_instance(const ExperimentConfig& cfg,
                                  std::uint64_t seed);

struct ResolvedMethod {
  MethodConfig config;
  MethodSpec spec;
  double alpha = 0.0;  // SD step actually used
  std::optional<double> rho_theory;
  std::string theory_formula;  // slug; empty when no theory value applies
};

ResolvedMethod resolve_method(const MethodConfig& mc,
                              const PreparedInstance& inst);

/// Recomputes a theory value from the facts block of a run report; used
/// to keep report numbers auditable. Throws on unknown slugs.
double recompute_theory(const std::string& formula, const nlohmann::json& facts,
                        double alpha);

int cmd_run(const std::string& config_path);
int cmd_spectrum(const std::string& config_path, const std::string& map,
                 const std::string& method, const std::string& xstar_path,
                 const std::string& out_path);
int cmd_table(const std::string& kind, const std::string& config_path,
              const std::string& out_path);
int cmd_gmres_compare(const std::string& config_path);

}  // namespace fpaccel::lab
