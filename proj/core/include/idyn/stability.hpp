#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "idyn/internal_dynamics.hpp"

namespace idyn {

/// User-supplied bounds describing how K, D and C behave outside the balls of
/// radius z1_plus / z2_plus in internal coordinates. Empty bound callbacks are
/// identically zero.
struct StabilityEnvelope {
    using Bound = std::function<double(const Vec& x)>;

    double kappa = 0.0;    ///< coercivity of Theta K
    double delta = 0.0;    ///< coercivity of Theta D
    double d_env = 0.0;    ///< linear growth of D
    double z1_plus = 0.0;
    double z2_plus = 0.0;

    Bound g1, g2, g3, g4;
    Bound a3, a4, b3, b4;

    /// Potential of Theta K(V z) on {|z| > z1_plus}; gradient optional.
    std::function<double(const Vec& z)> VK;
    std::function<Vec(const Vec& z)> VK_grad;
    /// Where VK may be evaluated; empty means everywhere.
    std::function<bool(const Vec& z)> VK_domain;

    static double eval(const Bound& b, const Vec& x) { return b ? b(x) : 0.0; }
    /// Analytic gradient if supplied, otherwise central differences of VK.
    Vec vk_gradient(const Vec& z) const;
    bool vk_defined(const Vec& z) const { return !VK_domain || VK_domain(z); }
};

struct SamplerConfig {
    std::size_t samples = 10000;
    std::uint64_t seed = 0;
    double z_max = 10.0;
    double w_max = 0.0;  ///< 0 selects 10 * max(z1_plus, z2_plus)
    std::size_t ball_points = 1000;
    int threads = 0;  ///< 0 selects IDYN_THREADS / hardware
};

/// Derived constants of the sampled Lyapunov certificate.
struct StabilityCertificate {
    double r1 = 0.0;
    double r2 = 0.0;
    double lambda = 1.0;
    double q_weight = 0.0;

    double tau = 0.0;  ///< |Theta|
    double mu = 0.0;   ///< |M^{-1} B Gamma^{-1}|
    double K_tilde = 0.0;
    double D_tilde = 0.0;
    double C3_tilde = 0.0;
    double C4_tilde = 0.0;

    double eps1 = 0.0;
    double eps2 = 0.0;
    double E1 = 0.0;
    double E2 = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;

    double kappa = 0.0;
    double delta = 0.0;
    double d_env = 0.0;
    double z1_plus = 0.0;
    double z2_plus = 0.0;

    /// Sampling resolution behind the tilde maxima (lower bounds of the true maxima).
    std::size_t ball_points = 0;

    /// max{E_i / eps_i, gamma_i}
    double comparison_radius1() const;
    double comparison_radius2() const;
    /// Radius beyond which eta_i lies in the certified region; eta1 also needs
    /// eta1 / lambda outside the z1_plus ball.
    double region_radius1() const;
    double region_radius2() const;
};

/// Throws InfeasibleParameters unless 0 < lambda < 2 kappa / tau^2 and
/// 0 < q_weight < 2 delta / (d^2 + 2 lambda).
StabilityCertificate compute_constants(const ConstantClassModel& ccm, const StabilityEnvelope& env, double r1,
                                       double r2, double lambda, double q_weight,
                                       std::size_t ball_points = 1000);

struct Witness {
    std::vector<std::pair<std::string, Vec>> point;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct ConditionVerdict {
    std::string name;
    std::string relation;  ///< human-readable inequality
    std::size_t samples = 0;
    double worst_margin = 0.0;  ///< min over samples of (allowed side - checked side)
    bool pass = true;
    bool informational = false;  ///< reported, not part of the verdict
    std::optional<Witness> counterexample;
};

struct ConditionsReport {
    std::vector<ConditionVerdict> conditions;
    bool pass = true;
    double z1_min = 0.0, z2_min = 0.0, z_max = 0.0, w_max = 0.0;
    std::size_t samples_per_condition = 0;
    std::uint64_t seed = 0;
};

/// Monte Carlo plus boundary samples of every envelope inequality on the
/// box z_i in (z_i^+, z_max], |v|, |w| <= w_max.
ConditionsReport verify_conditions(const ConstantClassModel& ccm, const StabilityEnvelope& env,
                                   const SamplerConfig& config);

/// 1/2 |eta2|^2 + q eta1.eta2 + VK(eta1 / lambda). OutOfDomain outside VK's region.
double lyapunov_value(const StabilityCertificate& cert, const StabilityEnvelope& env, const Vec& eta1,
                      const Vec& eta2);

/// grad(V) . F(eta1, eta2, y1, y2) with the constant-class vector field at cert.lambda.
double lyapunov_derivative(const StabilityCertificate& cert, const StabilityEnvelope& env,
                           const ConstantClassModel& ccm, const Vec& eta1, const Vec& eta2, const Vec& y1,
                           const Vec& y2);

struct CertificateVerdict {
    std::size_t samples = 0;
    double worst_value = 0.0;
    bool pass = true;
    double slack = 1e-9;
    double eta1_min = 0.0, eta2_min = 0.0, z_max = 0.0;
    /// Sample attaining worst_value (eta1, eta2, y1, y2).
    Witness worst;
};

/// Samples eta_i beyond the certified radii and y_i in the r_i balls; passes
/// when every Lie-derivative sample is <= slack.
CertificateVerdict certificate_check(const StabilityCertificate& cert, const StabilityEnvelope& env,
                                     const ConstantClassModel& ccm, const SamplerConfig& config);

struct TermBound {
    std::string name;
    double term = 0.0;
    double bound = 0.0;
    bool holds = true;  ///< term <= bound + 1e-9
};

/// Splitting of the Lie derivative into six estimated addends plus the exact
/// q lambda |eta2|^2 term.
struct DerivativeTermDiagnostic {
    std::array<TermBound, 6> steps;
    double velocity_term = 0.0;    ///< q lambda |eta2|^2
    double derivative = 0.0;       ///< lyapunov_derivative
    double term_sum = 0.0;         ///< sum of exact terms + velocity_term
    double assembled_bound = 0.0;  ///< sum of step bounds + velocity_term
    double closed_form_bound = 0.0;
    bool pass = true;
};

DerivativeTermDiagnostic derivative_term_bounds(const StabilityCertificate& cert, const StabilityEnvelope& env,
                                        const ConstantClassModel& ccm, const Vec& eta1, const Vec& eta2,
                                        const Vec& y1, const Vec& y2);

/// -eps1 w1^2 + E1 w1 - eps2 w2^2 + E2 w2
double comparison_W(const StabilityCertificate& cert, double w1_norm, double w2_norm);

/// Closed-form upper bound of the Lie derivative assembled from the constants.
double lie_derivative_bound(const StabilityCertificate& cert, double eta1_norm, double eta2_norm, double a3,
                            double a4);

struct BoundednessOptions {
    std::size_t sphere_points = 720;
    double radial_step = 0.0;        ///< 0 selects 1e-3 * max(r_tilde, 1)
    double radial_extent = 20.0;     ///< scan up to radial_extent * max(r_tilde, 1)
};

struct BoundednessReport {
    double sup_norm = 0.0;
    double r_tilde = 0.0;  ///< max{|zeta0|, r3}
    double level = 0.0;    ///< max of V on the r_tilde sphere
    double eps_emp = 0.0;
    double bound = 0.0;
    bool pass = false;
    TimeSpan horizon;
    std::vector<std::string> warnings;
    Trajectory trajectory;
};

using StateFunction = std::function<double(const Vec& zeta)>;

/// V on the stacked state (eta1, eta2).
StateFunction make_lyapunov(const StabilityCertificate& cert, const StabilityEnvelope& env, int eta1_dim);

/// Integrates rhs over [0, horizon] and checks sup |zeta| <= max{|zeta0|, r3} + eps,
/// with eps read off the level set of `lyapunov` (eps = 0 without one).
BoundednessReport boundedness_test(const InternalRhs& rhs, const OutputSignal& signal, const Vec& zeta0,
                                   double r3, double horizon, double dt, const StateFunction& lyapunov = {},
                                   const BoundednessOptions& options = {});

}  // namespace idyn
