#pragma once

#include <utility>

#include "idyn/decoupling.hpp"
#include "idyn/internal_dynamics.hpp"
#include "idyn/stability.hpp"

namespace idyn::examples {

/// Two-link arm with a passive spring-damper joint; q = (alpha, beta).
struct ManipulatorParams {
    double l = 1.0;       ///< link length
    double m_mass = 1.0;  ///< link mass
    double s = 0.5;       ///< measurement point on the passive link, in [0, l]
    double c = 1.0;       ///< spring stiffness
    double d_damp = 1.0;  ///< damping

    /// Throws InvalidArgument unless all positive and s <= l.
    void validate() const;
};

/// Excluded set |cos(beta) - 2l/(3s)| <= kManipulatorGuard.
inline constexpr double kManipulatorGuard = 1e-6;

SystemModel manipulator_model(const ManipulatorParams& p);

/// Kernel basis (-s/(s+l), 1)^T / R(beta) with R = (2l - 3s cos beta) / (6(s+l)),
/// for which phi2 = [1/3 + cos(beta)/2, 1/3].
KernelBasisFn manipulator_joint_kernel_basis(const ManipulatorParams& p);

/// Decoupling options reproducing the hand-derived coordinates:
/// joint-angle kernel basis and eta1 = beta.
DecouplingOptions manipulator_joint_options(const ManipulatorParams& p);

/// Closed-form internal dynamics in the coordinates of manipulator_joint_options.
/// Throws DomainBoundary if |2l - 3s cos(eta1)| < 1e-9.
std::pair<double, double> manipulator_internal_oracle(const ManipulatorParams& p, double eta1, double eta2,
                                                      double dy);

/// Two cars and a mass on a ramp; q = (s1, s2, s3), u = (u1, u2), y = (s1, s1 + s2).
struct MassOnCarParams {
    double m1 = 1.0;
    double m2 = 1.0;
    double m3 = 1.0;
    double alpha = 0.7853981633974483;  ///< ramp angle in (0, pi/2)
    double k = 1.0;
    double d_spring = 1.0;
    /// Multiplies the damping force D; -1 yields an anti-damped variant.
    double damping_scale = 1.0;
    /// Scaling of eta1 used by the constant-class vector field.
    double lambda = 1.0;

    void validate() const;
    /// m2 + m3 sin^2(alpha)
    double mu_c() const;
};

/// sign with sign(0) = 0
double sign(double x) noexcept;
/// sign(x) sqrt|x| for |x| <= 1, else 2x - sign(x)
double spring3(double x) noexcept;
/// sign(x) x^2 for |x| <= 1, else 2x - sign(x)
double damper3(double x) noexcept;

struct MassOnCar {
    ConstantClassModel ccm;
    SystemModel system;
    /// Envelope with kappa = delta = 1/m3, d = d_spring + 3, z1+ = z2+ = 1,
    /// g1 = max(k, 2)|w|, g2 = max(d_spring, 2)|w|, C bounds zero and
    /// VK(z) = (z^2 - |z|)/m3. Describes the nominal damping even when
    /// damping_scale differs from 1.
    StabilityEnvelope envelope;
};

MassOnCar mass_on_car(const MassOnCarParams& p);

}  // namespace idyn::examples
