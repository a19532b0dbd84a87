#pragma once

#include <functional>
#include <string>
#include <vector>

#include "idyn/linalg.hpp"

namespace idyn {

/// Mechanical system  M(q) v' = f(q, v) + B(q) u,  q' = v,  y = h(q)
/// in generalized coordinates. All callbacks must be reentrant.
struct SystemModel {
    using MatrixFn = std::function<Mat(const Vec& q)>;
    using ForceFn = std::function<Vec(const Vec& q, const Vec& v)>;
    using OutputFn = std::function<Vec(const Vec& q)>;
    using DomainFn = std::function<bool(const Vec& q)>;

    int n = 0;  ///< generalized coordinates
    int m = 0;  ///< inputs == outputs

    MatrixFn mass;
    ForceFn forces;
    MatrixFn input_dist;
    OutputFn output;
    MatrixFn output_jac;  ///< optional analytic Jacobian of `output`
    DomainFn domain;      ///< optional validity region for q

    /// M and B constant, h linear.
    bool constant_structure = false;
    /// h(q) = H q; enables the closed-form coordinate inverse.
    bool linear_output = false;

    bool in_domain(const Vec& q) const { return !domain || domain(q); }
};

struct FullState {
    Vec x1;  ///< positions q
    Vec x2;  ///< velocities v
};

struct DecoupledState {
    Vec xi1;
    Vec xi2;
    Vec eta1;
    Vec eta2;
};

/// Per-coordinate central-difference step: max(1e-6, 1e-7 (1 + |q_i|)).
double fd_step(double qi) noexcept;

/// Central-difference Jacobian of a vector map; throws NonFiniteValue on a
/// non-finite stencil evaluation.
Mat central_difference_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x);

/// H(q) = h'(q): analytic when supplied, central differences otherwise.
Mat jacobian_output(const SystemModel& model, const Vec& q);

/// Jacobian of q -> phi2(q) v at q, by central differences.
Mat directional_jacobian(const std::function<Mat(const Vec&)>& phi2, const Vec& q, const Vec& v);

/// Evaluations of M and B with shape and finiteness checks.
Mat eval_mass(const SystemModel& model, const Vec& q);
Mat eval_input_dist(const SystemModel& model, const Vec& q);

struct ModelCheckSample {
    Vec q;
    bool in_domain = true;
    double mass_smallest_sv = 0.0;
    double mass_largest_sv = 0.0;
    double input_smallest_sv = 0.0;
    double output_jac_error = 0.0;  ///< analytic vs finite difference, 0 if no analytic Jacobian
    bool pass = true;
    std::string reason;
};

struct ModelCheckReport {
    std::vector<ModelCheckSample> samples;
    bool pass = true;
};

/// Checks the structural invariants of `model` at the given sample points:
/// shapes, M invertible, rank B = m, analytic H within 1e-6 of differences.
ModelCheckReport validate_model(const SystemModel& model, const std::vector<Vec>& sample_qs);

}  // namespace idyn
