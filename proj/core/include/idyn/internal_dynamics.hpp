#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "idyn/decoupling.hpp"
#include "idyn/errors.hpp"

namespace idyn {

/// Output trajectory (y, y') driving the internal dynamics, with the sup-norm
/// bounds it is expected to respect.
struct OutputSignal {
    std::function<Vec(double t)> y;
    std::function<Vec(double t)> dy;
    double sup_y = std::numeric_limits<double>::infinity();
    double sup_dy = std::numeric_limits<double>::infinity();
};

struct TimeSpan {
    double t0 = 0.0;
    double t1 = 0.0;
};

struct ErrorRecord {
    ErrorKind kind;
    std::string message;
    double time = 0.0;
};

/// Sampled solution. Rows of `states` line up with `times` and `labels`.
/// On failure `error` is set and the trajectory holds the steps completed so far.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<std::string> labels;
    std::vector<std::string> warnings;
    std::optional<ErrorRecord> error;

    bool ok() const noexcept { return !error.has_value(); }
    std::size_t size() const noexcept { return times.size(); }
    /// Column index of `label`; throws InvalidArgument if absent.
    std::size_t column(const std::string& label) const;
};

/// Systems with constant M, B, linear output y = H q and forces
///   f(x1, x2) = -K(x1) - D(x2) - C(x1, x2) x2.
struct ConstantClassModel {
    using VectorFn = std::function<Vec(const Vec&)>;
    using CoriolisFn = std::function<Mat(const Vec& x1, const Vec& x2)>;

    Mat M;
    Mat B;
    Mat H;
    VectorFn K;
    VectorFn D;
    CoriolisFn C;  ///< empty means C == 0

    // Derived by build().
    Mat input_gain;  ///< M^{-1} B Gamma^{-1}
    Mat Theta;       ///< phi2 M^{-1}
    Mat V;           ///< orthonormal basis of ker H
    Mat phi2;
    double lambda = 1.0;

    int n() const noexcept { return static_cast<int>(M.rows()); }
    int m() const noexcept { return static_cast<int>(B.cols()); }

    /// Fills the derived matrices; throws SingularMass / SingularHighGain.
    static ConstantClassModel build(Mat M, Mat B, Mat H, VectorFn K, VectorFn D, CoriolisFn C,
                                    double lambda);

    Mat coriolis(const Vec& x1, const Vec& x2) const;
    Vec forces(const Vec& x1, const Vec& x2) const;

    /// Equivalent SystemModel (constant_structure and linear_output set).
    SystemModel system() const;
};

/// eta is stacked (eta1, eta2); returns stacked (eta1', eta2').
using InternalRhs = std::function<Vec(const Vec& eta, const Vec& y, const Vec& dy)>;

/// Internal dynamics through the decoupling maps:
///   x1 = phi^{-1}(y, eta1), x2 = recover_x2(x1, y', eta2),
///   eta1' = phi1'(x1) x2,  eta2' = phi2'[x1, x2] x2 + phi2(x1) M(x1)^{-1} f(x1, x2).
Vec generic_rhs(const DecouplingMap& map, const Vec& eta, const Vec& y, const Vec& dy);

/// Vector field of the constant class with an explicit lambda:
///   (lambda z2,  Theta(-K(x1) - D(x2) - C(x1, x2) x2)),
///   x1 = M y1 + V z1 / lambda,  x2 = M y2 + V z2.
Vec constant_vector_field(const ConstantClassModel& ccm, double lambda, const Vec& eta1, const Vec& eta2,
                          const Vec& y1, const Vec& y2);

/// constant_vector_field with ccm.lambda on a stacked eta.
Vec constant_rhs(const ConstantClassModel& ccm, const Vec& eta, const Vec& y, const Vec& dy);

InternalRhs make_generic_rhs(const DecouplingMap& map);
InternalRhs make_constant_rhs(const ConstantClassModel& ccm);

/// Fixed-step RK4 of eta' = rhs(eta, y(t), y'(t)). Columns: eta1_*, eta2_*, y_*, dy_*.
/// `eta1_dim` splits eta for labelling (defaults to half of eta0).
Trajectory integrate(const InternalRhs& rhs, const Vec& eta0, const OutputSignal& signal, TimeSpan span,
                     double dt, std::optional<int> eta1_dim = std::nullopt);

using InputFn = std::function<Vec(double t)>;

/// Fixed-step RK4 of the full mechanical system. Columns: q_*, v_*, y_*, dy_*
/// with y' = H(q) v evaluated exactly.
Trajectory simulate_full(const SystemModel& model, const InputFn& u, const FullState& x0, TimeSpan span,
                         double dt);

/// Piecewise cubic Hermite interpolant of recorded (y, y', y'') samples.
class HermiteOutputSignal {
   public:
    HermiteOutputSignal(std::vector<double> times, std::vector<Vec> y, std::vector<Vec> dy,
                        std::vector<Vec> ddy);

    Vec y(double t) const;
    Vec dy(double t) const;
    OutputSignal signal() const;

   private:
    std::size_t interval(double t) const;
    static Vec hermite(double s, double h, const Vec& p0, const Vec& m0, const Vec& p1, const Vec& m1);

    std::vector<double> times_;
    std::vector<Vec> y_;
    std::vector<Vec> dy_;
    std::vector<Vec> ddy_;
};

struct ConsistencyReport {
    Trajectory full;
    Trajectory internal;
    std::vector<Vec> eta_reference;  ///< forward_transform of the full trajectory
    std::vector<double> discrepancy;
    double max_discrepancy = 0.0;
};

/// Simulates the full system, then the decoupled internal dynamics driven by
/// the recorded output, and compares eta along the grid.
ConsistencyReport consistency_compare(const SystemModel& model, const DecouplingMap& map, const InputFn& u,
                                      const FullState& x0, TimeSpan span, double dt);

}  // namespace idyn
