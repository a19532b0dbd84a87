#include "idyn/internal_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace idyn {

namespace {

std::vector<double> time_grid(TimeSpan span, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
    if (!(span.t1 >= span.t0)) throw Error(ErrorKind::InvalidArgument, "time span must be increasing");
    const double steps = std::ceil((span.t1 - span.t0) / dt - 1e-9);
    const auto n = static_cast<std::size_t>(std::max(0.0, steps));
    std::vector<double> grid(n + 1);
    for (std::size_t k = 0; k < n; ++k) grid[k] = span.t0 + static_cast<double>(k) * dt;
    grid[n] = span.t1;
    return grid;
}

void add_labels(std::vector<std::string>& labels, const std::string& prefix, Eigen::Index count) {
    for (Eigen::Index i = 0; i < count; ++i) labels.push_back(prefix + "_" + std::to_string(i));
}

// Classic RK4 driver. `record` maps (t, x) to the stored row.
template <typename Deriv, typename Record>
Trajectory run_rk4(const Deriv& deriv, const Record& record, Vec x, const std::vector<double>& grid) {
    Trajectory traj;
    auto fail = [&](ErrorKind kind, const std::string& msg, double t) {
        traj.error = ErrorRecord{kind, msg, t};
    };
    try {
        traj.times.push_back(grid.front());
        traj.states.push_back(record(grid.front(), x));
    } catch (const Error& e) {
        traj.times.clear();
        traj.states.clear();
        fail(e.kind(), e.what(), grid.front());
        return traj;
    }
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double t = grid[k];
        const double h = grid[k + 1] - t;
        try {
            const Vec k1 = deriv(t, x);
            const Vec k2 = deriv(t + 0.5 * h, Vec(x + 0.5 * h * k1));
            const Vec k3 = deriv(t + 0.5 * h, Vec(x + 0.5 * h * k2));
            const Vec k4 = deriv(t + h, Vec(x + h * k3));
            if (!k1.allFinite() || !k2.allFinite() || !k3.allFinite() || !k4.allFinite())
                throw Error(ErrorKind::NonFiniteState, "non-finite RK4 stage");
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!x.allFinite()) throw Error(ErrorKind::NonFiniteState, "non-finite state");
            Vec row = record(grid[k + 1], x);
            traj.times.push_back(grid[k + 1]);
            traj.states.push_back(std::move(row));
        } catch (const Error& e) {
            fail(e.kind(), e.what(), t);
            break;
        }
    }
    return traj;
}

}  // namespace

std::size_t Trajectory::column(const std::string& label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw Error(ErrorKind::InvalidArgument, "no column named " + label);
    return static_cast<std::size_t>(it - labels.begin());
}

ConstantClassModel ConstantClassModel::build(Mat M, Mat B, Mat H, VectorFn K, VectorFn D, CoriolisFn C,
                                             double lambda) {
    ConstantClassModel ccm;
    ccm.M = std::move(M);
    ccm.B = std::move(B);
    ccm.H = std::move(H);
    ccm.K = std::move(K);
    ccm.D = std::move(D);
    ccm.C = std::move(C);
    ccm.lambda = lambda;
    if (lambda == 0.0 || !std::isfinite(lambda))
        throw Error(ErrorKind::InvalidArgument, "lambda must be finite and nonzero");

    const auto n = ccm.M.rows();
    const auto m = ccm.B.cols();
    if (ccm.M.cols() != n || ccm.B.rows() != n || ccm.H.rows() != m || ccm.H.cols() != n || m >= n)
        throw Error(ErrorKind::InvalidArgument, "inconsistent constant-class dimensions");
    if (!ccm.K || !ccm.D) throw Error(ErrorKind::InvalidArgument, "K and D are required");
    if (!singular_values(ccm.M).full_rank()) throw Error(ErrorKind::SingularMass, "constant mass matrix singular");

    const Mat minv_b = ccm.M.partialPivLu().solve(ccm.B);
    const Mat gamma = ccm.H * minv_b;
    if (!singular_values(gamma).full_rank())
        throw Error(ErrorKind::SingularHighGain, "H M^{-1} B is singular");
    ccm.input_gain = minv_b * gamma.partialPivLu().inverse();
    ccm.V = orthonormal_kernel(ccm.H);
    ccm.phi2 = ccm.V.transpose() * (Mat::Identity(n, n) - ccm.input_gain * ccm.H);
    ccm.Theta = ccm.phi2 * ccm.M.partialPivLu().inverse();
    return ccm;
}

Mat ConstantClassModel::coriolis(const Vec& x1, const Vec& x2) const {
    if (!C) return Mat::Zero(n(), n());
    return C(x1, x2);
}

Vec ConstantClassModel::forces(const Vec& x1, const Vec& x2) const {
    Vec f = -K(x1) - D(x2);
    if (C) f -= C(x1, x2) * x2;
    return f;
}

SystemModel ConstantClassModel::system() const {
    SystemModel model;
    model.n = n();
    model.m = m();
    model.mass = [M = M](const Vec&) { return M; };
    model.input_dist = [B = B](const Vec&) { return B; };
    model.output = [H = H](const Vec& q) -> Vec { return H * q; };
    model.output_jac = [H = H](const Vec&) { return H; };
    model.forces = [K = K, D = D, C = C](const Vec& q, const Vec& v) -> Vec {
        Vec f = -K(q) - D(v);
        if (C) f -= C(q, v) * v;
        return f;
    };
    model.constant_structure = true;
    model.linear_output = true;
    return model;
}

Vec generic_rhs(const DecouplingMap& map, const Vec& eta, const Vec& y, const Vec& dy) {
    const SystemModel& model = map.model();
    const Eigen::Index k = model.n - model.m;
    if (eta.size() != 2 * k) throw Error(ErrorKind::InvalidArgument, "eta has wrong length");
    const Vec eta1 = eta.head(k);
    const Vec eta2 = eta.tail(k);

    const Vec x1 = recover_x1(map, y, eta1);
    const auto frame = map.frame(x1);
    const Vec x2 = frame.input_gain * dy + frame.V * eta2;

    const Mat dphi2 = directional_jacobian([&map](const Vec& q) { return phi2(map, q); }, x1, x2);
    const Vec accel_free = frame.mass.partialPivLu().solve(model.forces(x1, x2));

    Vec out(2 * k);
    out.head(k) = map.phi1_jacobian(x1) * x2;
    out.tail(k) = dphi2 * x2 + frame.phi2 * accel_free;
    return out;
}

Vec constant_vector_field(const ConstantClassModel& ccm, double lambda, const Vec& eta1, const Vec& eta2,
                          const Vec& y1, const Vec& y2) {
    const Vec x1 = ccm.input_gain * y1 + ccm.V * eta1 / lambda;
    const Vec x2 = ccm.input_gain * y2 + ccm.V * eta2;
    const Eigen::Index k = eta1.size();
    Vec out(2 * k);
    out.head(k) = lambda * eta2;
    out.tail(k) = ccm.Theta * ccm.forces(x1, x2);
    return out;
}

Vec constant_rhs(const ConstantClassModel& ccm, const Vec& eta, const Vec& y, const Vec& dy) {
    const Eigen::Index k = ccm.n() - ccm.m();
    if (eta.size() != 2 * k) throw Error(ErrorKind::InvalidArgument, "eta has wrong length");
    return constant_vector_field(ccm, ccm.lambda, eta.head(k), eta.tail(k), y, dy);
}

InternalRhs make_generic_rhs(const DecouplingMap& map) {
    return [&map](const Vec& eta, const Vec& y, const Vec& dy) { return generic_rhs(map, eta, y, dy); };
}

InternalRhs make_constant_rhs(const ConstantClassModel& ccm) {
    return [&ccm](const Vec& eta, const Vec& y, const Vec& dy) { return constant_rhs(ccm, eta, y, dy); };
}

Trajectory integrate(const InternalRhs& rhs, const Vec& eta0, const OutputSignal& signal, TimeSpan span,
                     double dt, std::optional<int> eta1_dim) {
    if (!eta0.allFinite()) throw Error(ErrorKind::InvalidArgument, "eta0 must be finite");
    const auto grid = time_grid(span, dt);
    const Eigen::Index k1 = eta1_dim.value_or(static_cast<int>(eta0.size() / 2));
    const Vec y_probe = signal.y(span.t0);
    const Eigen::Index m = y_probe.size();

    double first_y_violation = std::numeric_limits<double>::quiet_NaN();
    double first_dy_violation = std::numeric_limits<double>::quiet_NaN();
    auto record = [&](double t, const Vec& eta) {
        const Vec y = signal.y(t);
        const Vec dy = signal.dy(t);
        if (std::isnan(first_y_violation) && y.norm() > signal.sup_y * (1.0 + 1e-12) + 1e-15)
            first_y_violation = t;
        if (std::isnan(first_dy_violation) && dy.norm() > signal.sup_dy * (1.0 + 1e-12) + 1e-15)
            first_dy_violation = t;
        Vec row(eta.size() + 2 * m);
        row << eta, y, dy;
        return row;
    };
    auto deriv = [&](double t, const Vec& eta) { return rhs(eta, signal.y(t), signal.dy(t)); };

    Trajectory traj = run_rk4(deriv, record, eta0, grid);
    add_labels(traj.labels, "eta1", k1);
    add_labels(traj.labels, "eta2", eta0.size() - k1);
    add_labels(traj.labels, "y", m);
    add_labels(traj.labels, "dy", m);
    if (!std::isnan(first_y_violation)) {
        std::ostringstream os;
        os << "|y(t)| exceeds sup_y=" << signal.sup_y << " first at t=" << first_y_violation;
        traj.warnings.push_back(os.str());
    }
    if (!std::isnan(first_dy_violation)) {
        std::ostringstream os;
        os << "|dy(t)| exceeds sup_dy=" << signal.sup_dy << " first at t=" << first_dy_violation;
        traj.warnings.push_back(os.str());
    }
    return traj;
}

Trajectory simulate_full(const SystemModel& model, const InputFn& u, const FullState& x0, TimeSpan span,
                         double dt) {
    const Eigen::Index n = model.n;
    if (x0.x1.size() != n || x0.x2.size() != n) throw Error(ErrorKind::InvalidArgument, "x0 has wrong length");
    const auto grid = time_grid(span, dt);

    auto deriv = [&](double t, const Vec& x) {
        const Vec q = x.head(n);
        const Vec v = x.tail(n);
        const Mat mass = eval_mass(model, q);
        if (!singular_values(mass).full_rank())
            throw Error(ErrorKind::SingularMass, "mass matrix singular along trajectory");
        const Vec rhs = model.forces(q, v) + eval_input_dist(model, q) * u(t);
        Vec dx(2 * n);
        dx << v, mass.partialPivLu().solve(rhs);
        return dx;
    };
    auto record = [&](double, const Vec& x) {
        const Vec q = x.head(n);
        const Vec v = x.tail(n);
        Vec row(2 * n + 2 * model.m);
        row << q, v, model.output(q), jacobian_output(model, q) * v;
        return row;
    };

    Vec x(2 * n);
    x << x0.x1, x0.x2;
    Trajectory traj = run_rk4(deriv, record, x, grid);
    add_labels(traj.labels, "q", n);
    add_labels(traj.labels, "v", n);
    add_labels(traj.labels, "y", model.m);
    add_labels(traj.labels, "dy", model.m);
    return traj;
}

HermiteOutputSignal::HermiteOutputSignal(std::vector<double> times, std::vector<Vec> y, std::vector<Vec> dy,
                                         std::vector<Vec> ddy)
    : times_(std::move(times)), y_(std::move(y)), dy_(std::move(dy)), ddy_(std::move(ddy)) {
    if (times_.size() < 2 || y_.size() != times_.size() || dy_.size() != times_.size() ||
        ddy_.size() != times_.size())
        throw Error(ErrorKind::InvalidArgument, "Hermite interpolation needs at least two aligned samples");
}

std::size_t HermiteOutputSignal::interval(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - times_.begin()));
    return std::min(idx, times_.size() - 1) - 1;
}

Vec HermiteOutputSignal::hermite(double s, double h, const Vec& p0, const Vec& m0, const Vec& p1,
                                 const Vec& m1) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
}

Vec HermiteOutputSignal::y(double t) const {
    const std::size_t i = interval(t);
    const double h = times_[i + 1] - times_[i];
    return hermite((t - times_[i]) / h, h, y_[i], dy_[i], y_[i + 1], dy_[i + 1]);
}

Vec HermiteOutputSignal::dy(double t) const {
    const std::size_t i = interval(t);
    const double h = times_[i + 1] - times_[i];
    return hermite((t - times_[i]) / h, h, dy_[i], ddy_[i], dy_[i + 1], ddy_[i + 1]);
}

OutputSignal HermiteOutputSignal::signal() const {
    OutputSignal s;
    s.y = [this](double t) { return y(t); };
    s.dy = [this](double t) { return dy(t); };
    // Recorded data: no a-priori bound to validate against.
    s.sup_y = std::numeric_limits<double>::infinity();
    s.sup_dy = std::numeric_limits<double>::infinity();
    return s;
}

ConsistencyReport consistency_compare(const SystemModel& model, const DecouplingMap& map, const InputFn& u,
                                      const FullState& x0, TimeSpan span, double dt) {
    const Eigen::Index n = model.n;
    const Eigen::Index m = model.m;
    ConsistencyReport report;
    report.full = simulate_full(model, u, x0, span, dt);
    if (report.full.error) throw Error(report.full.error->kind, report.full.error->message);

    const std::size_t count = report.full.size();
    std::vector<Vec> ys(count), dys(count), ddys(count);
    report.eta_reference.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Vec& row = report.full.states[i];
        const Vec q = row.segment(0, n);
        const Vec v = row.segment(n, n);
        ys[i] = row.segment(2 * n, m);
        dys[i] = row.segment(2 * n + m, m);

        // y'' = d/dq[H(q) v] v + H M^{-1} (f + B u)
        const Mat mass = eval_mass(model, q);
        const Vec accel =
            mass.partialPivLu().solve(model.forces(q, v) + eval_input_dist(model, q) * u(report.full.times[i]));
        Vec ddy = jacobian_output(model, q) * accel;
        if (!model.linear_output) {
            ddy += central_difference_jacobian([&](const Vec& x) -> Vec { return jacobian_output(model, x) * v; },
                                               q) *
                   v;
        }
        ddys[i] = ddy;

        const auto s = forward_transform(map, FullState{q, v});
        Vec eta(2 * (n - m));
        eta << s.eta1, s.eta2;
        report.eta_reference[i] = eta;
    }

    const HermiteOutputSignal interp(report.full.times, ys, dys, ddys);
    report.internal = integrate(make_generic_rhs(map), report.eta_reference.front(), interp.signal(), span, dt,
                                static_cast<int>(n - m));
    if (report.internal.error) throw Error(report.internal.error->kind, report.internal.error->message);

    report.discrepancy.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Vec eta = report.internal.states[i].head(2 * (n - m));
        report.discrepancy[i] = (eta - report.eta_reference[i]).norm();
        report.max_discrepancy = std::max(report.max_discrepancy, report.discrepancy[i]);
    }
    return report;
}

}  // namespace idyn
