#include "idyn/decoupling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "idyn/errors.hpp"

namespace idyn {

namespace {

Mat checked_mass(const SystemModel& model, const Vec& q, SingularValueSummary* sv_out = nullptr) {
    Mat mass = eval_mass(model, q);
    const auto sv = singular_values(mass);
    if (sv_out) *sv_out = sv;
    if (!sv.full_rank()) {
        std::ostringstream os;
        os << "mass matrix singular (smallest singular value " << sv.smallest << ")";
        throw Error(ErrorKind::SingularMass, os.str());
    }
    return mass;
}

// Gamma = H (M^{-1} B) is judged against the size of its factors so that
// cancellation is detected for square and scalar high-gain matrices alike.
bool high_gain_regular(const SingularValueSummary& sv, const Mat& h, const Mat& minv_b) {
    const double scale = std::max(sv.largest, spectral_norm(h) * spectral_norm(minv_b));
    return scale > 0.0 && sv.smallest > kRankTolerance * scale;
}

Mat pseudo_inverse_full_column_rank(const Mat& v) {
    return (v.transpose() * v).ldlt().solve(v.transpose());
}

}  // namespace

HighGainReport high_gain(const SystemModel& model, const Vec& q) {
    const Mat mass = checked_mass(model, q);
    const Mat minv_b = mass.partialPivLu().solve(eval_input_dist(model, q));
    HighGainReport report;
    report.q = q;
    const Mat h = jacobian_output(model, q);
    report.gamma = h * minv_b;
    const auto sv = singular_values(report.gamma);
    report.smallest_sv = sv.smallest;
    report.invertible = high_gain_regular(sv, h, minv_b);
    return report;
}

RelativeDegreeReport check_relative_degree(const SystemModel& model, const std::vector<Vec>& sample_qs) {
    RelativeDegreeReport report;
    for (const Vec& q : sample_qs) {
        RelativeDegreeSample s;
        s.q = q;
        s.in_domain = model.in_domain(q);
        try {
            const Mat mass = checked_mass(model, q);
            const Mat minv_b = mass.partialPivLu().solve(eval_input_dist(model, q));
            const Mat h = jacobian_output(model, q);

            // (L_G h~)(x) = [H 0] [0; M^{-1} B]
            Mat h_tilde = Mat::Zero(model.m, 2 * model.n);
            h_tilde.leftCols(model.n) = h;
            Mat g = Mat::Zero(2 * model.n, model.m);
            g.bottomRows(model.n) = minv_b;
            s.lgh_norm = (h_tilde * g).cwiseAbs().maxCoeff();

            const auto sv = singular_values(h * minv_b);
            s.smallest_sv = sv.smallest;
            s.largest_sv = sv.largest;
            if (!s.in_domain) {
                s.reason = "outside domain";
            } else if (!high_gain_regular(sv, h, minv_b)) {
                s.reason = "high-gain matrix singular";
            } else if (s.lgh_norm > 1e-12) {
                s.reason = "L_G h does not vanish";
            } else {
                s.pass = true;
            }
        } catch (const Error& e) {
            s.reason = e.what();
        }
        report.pass = report.pass && s.pass;
        report.samples.push_back(std::move(s));
    }
    return report;
}

Mat orthonormal_kernel(const Mat& h) {
    const Eigen::Index m = h.rows();
    const Eigen::Index n = h.cols();
    const auto sv = singular_values(h);
    if (m > n || !sv.full_rank())
        throw Error(ErrorKind::RankDeficientOutput, "output Jacobian does not have full row rank");
    if (m == n) return Mat(n, 0);

    Eigen::JacobiSVD<Mat> svd(h, Eigen::ComputeFullV);
    const Mat null_space = svd.matrixV().rightCols(n - m);

    // Canonical basis of the same subspace: independent of the SVD's rotation
    // inside the null space.
    const Mat projector = null_space * null_space.transpose();
    Eigen::ColPivHouseholderQR<Mat> qr(projector);
    Mat basis = qr.householderQ() * Mat::Identity(n, n - m);

    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::Index imax = 0;
        for (Eigen::Index r = 1; r < n; ++r)
            if (std::abs(basis(r, c)) > std::abs(basis(imax, c)) + 1e-14) imax = r;
        if (basis(imax, c) < 0.0) basis.col(c) *= -1.0;
    }
    return basis;
}

Mat kernel_basis(const SystemModel& model, const Vec& q) {
    return orthonormal_kernel(jacobian_output(model, q));
}

Mat select_E(const SystemModel& model, const Vec& q0) {
    const Mat v = kernel_basis(model, q0);
    const Eigen::Index n = model.n;
    const Eigen::Index k = v.cols();

    Eigen::ColPivHouseholderQR<Mat> qr(v.transpose());
    std::vector<Eigen::Index> rows(k);
    for (Eigen::Index i = 0; i < k; ++i) rows[i] = qr.colsPermutation().indices()(i);
    std::sort(rows.begin(), rows.end());

    Mat e = Mat::Zero(k, n);
    for (Eigen::Index i = 0; i < k; ++i) e(i, rows[i]) = 1.0;

    if (k > 0 && !singular_values(e * v).full_rank())
        throw Error(ErrorKind::RankDeficientOutput, "no unit-row selector complements H");
    return e;
}

DecouplingMap::DecouplingMap(SystemModel model, DecouplingOptions options)
    : model_(std::move(model)), kernel_fn_(std::move(options.kernel_basis)) {
    if (model_.n <= 0 || model_.m <= 0 || model_.m >= model_.n)
        throw Error(ErrorKind::InvalidArgument, "decoupling requires 0 < m < n");
    q0_ = options.q0.value_or(Vec::Zero(model_.n));
    if (q0_.size() != model_.n) throw Error(ErrorKind::InvalidArgument, "q0 has wrong length");
    if (!model_.in_domain(q0_)) throw Error(ErrorKind::OutOfDomain, "q0 outside model domain");

    conservative_ = options.conservative.value_or(model_.constant_structure);
    lambda_ = options.lambda;
    if (conservative_) {
        if (!model_.constant_structure)
            throw Error(ErrorKind::InvalidArgument,
                        "conservative reduction needs constant M, B and linear h");
        if (lambda_ == 0.0 || !std::isfinite(lambda_))
            throw Error(ErrorKind::InvalidArgument, "lambda must be finite and nonzero");
        phi2_const_ = frame(q0_).phi2;
        E_ = select_E(model_, q0_);
    } else {
        E_ = options.E ? *options.E : select_E(model_, q0_);
    }
    if (E_.rows() != model_.n - model_.m || E_.cols() != model_.n)
        throw Error(ErrorKind::InvalidArgument, "E has wrong shape");
}

Mat DecouplingMap::kernel(const Vec& q) const {
    if (!kernel_fn_) return kernel_basis(model_, q);
    Mat v = kernel_fn_(q);
    if (v.rows() != model_.n || v.cols() != model_.n - model_.m)
        throw Error(ErrorKind::InvalidArgument, "kernel basis has wrong shape");
    return v;
}

DecouplingMap::Frame DecouplingMap::frame(const Vec& q) const {
    Frame f;
    f.mass = checked_mass(model_, q);
    const Mat minv_b = f.mass.partialPivLu().solve(eval_input_dist(model_, q));
    f.H = jacobian_output(model_, q);
    f.gamma = f.H * minv_b;
    const auto sv = singular_values(f.gamma);
    if (!high_gain_regular(sv, f.H, minv_b)) {
        std::ostringstream os;
        os << "high-gain matrix singular (smallest singular value " << sv.smallest << ")";
        throw Error(ErrorKind::SingularHighGain, os.str());
    }
    f.input_gain = minv_b * f.gamma.partialPivLu().inverse();
    f.V = kernel(q);
    const Mat complement = Mat::Identity(model_.n, model_.n) - f.input_gain * f.H;
    f.phi2 = pseudo_inverse_full_column_rank(f.V) * complement;
    return f;
}

Vec DecouplingMap::phi1(const Vec& q) const {
    if (conservative_) return lambda_ * (phi2_const_ * q);
    return E_ * q;
}

Mat DecouplingMap::phi1_jacobian(const Vec&) const {
    if (conservative_) return lambda_ * phi2_const_;
    return E_;
}

Mat phi2(const DecouplingMap& map, const Vec& q) { return map.frame(q).phi2; }

DecoupledState forward_transform(const DecouplingMap& map, const FullState& x) {
    const auto f = map.frame(x.x1);
    DecoupledState s;
    s.xi1 = map.model().output(x.x1);
    s.xi2 = f.H * x.x2;
    s.eta1 = map.phi1(x.x1);
    s.eta2 = f.phi2 * x.x2;
    return s;
}

Vec recover_x2(const DecouplingMap& map, const Vec& q, const Vec& xi2, const Vec& eta2) {
    const auto f = map.frame(q);
    return f.input_gain * xi2 + f.V * eta2;
}

namespace {

Vec recover_x1_linear(const DecouplingMap& map, const Vec& xi1, const Vec& eta1) {
    const SystemModel& model = map.model();
    const Vec offset = model.output(Vec::Zero(model.n));
    const Vec target = xi1 - offset;
    if (map.conservative()) {
        // x1 = M^{-1} B Gamma^{-1} xi1 + lambda^{-1} V eta1
        const auto f = map.frame(map.q0());
        return f.input_gain * target + f.V * eta1 / map.lambda();
    }
    // [H; E]^{-1} = [H^T (H H^T)^{-1} - V (E V)^{-1} E H^T (H H^T)^{-1},  V (E V)^{-1}]
    const Mat h = jacobian_output(model, map.q0());
    const Mat v = orthonormal_kernel(h);
    const Mat& e = map.E();
    const Mat h_right = h.transpose() * (h * h.transpose()).ldlt().solve(Mat::Identity(model.m, model.m));
    const Mat ev_inv = (e * v).partialPivLu().inverse();
    return (h_right - v * ev_inv * e * h_right) * target + v * ev_inv * eta1;
}

Vec recover_x1_newton(const DecouplingMap& map, const Vec& xi1, const Vec& eta1, const Vec& guess) {
    const SystemModel& model = map.model();
    Vec target(model.n);
    target << xi1, eta1;
    const double tol = 1e-12 * std::max(1.0, target.norm());

    auto residual = [&](const Vec& x) {
        Vec r(model.n);
        r << model.output(x), map.phi1(x);
        return Vec(r - target);
    };

    Vec x = guess;
    Vec r = residual(x);
    double rnorm = r.norm();
    for (int iter = 0; iter < 50; ++iter) {
        if (!std::isfinite(rnorm)) break;
        if (rnorm <= tol) return x;
        Mat jac(model.n, model.n);
        jac << jacobian_output(model, x), map.phi1_jacobian(x);
        if (!singular_values(jac).full_rank())
            throw Error(ErrorKind::NewtonDivergence, "singular Jacobian of (h, phi1)");
        const Vec step = jac.partialPivLu().solve(r);

        double alpha = 1.0;
        bool accepted = false;
        while (alpha >= 1.0 / 1024.0) {
            const Vec trial = x - alpha * step;
            if (!model.in_domain(trial))
                throw Error(ErrorKind::OutOfDomain, "Newton iterate left the model domain");
            const Vec rt = residual(trial);
            const double rt_norm = rt.norm();
            if (std::isfinite(rt_norm) && rt_norm < rnorm) {
                x = trial;
                r = rt;
                rnorm = rt_norm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (rnorm <= 1e3 * tol) return x;
            break;
        }
    }
    if (rnorm <= tol) return x;
    std::ostringstream os;
    os << "residual " << rnorm << " after 50 iterations";
    throw Error(ErrorKind::NewtonDivergence, os.str());
}

}  // namespace

Vec recover_x1(const DecouplingMap& map, const Vec& xi1, const Vec& eta1, const std::optional<Vec>& guess) {
    const SystemModel& model = map.model();
    if (xi1.size() != model.m || eta1.size() != model.n - model.m)
        throw Error(ErrorKind::InvalidArgument, "coordinate vectors have wrong length");
    Vec x = model.linear_output ? recover_x1_linear(map, xi1, eta1)
                                : recover_x1_newton(map, xi1, eta1, guess.value_or(map.q0()));
    if (!x.allFinite()) throw Error(ErrorKind::NonFiniteValue, "recovered position is not finite");
    if (!model.in_domain(x)) throw Error(ErrorKind::OutOfDomain, "recovered position outside model domain");
    return x;
}

LeftTransformationReport left_transformation_check(const DecouplingMap& map, const KernelBasisFn& alt_V,
                                                   const std::vector<Vec>& sample_qs) {
    LeftTransformationReport report;
    for (const Vec& q : sample_qs) {
        LeftTransformationSample s;
        s.q = q;
        try {
            const auto f = map.frame(q);
            const Mat alt = alt_V(q);
            s.R = f.phi2 * alt;
            const Mat complement = Mat::Identity(map.model().n, map.model().n) - f.input_gain * f.H;
            const Mat phi2_alt = pseudo_inverse_full_column_rank(alt) * complement;
            s.residual = (phi2_alt - s.R.partialPivLu().solve(f.phi2)).cwiseAbs().maxCoeff();
            s.pass = s.residual <= 1e-9;
        } catch (const Error&) {
            s.residual = std::numeric_limits<double>::infinity();
        }
        report.pass = report.pass && s.pass;
        report.samples.push_back(std::move(s));
    }
    return report;
}

}  // namespace idyn
