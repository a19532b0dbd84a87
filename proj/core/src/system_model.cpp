#include "idyn/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "idyn/errors.hpp"

namespace idyn {

namespace {

void require_finite(const Mat& a, const char* what) {
    if (!a.allFinite()) throw Error(ErrorKind::NonFiniteValue, std::string(what) + " is not finite");
}

void require_shape(const Mat& a, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (a.rows() != rows || a.cols() != cols) {
        std::ostringstream os;
        os << what << " has shape " << a.rows() << "x" << a.cols() << ", expected " << rows << "x"
           << cols;
        throw Error(ErrorKind::InvalidArgument, os.str());
    }
}

}  // namespace

double fd_step(double qi) noexcept { return std::max(1e-6, 1e-7 * (1.0 + std::abs(qi))); }

Mat central_difference_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x) {
    const Eigen::Index n = x.size();
    Mat jac;
    Vec xp = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = fd_step(x(j));
        const double hi = x(j) + h;
        const double lo = x(j) - h;
        xp(j) = hi;
        const Vec fp = fn(xp);
        xp(j) = lo;
        const Vec fm = fn(xp);
        xp(j) = x(j);
        if (!fp.allFinite() || !fm.allFinite())
            throw Error(ErrorKind::NonFiniteValue, "function is not finite on the difference stencil");
        if (j == 0) jac.resize(fp.size(), n);
        jac.col(j) = (fp - fm) / (hi - lo);
    }
    return jac;
}

Mat jacobian_output(const SystemModel& model, const Vec& q) {
    if (model.output_jac) {
        Mat jac = model.output_jac(q);
        require_shape(jac, model.m, model.n, "output Jacobian");
        require_finite(jac, "output Jacobian");
        return jac;
    }
    const Vec h0 = model.output(q);
    require_finite(h0, "output h(q)");
    Mat jac = central_difference_jacobian(model.output, q);
    require_shape(jac, model.m, model.n, "output Jacobian");
    return jac;
}

Mat directional_jacobian(const std::function<Mat(const Vec&)>& phi2, const Vec& q, const Vec& v) {
    return central_difference_jacobian([&](const Vec& x) -> Vec { return phi2(x) * v; }, q);
}

Mat eval_mass(const SystemModel& model, const Vec& q) {
    Mat mass = model.mass(q);
    require_shape(mass, model.n, model.n, "mass matrix");
    require_finite(mass, "mass matrix");
    return mass;
}

Mat eval_input_dist(const SystemModel& model, const Vec& q) {
    Mat b = model.input_dist(q);
    require_shape(b, model.n, model.m, "input distribution");
    require_finite(b, "input distribution");
    return b;
}

ModelCheckReport validate_model(const SystemModel& model, const std::vector<Vec>& sample_qs) {
    if (model.n <= 0 || model.m <= 0 || model.m > model.n)
        throw Error(ErrorKind::InvalidArgument, "model dimensions must satisfy 0 < m <= n");
    if (!model.mass || !model.forces || !model.input_dist || !model.output)
        throw Error(ErrorKind::InvalidArgument, "model is missing a required callback");

    ModelCheckReport report;
    for (const Vec& q : sample_qs) {
        ModelCheckSample s;
        s.q = q;
        s.in_domain = model.in_domain(q);
        try {
            const auto msv = singular_values(eval_mass(model, q));
            s.mass_smallest_sv = msv.smallest;
            s.mass_largest_sv = msv.largest;
            const auto bsv = singular_values(eval_input_dist(model, q));
            s.input_smallest_sv = bsv.smallest;
            const Vec h = model.output(q);
            if (h.size() != model.m) throw Error(ErrorKind::InvalidArgument, "output has wrong length");
            if (model.output_jac) {
                const Mat fd = central_difference_jacobian(model.output, q);
                s.output_jac_error = (jacobian_output(model, q) - fd).cwiseAbs().maxCoeff();
            }
            if (!s.in_domain) {
                s.pass = false;
                s.reason = "outside domain";
            } else if (!msv.full_rank()) {
                s.pass = false;
                s.reason = "mass matrix singular";
            } else if (!bsv.full_rank()) {
                s.pass = false;
                s.reason = "input distribution rank deficient";
            } else if (s.output_jac_error > 1e-6) {
                s.pass = false;
                s.reason = "analytic output Jacobian disagrees with finite differences";
            }
        } catch (const Error& e) {
            s.pass = false;
            s.reason = e.what();
        }
        report.pass = report.pass && s.pass;
        report.samples.push_back(std::move(s));
    }
    return report;
}

}  // namespace idyn
