#include "idyn/examples.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace idyn::examples {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

}  // namespace

void ManipulatorParams::validate() const {
    require(l > 0.0 && m_mass > 0.0 && s > 0.0 && c > 0.0 && d_damp > 0.0,
            "manipulator parameters l, m, s, c, d must be positive");
    require(s <= l, "manipulator measurement point s must not exceed l");
}

SystemModel manipulator_model(const ManipulatorParams& p) {
    p.validate();
    const double lm = p.l * p.l * p.m_mass;
    const double ratio = p.s / (p.s + p.l);
    const double singular_cos = 2.0 * p.l / (3.0 * p.s);

    SystemModel model;
    model.n = 2;
    model.m = 1;
    model.mass = [lm](const Vec& q) {
        const double cb = std::cos(q(1));
        Mat M(2, 2);
        M << 5.0 / 3.0 + cb, 1.0 / 3.0 + 0.5 * cb, 1.0 / 3.0 + 0.5 * cb, 1.0 / 3.0;
        return Mat(lm * M);
    };
    model.forces = [lm, p](const Vec& q, const Vec& v) {
        const double sb = std::sin(q(1));
        Vec f(2);
        f(0) = 0.5 * lm * v(1) * (2.0 * v(0) + v(1)) * sb;
        f(1) = -p.c * q(1) - p.d_damp * v(1) - 0.5 * lm * v(0) * v(0) * sb;
        return f;
    };
    model.input_dist = [](const Vec&) {
        Mat B(2, 1);
        B << 1.0, 0.0;
        return B;
    };
    model.output = [ratio](const Vec& q) { return Vec::Constant(1, q(0) + ratio * q(1)); };
    model.output_jac = [ratio](const Vec&) {
        Mat H(1, 2);
        H << 1.0, ratio;
        return H;
    };
    model.domain = [singular_cos](const Vec& q) {
        return std::abs(std::cos(q(1)) - singular_cos) > kManipulatorGuard;
    };
    model.linear_output = true;
    return model;
}

KernelBasisFn manipulator_joint_kernel_basis(const ManipulatorParams& p) {
    p.validate();
    return [p](const Vec& q) {
        const double R = (2.0 * p.l - 3.0 * p.s * std::cos(q(1))) / (6.0 * (p.s + p.l));
        Mat V(2, 1);
        V << -p.s / (p.s + p.l), 1.0;
        return Mat(V / R);
    };
}

DecouplingOptions manipulator_joint_options(const ManipulatorParams& p) {
    DecouplingOptions options;
    options.q0 = Vec::Zero(2);
    (*options.q0)(1) = 1.5707963267948966;
    options.conservative = false;
    options.kernel_basis = manipulator_joint_kernel_basis(p);
    Mat E(1, 2);
    E << 0.0, 1.0;
    options.E = E;
    return options;
}

std::pair<double, double> manipulator_internal_oracle(const ManipulatorParams& p, double eta1, double eta2,
                                                      double dy) {
    const double den = 2.0 * p.l - 3.0 * p.s * std::cos(eta1);
    if (std::abs(den) < 1e-9)
        throw Error(ErrorKind::DomainBoundary, "manipulator oracle evaluated at 2l - 3s cos(eta1) = 0");
    const double lm = p.l * p.l * p.m_mass;
    const double sn = std::sin(eta1);
    const double a = (3.0 * std::cos(eta1) + 2.0) * dy - 6.0 * eta2;
    const double b = (p.l + p.s) * dy - 3.0 * p.s * eta2;
    const double deta1 = -(p.s + p.l) * a / den;
    const double deta2 = 0.5 * sn * (a / den) * (2.0 * (p.l + p.s) * b / den) -
                         2.0 * sn * b * b / (den * den) - p.c / lm * eta1 +
                         p.d_damp / lm * (p.s + p.l) * a / den;
    return {deta1, deta2};
}

void MassOnCarParams::validate() const {
    require(m1 > 0.0 && m2 > 0.0 && m3 > 0.0, "mass-on-car masses must be positive");
    require(alpha > 0.0 && alpha < 1.5707963267948966, "mass-on-car ramp angle must lie in (0, pi/2)");
    require(k > 0.0 && d_spring > 0.0, "mass-on-car k and d must be positive");
    require(std::isfinite(damping_scale), "mass-on-car damping scale must be finite");
    require(lambda > 0.0, "mass-on-car lambda must be positive");
}

double MassOnCarParams::mu_c() const {
    const double sa = std::sin(alpha);
    return m2 + m3 * sa * sa;
}

double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double spring3(double x) noexcept {
    return std::abs(x) <= 1.0 ? sign(x) * std::sqrt(std::abs(x)) : 2.0 * x - sign(x);
}

double damper3(double x) noexcept { return std::abs(x) <= 1.0 ? sign(x) * x * x : 2.0 * x - sign(x); }

MassOnCar mass_on_car(const MassOnCarParams& p) {
    p.validate();
    const double ca = std::cos(p.alpha);
    Mat M(3, 3);
    M << p.m1 + p.m2 + p.m3, p.m2 + p.m3, p.m3 * ca,  //
        p.m2 + p.m3, p.m2 + p.m3, p.m3 * ca,          //
        p.m3 * ca, p.m3 * ca, p.m3;
    Mat B = Mat::Zero(3, 2);
    B(0, 0) = 1.0;
    B(1, 1) = 1.0;
    Mat H(2, 3);
    H << 1.0, 0.0, 0.0, 1.0, 1.0, 0.0;

    const double k = p.k;
    const double d = p.d_spring;
    const double scale = p.damping_scale;
    auto K = [k](const Vec& x) {
        Vec f(3);
        f << 0.0, k * x(1), spring3(x(2));
        return f;
    };
    auto D = [d, scale](const Vec& v) {
        Vec f(3);
        f << 0.0, d * v(1), damper3(v(2));
        return Vec(scale * f);
    };

    MassOnCar out;
    out.ccm = ConstantClassModel::build(M, B, H, K, D, {}, p.lambda);
    out.system = out.ccm.system();

    StabilityEnvelope& env = out.envelope;
    const double inv_m3 = 1.0 / p.m3;
    env.kappa = inv_m3;
    env.delta = inv_m3;
    env.d_env = d + 3.0;
    env.z1_plus = 1.0;
    env.z2_plus = 1.0;
    const double g1 = std::max(k, 2.0);
    const double g2 = std::max(d, 2.0);
    env.g1 = [g1](const Vec& w) { return g1 * w.norm(); };
    env.g2 = [g2](const Vec& w) { return g2 * w.norm(); };
    env.VK = [inv_m3](const Vec& z) {
        const double r = z.norm();
        return inv_m3 * (r * r - r);
    };
    env.VK_grad = [inv_m3](const Vec& z) {
        const double r = z.norm();
        return Vec(r > 0.0 ? Vec(inv_m3 * (2.0 * z - z / r)) : Vec(Vec::Zero(z.size())));
    };
    return out;
}

}  // namespace idyn::examples
