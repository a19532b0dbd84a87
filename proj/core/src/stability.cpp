#include "idyn/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <thread>

#include "idyn/sampling.hpp"

namespace idyn {

namespace {

constexpr double kSignSlack = 1e-9;
constexpr double kGradientTolerance = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct SampleEval {
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    std::vector<std::pair<std::string, Vec>> point;
};

using SampleFn = std::function<SampleEval(std::size_t index)>;

struct Reduction {
    double worst = kInf;
    std::size_t index = 0;
};

// Minimum margin over [0, count) with ties broken by the smallest index, so the
// result does not depend on the number of workers.
Reduction parallel_min(std::size_t count, int threads, const std::function<double(std::size_t)>& margin) {
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
    std::vector<Reduction> partial(workers);
    auto run = [&](std::size_t w) {
        const std::size_t begin = count * w / workers;
        const std::size_t end = count * (w + 1) / workers;
        Reduction local;
        local.index = begin;
        for (std::size_t i = begin; i < end; ++i) {
            double m;
            try {
                m = margin(i);
            } catch (const std::exception&) {
                m = -kInf;
            }
            if (std::isnan(m)) m = -kInf;
            if (m < local.worst) {
                local.worst = m;
                local.index = i;
            }
        }
        partial[w] = local;
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
        for (auto& t : pool) t.join();
    }
    Reduction best;
    for (const auto& r : partial) {
        if (r.worst < best.worst || (r.worst == best.worst && r.index < best.index)) best = r;
    }
    return best;
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::uint64_t tag_seed(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = seed;
    for (char c : tag) h = sampling::splitmix64(h ^ static_cast<unsigned char>(c));
    return h;
}

ConditionVerdict run_condition(const std::string& name, const std::string& relation, std::size_t count,
                               int threads, const SampleFn& sample) {
    ConditionVerdict verdict;
    verdict.name = name;
    verdict.relation = relation;
    verdict.samples = count;
    const Reduction r = parallel_min(count, threads, [&](std::size_t i) { return sample(i).margin; });
    verdict.worst_margin = count == 0 ? 0.0 : r.worst;
    verdict.pass = count == 0 || r.worst >= -kSignSlack;
    if (!verdict.pass) {
        Witness w;
        try {
            SampleEval e = sample(r.index);
            w.point = std::move(e.point);
            w.lhs = e.lhs;
            w.rhs = e.rhs;
        } catch (const std::exception&) {
            w.lhs = std::numeric_limits<double>::quiet_NaN();
            w.rhs = std::numeric_limits<double>::quiet_NaN();
        }
        verdict.counterexample = std::move(w);
    }
    return verdict;
}

// Random point of the annulus / ball with a share of samples pushed onto the
// boundaries of the sampling box.
Vec annulus_point(std::mt19937_64& rng, int dim, double r_min, double r_max, std::size_t index) {
    Vec z = sampling::in_annulus(rng, dim, r_min, r_max);
    const double nz = z.norm();
    if (nz == 0.0) return z;
    switch (index % 8) {
        case 0:
            return z * (r_max / nz);
        case 1:
            return z * (r_min * (1.0 + 1e-9) + 1e-12) / nz;
        default:
            return z;
    }
}

Vec ball_point(std::mt19937_64& rng, int dim, double radius, std::size_t index, std::size_t salt) {
    Vec w = sampling::in_ball(rng, dim, radius);
    switch ((index / 8 + salt) % 5) {
        case 0:
            return Vec::Zero(dim);
        case 1: {
            const double nw = w.norm();
            return nw > 0.0 ? Vec(w * (radius / nw)) : w;
        }
        default:
            return w;
    }
}

void require_vk(const StabilityEnvelope& env) {
    if (!env.VK) throw Error(ErrorKind::InvalidArgument, "stability envelope has no VK potential");
}

}  // namespace

Vec StabilityEnvelope::vk_gradient(const Vec& z) const {
    if (VK_grad) return VK_grad(z);
    require_vk(*this);
    const Mat jac = central_difference_jacobian([this](const Vec& x) { return Vec::Constant(1, VK(x)); }, z);
    return jac.row(0).transpose();
}

double StabilityCertificate::comparison_radius1() const { return std::max(E1 / eps1, gamma1); }
double StabilityCertificate::comparison_radius2() const { return std::max(E2 / eps2, gamma2); }
double StabilityCertificate::region_radius1() const {
    return std::max(z1_plus * std::max(1.0, lambda), comparison_radius1());
}
double StabilityCertificate::region_radius2() const { return std::max(z2_plus, comparison_radius2()); }

StabilityCertificate compute_constants(const ConstantClassModel& ccm, const StabilityEnvelope& env, double r1,
                                       double r2, double lambda, double q_weight, std::size_t ball_points) {
    if (!(r1 >= 0.0) || !(r2 >= 0.0))
        throw Error(ErrorKind::InfeasibleParameters, "output radii r1, r2 must be nonnegative");
    if (!(env.kappa > 0.0) || !(env.delta > 0.0) || !(env.d_env > 0.0))
        throw Error(ErrorKind::InfeasibleParameters, "envelope constants kappa, delta, d must be positive");

    StabilityCertificate c;
    c.r1 = r1;
    c.r2 = r2;
    c.lambda = lambda;
    c.q_weight = q_weight;
    c.kappa = env.kappa;
    c.delta = env.delta;
    c.d_env = env.d_env;
    c.z1_plus = env.z1_plus;
    c.z2_plus = env.z2_plus;
    c.tau = spectral_norm(ccm.Theta);
    c.mu = spectral_norm(ccm.input_gain);

    const double lambda_max = 2.0 * env.kappa / (c.tau * c.tau);
    if (!(lambda > 0.0) || !(lambda < lambda_max))
        throw Error(ErrorKind::InfeasibleParameters,
                    "lambda = " + num(lambda) + " outside (0, " + num(lambda_max) + ")");
    const double q_max = 2.0 * env.delta / (env.d_env * env.d_env + 2.0 * lambda);
    if (!(q_weight > 0.0) || !(q_weight < q_max))
        throw Error(ErrorKind::InfeasibleParameters,
                    "q = " + num(q_weight) + " outside (0, " + num(q_max) + ")");

    const int m = ccm.m();
    c.ball_points = ball_points;
    auto ball_max = [&](const StabilityEnvelope::Bound& g, double radius) {
        if (!g) return 0.0;
        double best = 0.0;
        for (const Vec& z : sampling::ball_cover(m, radius, ball_points)) {
            const double v = g(ccm.input_gain * z);
            if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, "envelope bound is not finite");
            best = std::max(best, v);
        }
        return best;
    };
    c.K_tilde = ball_max(env.g1, r1);
    c.D_tilde = ball_max(env.g2, r2);
    c.C3_tilde = ball_max(env.g3, r1);
    c.C4_tilde = ball_max(env.g4, r2);

    c.eps1 = q_weight * (env.kappa / lambda - c.tau * c.tau / 2.0);
    c.eps2 = env.delta - q_weight * (env.d_env * env.d_env / 2.0 + lambda);
    c.E1 = q_weight * c.tau * (c.K_tilde + env.d_env * c.mu * r2);
    c.E2 = c.tau * (c.K_tilde + c.D_tilde);
    c.gamma1 = lambda * c.tau * c.C3_tilde;
    c.gamma2 = c.tau * (c.C4_tilde + c.mu * r2);
    return c;
}

ConditionsReport verify_conditions(const ConstantClassModel& ccm, const StabilityEnvelope& env,
                                   const SamplerConfig& config) {
    const int n = ccm.n();
    const int k = n - ccm.m();
    const Mat& V = ccm.V;
    const Mat& Th = ccm.Theta;
    const double w_max =
        config.w_max > 0.0 ? config.w_max : 10.0 * std::max(env.z1_plus, env.z2_plus);
    const double z_max = std::max(config.z_max, std::max(env.z1_plus, env.z2_plus));
    const std::size_t N = config.samples;
    const int threads = sampling::thread_count(config.threads);

    ConditionsReport report;
    report.z1_min = env.z1_plus;
    report.z2_min = env.z2_plus;
    report.z_max = z_max;
    report.w_max = w_max;
    report.samples_per_condition = N;
    report.seed = config.seed;

    auto rng_for = [&](const std::string& tag, std::size_t i) {
        return sampling::point_rng(tag_seed(config.seed, tag), i);
    };
    auto z1_at = [&](std::mt19937_64& rng, std::size_t i) { return annulus_point(rng, k, env.z1_plus, z_max, i); };
    auto z2_at = [&](std::mt19937_64& rng, std::size_t i) { return annulus_point(rng, k, env.z2_plus, z_max, i); };
    auto vec_at = [&](std::mt19937_64& rng, std::size_t i, std::size_t salt) {
        return ball_point(rng, n, w_max, i, salt);
    };
    auto add = [&](ConditionVerdict v) {
        if (!v.informational) report.pass = report.pass && v.pass;
        report.conditions.push_back(std::move(v));
    };
    auto C = [&](const Vec& x1, const Vec& x2) { return ccm.coriolis(x1, x2); };
    auto b = [](const StabilityEnvelope::Bound& f, const Vec& x) { return StabilityEnvelope::eval(f, x); };

    if (env.VK) {
        add(run_condition("K_conservative", "|VK'(z1) - (Theta K(V z1))^T| <= 1e-6", N, threads,
                          [&](std::size_t i) {
                              auto rng = rng_for("K_conservative", i);
                              const Vec z = z1_at(rng, i);
                              const Vec force = Th * ccm.K(V * z);
                              SampleEval e;
                              e.lhs = (env.vk_gradient(z) - force).norm();
                              e.rhs = kGradientTolerance;
                              e.margin = e.rhs - e.lhs + kSignSlack;
                              e.point = {{"z1", z}};
                              return e;
                          }));
        if (env.VK_grad) {
            add(run_condition("VK_gradient", "|VK_grad(z1) - finite differences of VK| <= 1e-6", N, threads,
                              [&](std::size_t i) {
                                  auto rng = rng_for("VK_gradient", i);
                                  const Vec z = z1_at(rng, i);
                                  const Mat fd = central_difference_jacobian(
                                      [&](const Vec& x) { return Vec::Constant(1, env.VK(x)); }, z);
                                  SampleEval e;
                                  e.lhs = (env.VK_grad(z) - fd.row(0).transpose()).norm();
                                  e.rhs = kGradientTolerance;
                                  e.margin = e.rhs - e.lhs + kSignSlack;
                                  e.point = {{"z1", z}};
                                  return e;
                              }));
        }
    } else {
        ConditionVerdict missing;
        missing.name = "K_conservative";
        missing.relation = "potential VK supplied";
        missing.pass = false;
        add(std::move(missing));
    }

    add(run_condition("K_increment", "|K(V z1) - K(V z1 + w)| <= g1(w)", N, threads, [&](std::size_t i) {
        auto rng = rng_for("K_increment", i);
        const Vec z = z1_at(rng, i);
        const Vec w = vec_at(rng, i, 0);
        SampleEval e;
        e.lhs = (ccm.K(V * z) - ccm.K(V * z + w)).norm();
        e.rhs = b(env.g1, w);
        e.margin = e.rhs - e.lhs;
        e.point = {{"z1", z}, {"w", w}};
        return e;
    }));
    add(run_condition("K_coercive", "z1^T Theta K(V z1) >= kappa |z1|^2", N, threads, [&](std::size_t i) {
        auto rng = rng_for("K_coercive", i);
        const Vec z = z1_at(rng, i);
        SampleEval e;
        e.lhs = z.dot(Th * ccm.K(V * z));
        e.rhs = env.kappa * z.squaredNorm();
        e.margin = e.lhs - e.rhs;
        e.point = {{"z1", z}};
        return e;
    }));
    add(run_condition("D_increment", "|D(V z2) - D(V z2 + w)| <= g2(w)", N, threads, [&](std::size_t i) {
        auto rng = rng_for("D_increment", i);
        const Vec z = z2_at(rng, i);
        const Vec w = vec_at(rng, i, 0);
        SampleEval e;
        e.lhs = (ccm.D(V * z) - ccm.D(V * z + w)).norm();
        e.rhs = b(env.g2, w);
        e.margin = e.rhs - e.lhs;
        e.point = {{"z2", z}, {"w", w}};
        return e;
    }));
    add(run_condition("D_coercive", "z2^T Theta D(V z2) >= delta |z2|^2", N, threads, [&](std::size_t i) {
        auto rng = rng_for("D_coercive", i);
        const Vec z = z2_at(rng, i);
        SampleEval e;
        e.lhs = z.dot(Th * ccm.D(V * z));
        e.rhs = env.delta * z.squaredNorm();
        e.margin = e.lhs - e.rhs;
        e.point = {{"z2", z}};
        return e;
    }));
    add(run_condition("D_growth", "|D(V z2)| <= d |z2|", N, threads, [&](std::size_t i) {
        auto rng = rng_for("D_growth", i);
        const Vec z = z2_at(rng, i);
        SampleEval e;
        e.lhs = ccm.D(V * z).norm();
        e.rhs = env.d_env * z.norm();
        e.margin = e.rhs - e.lhs;
        e.point = {{"z2", z}};
        return e;
    }));
    add(run_condition("C_increment_position", "|(C(V z1, w) - C(V z1 + v, w)) w| <= g3(v) a3(w)", N, threads,
                      [&](std::size_t i) {
                          auto rng = rng_for("C_increment_position", i);
                          const Vec z = z1_at(rng, i);
                          const Vec v = vec_at(rng, i, 1);
                          const Vec w = vec_at(rng, i, 3);
                          SampleEval e;
                          e.lhs = ((C(V * z, w) - C(V * z + v, w)) * w).norm();
                          e.rhs = b(env.g3, v) * b(env.a3, w);
                          e.margin = e.rhs - e.lhs;
                          e.point = {{"z1", z}, {"v", v}, {"w", w}};
                          return e;
                      }));
    add(run_condition("C_coercive_position", "z1^T Theta C(V z1, w) w >= |z1|^2 b3(w)", N, threads,
                      [&](std::size_t i) {
                          auto rng = rng_for("C_coercive_position", i);
                          const Vec z = z1_at(rng, i);
                          const Vec w = vec_at(rng, i, 0);
                          SampleEval e;
                          e.lhs = z.dot(Th * C(V * z, w) * w);
                          e.rhs = z.squaredNorm() * b(env.b3, w);
                          e.margin = e.lhs - e.rhs;
                          e.point = {{"z1", z}, {"w", w}};
                          return e;
                      }));
    add(run_condition("C_increment_velocity", "|(C(v, V z2) - C(v, V z2 + w))(V z2 + w)| <= g4(w) a4(v) |z2|", N,
                      threads, [&](std::size_t i) {
                          auto rng = rng_for("C_increment_velocity", i);
                          const Vec z = z2_at(rng, i);
                          const Vec v = vec_at(rng, i, 1);
                          const Vec w = vec_at(rng, i, 3);
                          const Vec x = V * z;
                          SampleEval e;
                          e.lhs = ((C(v, x) - C(v, x + w)) * (x + w)).norm();
                          e.rhs = b(env.g4, w) * b(env.a4, v) * z.norm();
                          e.margin = e.rhs - e.lhs;
                          e.point = {{"z2", z}, {"v", v}, {"w", w}};
                          return e;
                      }));
    add(run_condition("C_coercive_velocity", "z2^T Theta C(v, V z2) V z2 >= b4(v) |z2| |V z2|^2", N, threads,
                      [&](std::size_t i) {
                          auto rng = rng_for("C_coercive_velocity", i);
                          const Vec z = z2_at(rng, i);
                          const Vec v = vec_at(rng, i, 0);
                          const Vec x = V * z;
                          SampleEval e;
                          e.lhs = z.dot(Th * C(v, x) * x);
                          e.rhs = b(env.b4, v) * z.norm() * x.squaredNorm();
                          e.margin = e.lhs - e.rhs;
                          e.point = {{"z2", z}, {"v", v}};
                          return e;
                      }));
    add(run_condition("C_growth", "|C(v, V z2) w| <= a4(v) |z2| |w|", N, threads, [&](std::size_t i) {
        auto rng = rng_for("C_growth", i);
        const Vec z = z2_at(rng, i);
        const Vec v = vec_at(rng, i, 1);
        const Vec w = vec_at(rng, i, 3);
        SampleEval e;
        e.lhs = (C(v, V * z) * w).norm();
        e.rhs = b(env.a4, v) * z.norm() * w.norm();
        e.margin = e.rhs - e.lhs;
        e.point = {{"z2", z}, {"v", v}, {"w", w}};
        return e;
    }));
    add(run_condition("a3_le_b3", "a3(x) <= b3(x)", N, threads, [&](std::size_t i) {
        auto rng = rng_for("a3_le_b3", i);
        const Vec x = vec_at(rng, i, 0);
        SampleEval e;
        e.lhs = b(env.a3, x);
        e.rhs = b(env.b3, x);
        e.margin = e.rhs - e.lhs;
        e.point = {{"x", x}};
        return e;
    }));
    add(run_condition("a4_le_b4", "a4(x) <= b4(x)", N, threads, [&](std::size_t i) {
        auto rng = rng_for("a4_le_b4", i);
        const Vec x = vec_at(rng, i, 0);
        SampleEval e;
        e.lhs = b(env.a4, x);
        e.rhs = b(env.b4, x);
        e.margin = e.rhs - e.lhs;
        e.point = {{"x", x}};
        return e;
    }));

    if (env.VK) {
        // Heuristic: VK increases along every sampled ray over the outer half of the box.
        const std::size_t rays = k == 1 ? 2 : 64;
        const std::vector<Vec> dirs = sampling::sphere_directions(k, rays);
        constexpr int kSteps = 64;
        const double r0 = env.z1_plus * (1.0 + 1e-6) + 1e-9;
        ConditionVerdict radial = run_condition(
            "VK_radially_unbounded", "VK nondecreasing along rays beyond mid radius", dirs.size(), 1,
            [&](std::size_t i) {
                SampleEval e;
                e.margin = kInf;
                double prev = 0.0;
                for (int s = kSteps / 2; s <= kSteps; ++s) {
                    const double r = r0 + (z_max - r0) * s / kSteps;
                    const Vec z = dirs[i] * r;
                    if (!env.vk_defined(z)) continue;
                    const double val = env.VK(z);
                    if (s > kSteps / 2) e.margin = std::min(e.margin, val - prev);
                    prev = val;
                }
                e.lhs = e.margin;
                e.point = {{"direction", dirs[i]}};
                return e;
            });
        radial.informational = true;
        add(std::move(radial));
    }
    return report;
}

double lyapunov_value(const StabilityCertificate& cert, const StabilityEnvelope& env, const Vec& eta1,
                      const Vec& eta2) {
    require_vk(env);
    const Vec z = eta1 / cert.lambda;
    if (!env.vk_defined(z)) throw Error(ErrorKind::OutOfDomain, "eta1 / lambda outside the domain of VK");
    return 0.5 * eta2.squaredNorm() + cert.q_weight * eta1.dot(eta2) + env.VK(z);
}

double lyapunov_derivative(const StabilityCertificate& cert, const StabilityEnvelope& env,
                           const ConstantClassModel& ccm, const Vec& eta1, const Vec& eta2, const Vec& y1,
                           const Vec& y2) {
    const Vec z = eta1 / cert.lambda;
    if (!env.vk_defined(z)) throw Error(ErrorKind::OutOfDomain, "eta1 / lambda outside the domain of VK");
    const Vec grad1 = cert.q_weight * eta2 + env.vk_gradient(z) / cert.lambda;
    const Vec grad2 = eta2 + cert.q_weight * eta1;
    const Vec field = constant_vector_field(ccm, cert.lambda, eta1, eta2, y1, y2);
    const Eigen::Index k = eta1.size();
    return grad1.dot(field.head(k)) + grad2.dot(field.tail(k));
}

CertificateVerdict certificate_check(const StabilityCertificate& cert, const StabilityEnvelope& env,
                                     const ConstantClassModel& ccm, const SamplerConfig& config) {
    const int k = ccm.n() - ccm.m();
    const int m = ccm.m();
    CertificateVerdict verdict;
    verdict.samples = config.samples;
    verdict.slack = kSignSlack;
    verdict.eta1_min = cert.region_radius1();
    verdict.eta2_min = cert.region_radius2();
    const double inner = std::max(verdict.eta1_min, verdict.eta2_min);
    verdict.z_max = config.z_max > inner ? config.z_max : 2.0 * inner + 1.0;
    const std::uint64_t seed = tag_seed(config.seed, "certificate");

    auto sample = [&](std::size_t i) {
        auto rng = sampling::point_rng(seed, i);
        SampleEval e;
        const Vec eta1 = annulus_point(rng, k, verdict.eta1_min, verdict.z_max, i);
        const Vec eta2 = annulus_point(rng, k, verdict.eta2_min, verdict.z_max, i / 2);
        const Vec y1 = ball_point(rng, m, cert.r1, i, 2);
        const Vec y2 = ball_point(rng, m, cert.r2, i, 4);
        e.lhs = lyapunov_derivative(cert, env, ccm, eta1, eta2, y1, y2);
        e.rhs = 0.0;
        e.margin = -e.lhs;
        e.point = {{"eta1", eta1}, {"eta2", eta2}, {"y1", y1}, {"y2", y2}};
        return e;
    };
    const Reduction r = parallel_min(config.samples, sampling::thread_count(config.threads),
                                     [&](std::size_t i) { return sample(i).margin; });
    if (config.samples == 0) return verdict;
    verdict.worst_value = -r.worst;
    verdict.pass = verdict.worst_value <= kSignSlack;
    try {
        SampleEval e = sample(r.index);
        verdict.worst.point = std::move(e.point);
        verdict.worst.lhs = e.lhs;
        verdict.worst.rhs = 0.0;
    } catch (const std::exception&) {
        verdict.worst.lhs = std::numeric_limits<double>::quiet_NaN();
    }
    return verdict;
}

DerivativeTermDiagnostic derivative_term_bounds(const StabilityCertificate& cert, const StabilityEnvelope& env,
                                        const ConstantClassModel& ccm, const Vec& eta1, const Vec& eta2,
                                        const Vec& y1, const Vec& y2) {
    const Mat& Th = ccm.Theta;
    const Mat& Mg = ccm.input_gain;
    const double q = cert.q_weight;
    const double lam = cert.lambda;
    const double tau = cert.tau;
    const double n1 = eta1.norm();
    const double n2 = eta2.norm();

    const Vec x1_base = ccm.V * eta1 / lam;
    const Vec x1 = Mg * y1 + x1_base;
    const Vec x2 = Mg * y2 + ccm.V * eta2;
    const Vec Cx2 = ccm.coriolis(x1, x2) * x2;
    const Vec Kx1 = ccm.K(x1);
    const Vec Dx2 = ccm.D(x2);
    const double a3 = StabilityEnvelope::eval(env.a3, x2);
    const double a4 = StabilityEnvelope::eval(env.a4, x1);

    DerivativeTermDiagnostic d;
    d.steps[0] = {"i", eta2.dot(Th * (ccm.K(x1_base) - Kx1)), tau * cert.K_tilde * n2, true};
    d.steps[1] = {"ii", -eta2.dot(Th * Dx2), tau * cert.D_tilde * n2 - cert.delta * n2 * n2, true};
    d.steps[2] = {"iii", -q * eta1.dot(Th * Kx1), q * tau * cert.K_tilde * n1 - q * cert.kappa / lam * n1 * n1,
                  true};
    d.steps[3] = {"iv", -q * eta1.dot(Th * Dx2),
                  q * tau * cert.d_env * cert.mu * cert.r2 * n1 + q * tau * tau / 2.0 * n1 * n1 +
                      q * cert.d_env * cert.d_env / 2.0 * n2 * n2,
                  true};
    d.steps[4] = {"v", -q * eta1.dot(Th * Cx2), q / lam * (lam * tau * cert.C3_tilde - n1) * n1 * a3, true};
    d.steps[5] = {"vi", -eta2.dot(Th * Cx2), (tau * (cert.C4_tilde + cert.mu * cert.r2) - n2) * n2 * n2 * a4,
                  true};

    d.velocity_term = q * lam * n2 * n2;
    d.term_sum = d.velocity_term;
    d.assembled_bound = d.velocity_term;
    d.pass = true;
    for (auto& s : d.steps) {
        s.holds = s.term <= s.bound + kSignSlack;
        d.pass = d.pass && s.holds;
        d.term_sum += s.term;
        d.assembled_bound += s.bound;
    }
    d.derivative = lyapunov_derivative(cert, env, ccm, eta1, eta2, y1, y2);
    d.closed_form_bound = lie_derivative_bound(cert, n1, n2, a3, a4);
    return d;
}

double comparison_W(const StabilityCertificate& cert, double w1_norm, double w2_norm) {
    return -cert.eps1 * w1_norm * w1_norm + cert.E1 * w1_norm - cert.eps2 * w2_norm * w2_norm +
           cert.E2 * w2_norm;
}

double lie_derivative_bound(const StabilityCertificate& cert, double eta1_norm, double eta2_norm, double a3,
                            double a4) {
    return comparison_W(cert, eta1_norm, eta2_norm) -
           cert.q_weight / cert.lambda * (eta1_norm - cert.gamma1) * eta1_norm * a3 -
           (eta2_norm - cert.gamma2) * eta2_norm * eta2_norm * a4;
}

StateFunction make_lyapunov(const StabilityCertificate& cert, const StabilityEnvelope& env, int eta1_dim) {
    return [cert, env, eta1_dim](const Vec& zeta) {
        return lyapunov_value(cert, env, zeta.head(eta1_dim), zeta.tail(zeta.size() - eta1_dim));
    };
}

BoundednessReport boundedness_test(const InternalRhs& rhs, const OutputSignal& signal, const Vec& zeta0,
                                   double r3, double horizon, double dt, const StateFunction& lyapunov,
                                   const BoundednessOptions& options) {
    if (!(horizon > 0.0) || !(dt > 0.0))
        throw Error(ErrorKind::InvalidArgument, "horizon and dt must be positive");
    BoundednessReport report;
    report.horizon = {0.0, horizon};
    report.trajectory = integrate(rhs, zeta0, signal, report.horizon, dt);
    if (report.trajectory.error) {
        const auto& err = *report.trajectory.error;
        throw Error(err.kind == ErrorKind::NonFiniteValue ? ErrorKind::NonFiniteState : err.kind,
                    "integration stopped at t = " + num(err.time) + " (" + err.message + ")");
    }
    report.warnings = report.trajectory.warnings;
    const Eigen::Index dim = zeta0.size();
    for (const Vec& row : report.trajectory.states)
        report.sup_norm = std::max(report.sup_norm, row.head(dim).norm());

    report.r_tilde = std::max(zeta0.norm(), r3);
    report.eps_emp = 0.0;
    if (lyapunov) {
        const auto dirs = sampling::sphere_directions(static_cast<int>(dim), options.sphere_points);
        auto sphere_extrema = [&](double r, double& lo, double& hi) {
            lo = kInf;
            hi = -kInf;
            for (const Vec& u : dirs) {
                double v;
                try {
                    v = lyapunov(u * r);
                } catch (const Error&) {
                    continue;
                }
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        };
        double lo = 0.0;
        double hi = 0.0;
        sphere_extrema(report.r_tilde, lo, hi);
        report.level = hi;
        const double scale = std::max(report.r_tilde, 1.0);
        const double step = options.radial_step > 0.0 ? options.radial_step : 1e-3 * scale;
        const double r_end = report.r_tilde + options.radial_extent * scale;
        double last_inside = report.r_tilde;
        bool closed = false;
        double r_stop = report.r_tilde;
        for (double r = report.r_tilde + step; r <= r_end; r += step) {
            sphere_extrema(r, lo, hi);
            if (lo <= report.level) last_inside = r;
            r_stop = r;
            if (r - last_inside > scale) {
                closed = true;
                break;
            }
        }
        if (!closed && r_end - last_inside > scale) closed = true;
        if (closed) {
            report.eps_emp = last_inside - report.r_tilde + step;
        } else {
            report.eps_emp = kInf;
            report.warnings.push_back("sublevel set of V not enclosed within radius " + num(r_stop));
        }
    }
    report.bound = report.r_tilde + report.eps_emp;
    report.pass = report.sup_norm <= report.bound;
    return report;
}

}  // namespace idyn
