#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "idyn/decoupling.hpp"
#include "idyn/examples.hpp"
#include "oracles.hpp"

namespace {

using namespace idyn;
using idyn::testing::kPi;
namespace oracle = idyn::testing;

double max_abs(const Mat& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

/// M = I, B = [I_m; 0], h(q) = [I_m, 0] q.
SystemModel collocated(int n, int m) {
    SystemModel s;
    s.n = n;
    s.m = m;
    s.mass = [n](const Vec&) { return Mat(Mat::Identity(n, n)); };
    s.forces = [n](const Vec&, const Vec&) { return Vec(Vec::Zero(n)); };
    s.input_dist = [n, m](const Vec&) { return Mat(Mat::Identity(n, m)); };
    s.output = [m](const Vec& q) { return Vec(q.head(m)); };
    s.output_jac = [n, m](const Vec&) { return Mat(Mat::Identity(m, n)); };
    s.constant_structure = true;
    s.linear_output = true;
    return s;
}

Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

Vec random_arm_q(std::mt19937_64& rng, const examples::ManipulatorParams& p) {
    for (;;) {
        Vec q = oracle::uniform_vec(rng, 2, -kPi, kPi);
        if (oracle::arm_in_guarded_domain(p, q(1), 1e-2)) return q;
    }
}

TEST(HighGain, MassOnCarMatchesClosedForm) {
    examples::MassOnCarParams p;
    p.m1 = 2.0;
    p.m2 = 0.5;
    p.m3 = 3.0;
    p.alpha = 0.3;
    const auto car = examples::mass_on_car(p);
    const auto report = high_gain(car.system, Vec::Zero(3));
    EXPECT_TRUE(report.invertible);
    EXPECT_LT(max_abs(report.gamma - oracle::car_gamma(p)), 1e-14);
}

TEST(HighGain, ManipulatorAtRightAngle) {
    const auto model = examples::manipulator_model({});
    const auto report = high_gain(model, vec({0.0, kPi / 2}));
    ASSERT_EQ(report.gamma.rows(), 1);
    EXPECT_NEAR(report.gamma(0, 0), 0.5, 1e-14);
    EXPECT_NEAR(report.gamma(0, 0), oracle::arm_gamma({}, kPi / 2), 1e-14);
}

TEST(HighGain, CollocatedIdentity) {
    const auto report = high_gain(collocated(3, 2), Vec::Zero(3));
    EXPECT_LT(max_abs(report.gamma - Mat::Identity(2, 2)), 1e-15);
    EXPECT_TRUE(report.invertible);
}

TEST(RelativeDegree, MassOnCarPasses) {
    const auto car = examples::mass_on_car({});
    std::mt19937_64 rng(5);
    std::vector<Vec> qs;
    for (int i = 0; i < 20; ++i) qs.push_back(oracle::uniform_vec(rng, 3, -10, 10));
    const auto report = check_relative_degree(car.system, qs);
    EXPECT_TRUE(report.pass);
    for (const auto& s : report.samples) EXPECT_EQ(s.lgh_norm, 0.0);
}

TEST(RelativeDegree, ManipulatorFailsOnSingularSet) {
    examples::ManipulatorParams p{1.0, 1.0, 1.0, 1.0, 1.0};
    const double beta_singular = std::acos(2.0 / 3.0);
    const auto report = check_relative_degree(examples::manipulator_model(p),
                                              {vec({0.0, 0.3}), vec({0.0, beta_singular}), vec({0.0, 2.0})});
    EXPECT_FALSE(report.pass);
    ASSERT_EQ(report.samples.size(), 3u);
    EXPECT_TRUE(report.samples[0].pass);
    EXPECT_FALSE(report.samples[1].pass);
    EXPECT_FALSE(report.samples[1].reason.empty());
    EXPECT_TRUE(report.samples[2].pass);
}

TEST(RelativeDegree, SquareIdentityPasses) {
    const auto report = check_relative_degree(collocated(2, 2), {Vec::Zero(2), Vec::Ones(2)});
    EXPECT_TRUE(report.pass);
    EXPECT_NEAR(report.samples[0].smallest_sv, 1.0, 1e-15);
}

TEST(KernelBasis, MassOnCarIsThirdAxis) {
    const auto car = examples::mass_on_car({});
    const Mat V = kernel_basis(car.system, Vec::Zero(3));
    EXPECT_LT(max_abs(V - vec({0, 0, 1})), 1e-14);
}

TEST(KernelBasis, ManipulatorNormalised) {
    const Mat V = kernel_basis(examples::manipulator_model({}), vec({0.2, 0.4}));
    const Vec expected = vec({-1.0 / 3.0, 1.0}).normalized();
    EXPECT_LT(max_abs(V - expected), 1e-14);
    EXPECT_NEAR(V(0, 0), -0.31622776601683794, 1e-14);
    EXPECT_NEAR(V(1, 0), 0.9486832980505138, 1e-14);
}

TEST(KernelBasis, CollocatedComplement) {
    const Mat V = kernel_basis(collocated(4, 2), Vec::Zero(4));
    Mat expected = Mat::Zero(4, 2);
    expected.bottomRows(2) = Mat::Identity(2, 2);
    EXPECT_LT(max_abs(V - expected), 1e-14);
}

TEST(KernelBasis, RankDeficientOutputThrows) {
    auto model = collocated(3, 2);
    model.output_jac = [](const Vec&) {
        Mat H(2, 3);
        H << 1, 0, 0, 2, 0, 0;
        return H;
    };
    try {
        kernel_basis(model, Vec::Zero(3));
        FAIL() << "expected RankDeficientOutput";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::RankDeficientOutput);
    }
}

TEST(KernelBasis, OrthonormalAndAnnihilated) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 20; ++i) {
        const Mat H = Mat::NullaryExpr(2, 5, [&] { return oracle::uniform(rng, -1, 1); });
        const Mat V = orthonormal_kernel(H);
        ASSERT_EQ(V.cols(), 3);
        EXPECT_LT(max_abs(V.transpose() * V - Mat::Identity(3, 3)), 1e-10);
        EXPECT_LT(max_abs(H * V), 1e-10);
    }
}

TEST(SelectE, Examples) {
    const auto car = examples::mass_on_car({});
    EXPECT_EQ(select_E(car.system, Vec::Zero(3)), vec({0, 0, 1}).transpose());
    const Mat arm_E = select_E(examples::manipulator_model({}), vec({0.0, kPi / 2}));
    EXPECT_EQ(arm_E, vec({0, 1}).transpose());
    Mat expected = Mat::Zero(2, 4);
    expected(0, 2) = 1.0;
    expected(1, 3) = 1.0;
    EXPECT_EQ(select_E(collocated(4, 2), Vec::Zero(4)), expected);
}

TEST(SelectE, MassOnCarUniqueInvertibleChoice) {
    const Mat H = (Mat(2, 3) << 1, 0, 0, 1, 1, 0).finished();
    int invertible = 0;
    for (int j = 0; j < 3; ++j) {
        Mat stacked(3, 3);
        stacked.topRows(2) = H;
        stacked.row(2) = Mat::Identity(3, 3).row(j);
        if (std::abs(stacked.determinant()) > 1e-12) {
            ++invertible;
            EXPECT_EQ(j, 2);
        }
    }
    EXPECT_EQ(invertible, 1);
}

TEST(Phi2, MassOnCarRow) {
    examples::MassOnCarParams p;
    p.alpha = 0.6;
    p.m1 = 1.7;
    p.m3 = 0.4;
    const auto car = examples::mass_on_car(p);
    const DecouplingMap map(car.system);
    EXPECT_LT(max_abs(phi2(map, Vec::Zero(3)) - oracle::car_phi2(p)), 1e-13);
}

TEST(Phi2, ManipulatorJointAndOrthonormalRelatedByR) {
    const examples::ManipulatorParams p;
    const Vec q = vec({0.0, kPi / 2});
    const DecouplingMap joint(examples::manipulator_model(p), examples::manipulator_joint_options(p));
    const Mat expected = oracle::arm_phi2_joint(kPi / 2);
    EXPECT_LT(max_abs(phi2(joint, q) - expected), 1e-14);
    EXPECT_NEAR(expected(0, 0), 1.0 / 3.0, 1e-15);

    const DecouplingMap ortho(examples::manipulator_model(p));
    const Mat V_joint = examples::manipulator_joint_kernel_basis(p)(q);
    const double R = (phi2(ortho, q) * V_joint)(0, 0);
    EXPECT_LT(max_abs(phi2(ortho, q) - R * expected), 1e-14);
}

TEST(Phi2, CollocatedProjector) {
    const DecouplingMap map(collocated(4, 1));
    Mat expected = Mat::Zero(3, 4);
    expected.rightCols(3) = Mat::Identity(3, 3);
    EXPECT_LT(max_abs(phi2(map, Vec::Zero(4)) - expected), 1e-15);
}

TEST(Phi2, IdentitiesOnManipulatorDomain) {
    const examples::ManipulatorParams p;
    const auto model = examples::manipulator_model(p);
    for (const auto& options : {DecouplingOptions{}, examples::manipulator_joint_options(p)}) {
        const DecouplingMap map(model, options);
        std::mt19937_64 rng(23);
        for (int i = 0; i < 200; ++i) {
            const Vec q = random_arm_q(rng, p);
            const auto fr = map.frame(q);
            const Mat B = model.input_dist(q);
            EXPECT_LT(max_abs(fr.phi2 * fr.mass.inverse() * B), 1e-11);
            EXPECT_LT(max_abs(fr.phi2 * fr.V - Mat::Identity(1, 1)), 1e-10);
            Mat top(2, 2), right(2, 2);
            top << fr.H, fr.phi2;
            right << fr.input_gain, fr.V;
            EXPECT_LT(max_abs(top * right - Mat::Identity(2, 2)), 1e-9);
        }
    }
}

TEST(ForwardTransform, MassOnCarConservative) {
    const examples::MassOnCarParams p;
    const auto car = examples::mass_on_car(p);
    DecouplingOptions opt;
    opt.lambda = 1.0;
    const DecouplingMap map(car.system, opt);
    ASSERT_TRUE(map.conservative());
    const auto d = forward_transform(map, {vec({1, 2, 3}), Vec::Zero(3)});
    EXPECT_LT(max_abs(d.xi1 - vec({1, 3})), 1e-14);
    EXPECT_NEAR(d.eta1(0), 3.0 * std::cos(p.alpha) + 3.0, 1e-14);
    EXPECT_EQ(max_abs(d.xi2), 0.0);
    EXPECT_EQ(max_abs(d.eta2), 0.0);
}

TEST(ForwardTransform, ManipulatorAuxiliaryAngle) {
    const examples::ManipulatorParams p;
    const DecouplingMap map(examples::manipulator_model(p), examples::manipulator_joint_options(p));
    const double a = 0.7, b = -1.2;
    const auto d = forward_transform(map, {vec({a, b}), Vec::Zero(2)});
    EXPECT_NEAR(d.xi1(0), a + b / 3.0, 1e-15);
    EXPECT_NEAR(d.eta1(0), b, 1e-15);
    EXPECT_EQ(d.xi2(0), 0.0);
    EXPECT_EQ(d.eta2(0), 0.0);
}

TEST(RecoverX2, BasisColumnAndInputGain) {
    const auto car = examples::mass_on_car({});
    const DecouplingMap map(car.system);
    const Vec q = Vec::Zero(3);
    EXPECT_LT(max_abs(recover_x2(map, q, Vec::Zero(2), Vec::Ones(1)) - map.kernel(q).col(0)), 1e-15);
    const Vec x2 = recover_x2(map, q, vec({1, 0}), Vec::Zero(1));
    EXPECT_LT(max_abs(x2 - vec({1, -1, 0})), 1e-14);
    EXPECT_LT(max_abs(x2 - oracle::car_input_gain({}).col(0)), 1e-14);
    const auto fr = map.frame(q);
    EXPECT_LT(max_abs(fr.H * x2 - vec({1, 0})), 1e-14);
    EXPECT_LT(max_abs(fr.phi2 * x2), 1e-14);
}

TEST(RecoverX1, ManipulatorClosedForm) {
    const examples::ManipulatorParams p;
    const DecouplingMap map(examples::manipulator_model(p), examples::manipulator_joint_options(p));
    const Vec x1 = recover_x1(map, vec({0.9}), vec({0.6}));
    EXPECT_LT(max_abs(x1 - vec({0.9 - 0.6 / 3.0, 0.6})), 1e-14);
}

TEST(RecoverX1, NewtonPathForNonlinearOutput) {
    SystemModel s;
    s.n = 2;
    s.m = 1;
    s.mass = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
    s.forces = [](const Vec&, const Vec&) { return Vec(Vec::Zero(2)); };
    s.input_dist = [](const Vec&) { return Mat((Mat(2, 1) << 1, 0).finished()); };
    s.output = [](const Vec& q) { return Vec::Constant(1, q(0) + 0.1 * std::sin(q(1))); };
    const DecouplingMap map(s, DecouplingOptions{Vec::Zero(2), false, 1.0, {}, std::nullopt});
    const Vec target = vec({0.4, -0.3});
    const auto d = forward_transform(map, {target, Vec::Zero(2)});
    EXPECT_LT(max_abs(recover_x1(map, d.xi1, d.eta1) - target), 1e-10);
}

TEST(RoundTrip, RandomStatesBothExamples) {
    std::mt19937_64 rng(41);
    const examples::ManipulatorParams p;
    const DecouplingMap arm(examples::manipulator_model(p), examples::manipulator_joint_options(p));
    const DecouplingMap car(examples::mass_on_car({}).system);
    for (int i = 0; i < 200; ++i) {
        const FullState xa{random_arm_q(rng, p), oracle::uniform_vec(rng, 2, -2, 2)};
        const auto da = forward_transform(arm, xa);
        const Vec qa = recover_x1(arm, da.xi1, da.eta1);
        EXPECT_LT(max_abs(qa - xa.x1), 1e-8);
        EXPECT_LT(max_abs(recover_x2(arm, qa, da.xi2, da.eta2) - xa.x2), 1e-8);

        const FullState xc{oracle::uniform_vec(rng, 3, -5, 5), oracle::uniform_vec(rng, 3, -5, 5)};
        const auto dc = forward_transform(car, xc);
        const Vec qc = recover_x1(car, dc.xi1, dc.eta1);
        EXPECT_LT(max_abs(qc - xc.x1), 1e-8);
        EXPECT_LT(max_abs(recover_x2(car, qc, dc.xi2, dc.eta2) - xc.x2), 1e-8);
    }
}

TEST(LeftTransformation, IdentityAndScaling) {
    const auto car = examples::mass_on_car({});
    const DecouplingMap map(car.system);
    const std::vector<Vec> qs{Vec::Zero(3), Vec::Ones(3)};
    const auto same = left_transformation_check(map, [&](const Vec& q) { return map.kernel(q); }, qs);
    EXPECT_TRUE(same.pass);
    EXPECT_LT(max_abs(same.samples[0].R - Mat::Identity(1, 1)), 1e-14);
    const auto doubled =
        left_transformation_check(map, [&](const Vec& q) { return Mat(2.0 * map.kernel(q)); }, qs);
    EXPECT_TRUE(doubled.pass);
    EXPECT_LT(max_abs(doubled.samples[0].R - 2.0 * Mat::Identity(1, 1)), 1e-14);
    DecouplingOptions opt;
    opt.kernel_basis = [&](const Vec& q) { return Mat(2.0 * map.kernel(q)); };
    const DecouplingMap scaled(car.system, opt);
    EXPECT_LT(max_abs(phi2(scaled, Vec::Zero(3)) - phi2(map, Vec::Zero(3)) / 2.0), 1e-14);
}

TEST(LeftTransformation, ManipulatorJointBasis) {
    const examples::ManipulatorParams p;
    const DecouplingMap map(examples::manipulator_model(p));
    std::mt19937_64 rng(2);
    std::vector<Vec> qs;
    for (int i = 0; i < 50; ++i) qs.push_back(random_arm_q(rng, p));
    const auto report = left_transformation_check(map, examples::manipulator_joint_kernel_basis(p), qs);
    EXPECT_TRUE(report.pass);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const Mat recovered = report.samples[i].R.inverse() * phi2(map, qs[i]);
        EXPECT_LT(max_abs(recovered - oracle::arm_phi2_joint(qs[i](1))), 1e-9);
    }
}

TEST(LeftTransformation, MismatchedBasisFails) {
    const auto car = examples::mass_on_car({});
    const DecouplingMap map(car.system);
    const auto bad = left_transformation_check(
        map, [](const Vec&) { return Mat((Mat(3, 1) << 1, 0, 0).finished()); }, {Vec::Zero(3)});
    EXPECT_FALSE(bad.pass);
}

TEST(Frame, SingularHighGainThrows) {
    examples::ManipulatorParams p{1.0, 1.0, 1.0, 1.0, 1.0};
    const DecouplingMap map(examples::manipulator_model(p), DecouplingOptions{vec({0.0, 0.3}), false, 1.0, {}, std::nullopt});
    try {
        map.frame(vec({0.0, std::acos(2.0 / 3.0)}));
        FAIL() << "expected SingularHighGain";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularHighGain);
    }
}

}  // namespace
