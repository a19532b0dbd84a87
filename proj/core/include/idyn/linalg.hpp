#pragma once

#include <Eigen/Dense>

namespace idyn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Relative singular-value threshold for every invertibility / rank decision.
inline constexpr double kRankTolerance = 1e-10;

struct SingularValueSummary {
    double largest = 0.0;
    double smallest = 0.0;

    /// smallest > kRankTolerance * largest (and largest > 0).
    bool full_rank() const noexcept;
};

SingularValueSummary singular_values(const Mat& a);

/// Spectral norm (largest singular value).
double spectral_norm(const Mat& a);

bool all_finite(const Vec& v) noexcept;
bool all_finite(const Mat& a) noexcept;

}  // namespace idyn
