#include "idyn/linalg.hpp"

#include "idyn/errors.hpp"

namespace idyn {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::NonFiniteState: return "NonFiniteState";
        case ErrorKind::SingularMass: return "SingularMass";
        case ErrorKind::SingularHighGain: return "SingularHighGain";
        case ErrorKind::RankDeficientOutput: return "RankDeficientOutput";
        case ErrorKind::NewtonDivergence: return "NewtonDivergence";
        case ErrorKind::OutOfDomain: return "OutOfDomain";
        case ErrorKind::DomainBoundary: return "DomainBoundary";
        case ErrorKind::InfeasibleParameters: return "InfeasibleParameters";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

bool SingularValueSummary::full_rank() const noexcept {
    return largest > 0.0 && smallest > kRankTolerance * largest;
}

SingularValueSummary singular_values(const Mat& a) {
    SingularValueSummary out;
    if (a.size() == 0) return out;
    Eigen::JacobiSVD<Mat> svd(a);
    const auto& s = svd.singularValues();
    out.largest = s(0);
    out.smallest = s(s.size() - 1);
    return out;
}

double spectral_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Mat>(a).singularValues()(0);
}

bool all_finite(const Vec& v) noexcept { return v.allFinite(); }
bool all_finite(const Mat& a) noexcept { return a.allFinite(); }

}  // namespace idyn
