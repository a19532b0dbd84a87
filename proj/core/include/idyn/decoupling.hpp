#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "idyn/system_model.hpp"

namespace idyn {

/// High-gain matrix Gamma(q) = H(q) M(q)^{-1} B(q) and its regularity.
struct HighGainReport {
    Vec q;
    Mat gamma;
    double smallest_sv = 0.0;
    /// smallest_sv > 1e-10 * max(|Gamma|, |H| |M^{-1} B|)
    bool invertible = false;
};

/// Throws SingularMass if M(q) fails the singular-value test.
HighGainReport high_gain(const SystemModel& model, const Vec& q);

struct RelativeDegreeSample {
    Vec q;
    bool in_domain = true;
    double lgh_norm = 0.0;  ///< max |[H 0][0; M^{-1}B]|, structurally zero
    double smallest_sv = 0.0;
    double largest_sv = 0.0;
    bool pass = false;
    std::string reason;
};

struct RelativeDegreeReport {
    std::vector<RelativeDegreeSample> samples;
    bool pass = true;
};

/// Never throws on a bad sample; failures are reported per sample.
RelativeDegreeReport check_relative_degree(const SystemModel& model, const std::vector<Vec>& sample_qs);

/// Orthonormal basis of ker(h) for a full-row-rank m x n matrix. Columns come
/// from the full SVD and are canonicalised: Gram-Schmidt of the kernel
/// projector in pivot order, largest-magnitude entry of each column positive.
Mat orthonormal_kernel(const Mat& h);

/// Orthonormal basis of ker H(q); RankDeficientOutput if rank H(q) < m.
Mat kernel_basis(const SystemModel& model, const Vec& q);

/// Unit-row selector E with [H(q0); E] invertible. Rows are chosen greedily by
/// column-pivoted QR on V(q0)^T and returned in ascending index order.
Mat select_E(const SystemModel& model, const Vec& q0);

/// q -> basis of ker H(q), full column rank (orthonormal by default).
using KernelBasisFn = std::function<Mat(const Vec& q)>;

struct DecouplingOptions {
    /// Reference point for E selection and constant-structure evaluation.
    std::optional<Vec> q0;
    /// phi1 = lambda * phi2 * x1. Defaults to the model's constant_structure flag.
    std::optional<bool> conservative;
    double lambda = 1.0;
    /// Overrides the orthonormal SVD kernel basis.
    KernelBasisFn kernel_basis;
    /// Overrides the automatic E selection.
    std::optional<Mat> E;
};

/// Coordinate change x <-> (xi, eta) with
///   xi1 = h(x1), xi2 = H(x1) x2, eta1 = phi1(x1), eta2 = phi2(x1) x2.
/// Immutable after construction.
class DecouplingMap {
   public:
    explicit DecouplingMap(SystemModel model, DecouplingOptions options = {});

    const SystemModel& model() const noexcept { return model_; }
    const Mat& E() const noexcept { return E_; }
    double lambda() const noexcept { return lambda_; }
    bool conservative() const noexcept { return conservative_; }
    const Vec& q0() const noexcept { return q0_; }
    bool custom_kernel_basis() const noexcept { return static_cast<bool>(kernel_fn_); }

    Mat kernel(const Vec& q) const;

    /// Quantities at one configuration, shared by the transforms.
    struct Frame {
        Mat mass;
        Mat H;
        Mat gamma;
        Mat input_gain;  ///< M^{-1} B Gamma^{-1}
        Mat V;
        Mat phi2;
    };
    /// Throws SingularMass / SingularHighGain.
    Frame frame(const Vec& q) const;

    Vec phi1(const Vec& q) const;
    Mat phi1_jacobian(const Vec& q) const;

   private:
    SystemModel model_;
    KernelBasisFn kernel_fn_;
    Vec q0_;
    Mat E_;
    double lambda_ = 1.0;
    bool conservative_ = false;
    Mat phi2_const_;  ///< phi2 at q0 when conservative
};

/// V^+ (I - M^{-1} B Gamma^{-1} H) with V^+ = (V^T V)^{-1} V^T.
Mat phi2(const DecouplingMap& map, const Vec& q);

DecoupledState forward_transform(const DecouplingMap& map, const FullState& x);

/// x2 = M^{-1} B Gamma^{-1} xi2 + V eta2.
Vec recover_x2(const DecouplingMap& map, const Vec& q, const Vec& xi2, const Vec& eta2);

/// Inverse of q -> (h(q), phi1(q)). Closed form for linear outputs, otherwise
/// damped Newton from `guess` (default q0) to residual 1e-12 in 50 iterations.
Vec recover_x1(const DecouplingMap& map, const Vec& xi1, const Vec& eta1,
               const std::optional<Vec>& guess = std::nullopt);

struct LeftTransformationSample {
    Vec q;
    Mat R;  ///< phi2(q) * alt_V(q)
    double residual = 0.0;
    bool pass = false;
};

struct LeftTransformationReport {
    std::vector<LeftTransformationSample> samples;
    bool pass = true;
};

/// For another kernel basis alt_V, checks phi2_alt = R^{-1} phi2 within 1e-9.
LeftTransformationReport left_transformation_check(const DecouplingMap& map,
                                                   const KernelBasisFn& alt_V,
                                                   const std::vector<Vec>& sample_qs);

}  // namespace idyn
