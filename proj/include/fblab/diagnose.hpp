#ifndef FBLAB_DIAGNOSE_HPP
#define FBLAB_DIAGNOSE_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "fblab/credit.hpp"
#include "fblab/network.hpp"

namespace fblab {

inline double undefined_measure()
{
    return std::numeric_limits<double>::quiet_NaN();
}

/// Layer-wise criterion K = dh^T h / ||dh||. Undefined (NaN) for zero dh.
template <typename DerivedA, typename DerivedB>
double criterion_K(const Eigen::MatrixBase<DerivedA>& dh, const Eigen::MatrixBase<DerivedB>& h)
{
    require_same_shape(dh.rows(), dh.cols(), h.rows(), h.cols(), "criterion_K");
    const double n = dh.template cast<double>().norm();
    if (n == 0.0) return undefined_measure();
    return dh.template cast<double>().cwiseProduct(h.template cast<double>()).sum() / n;
}

/// Alignment criterion L = dh^T c / ||dh||. L > 0 means the update direction
/// lies within 90 degrees of c. Undefined (NaN) for zero dh.
template <typename DerivedA, typename DerivedB>
double criterion_L(const Eigen::MatrixBase<DerivedA>& dh, const Eigen::MatrixBase<DerivedB>& c)
{
    require_same_shape(dh.rows(), dh.cols(), c.rows(), c.cols(), "criterion_L");
    const double n = dh.template cast<double>().norm();
    if (n == 0.0) return undefined_measure();
    return dh.template cast<double>().cwiseProduct(c.template cast<double>()).sum() / n;
}

/// Gradient back-propagated one layer: c_k = W^T (dh_above ⊙ f'(a_above)).
/// Pass Activation::Identity to feed a raw pre-activation delta (e.g. the
/// output error e).
template <typename Scalar>
MatrixX<Scalar> reference_direction(const MatrixX<Scalar>& w_above, const MatrixX<Scalar>& dh_above,
                                    const MatrixX<Scalar>& a_above, Activation act_above)
{
    require_same_shape(dh_above.rows(), dh_above.cols(), a_above.rows(), a_above.cols(),
                       "reference_direction");
    if (w_above.rows() != dh_above.rows())
        throw ShapeError("reference_direction: weight rows do not match delta rows");
    return w_above.transpose() * dh_above.cwiseProduct(activate_grad<Scalar>(act_above, a_above));
}

/// Companion direction forward-propagated one layer:
/// c_{k+1} = (W dh_below) ⊙ f'(a_above).
template <typename Scalar>
MatrixX<Scalar> companion_direction(const MatrixX<Scalar>& w_above, const MatrixX<Scalar>& dh_below,
                                    const MatrixX<Scalar>& a_above, Activation act_above)
{
    if (w_above.cols() != dh_below.rows())
        throw ShapeError("companion_direction: weight cols do not match delta rows");
    MatrixX<Scalar> fwd = w_above * dh_below;
    require_same_shape(fwd.rows(), fwd.cols(), a_above.rows(), a_above.cols(), "companion_direction");
    return fwd.cwiseProduct(activate_grad<Scalar>(act_above, a_above));
}

/// Angle between dh and c in degrees, in [0, 180]. Undefined (NaN) when
/// either vector is zero.
template <typename DerivedA, typename DerivedB>
double alignment_angle(const Eigen::MatrixBase<DerivedA>& dh, const Eigen::MatrixBase<DerivedB>& c)
{
    require_same_shape(dh.rows(), dh.cols(), c.rows(), c.cols(), "alignment_angle");
    const double ndh = dh.template cast<double>().norm();
    const double nc = c.template cast<double>().norm();
    if (ndh == 0.0 || nc == 0.0) return undefined_measure();
    double cosb = dh.template cast<double>().cwiseProduct(c.template cast<double>()).sum() / (ndh * nc);
    cosb = std::min(1.0, std::max(-1.0, cosb));
    return std::acos(cosb) * 180.0 / 3.14159265358979323846;
}

/// One measurement row. K/L/beta are per-sample values averaged over the
/// mini-batch (undefined samples skipped); the _flat variants treat the whole
/// batch as a single vector.
struct AlignmentRecord {
    int epoch = 0;
    long batch = 0;
    Index layer = 0;  // hidden site index, bottom = 0
    double K = 0.0;
    double L = 0.0;
    double beta_deg = 0.0;
    double norm_dh = 0.0;
    double norm_c = 0.0;
    double K_flat = 0.0;
    double L_flat = 0.0;
    double beta_flat_deg = 0.0;
};

namespace detail {

inline double mean_defined(const std::vector<double>& xs)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : xs)
        if (!std::isnan(x)) {
            sum += x;
            ++n;
        }
    return n == 0 ? undefined_measure() : sum / static_cast<double>(n);
}

}  // namespace detail

/// Measures K, L and beta for every dense hidden site of a network, given the
/// update directions a credit-assignment pass produced. The reference c for
/// site k is the site-(k+1) direction back-propagated one layer; the topmost
/// site is referenced against the output error itself, making its c the true
/// loss gradient there. Conv blocks are skipped.
template <typename Scalar>
std::vector<AlignmentRecord> measure_alignment(const NetworkT<Scalar>& net,
                                               const ForwardTrace<Scalar>& trace,
                                               const UpdateDirectionsT<Scalar>& ud)
{
    std::vector<AlignmentRecord> records;
    const auto sites = hidden_sites(net);
    for (std::size_t k = 0; k < sites.size(); ++k) {
        if (sites[k].is_block()) continue;
        const auto li = static_cast<std::size_t>(sites[k].layer);
        const MatrixX<Scalar>& dh = ud.delta_h[li];
        if (dh.size() == 0) continue;

        MatrixX<Scalar> c;
        if (k + 1 < sites.size()) {
            if (sites[k + 1].is_block()) continue;
            const auto ai = static_cast<std::size_t>(sites[k + 1].layer);
            c = reference_direction<Scalar>(net.weights[ai], ud.delta_h[ai], trace.pre[ai],
                                            net.layers[ai].activation);
        } else {
            c = net.weights.back().transpose() * ud.error;
        }

        AlignmentRecord rec;
        rec.layer = static_cast<Index>(k);
        const MatrixX<Scalar>& h = trace.post[li];
        std::vector<double> ks, ls, betas;
        for (Index s = 0; s < trace.batch; ++s) {
            ks.push_back(criterion_K(dh.col(s), h.col(s)));
            ls.push_back(criterion_L(dh.col(s), c.col(s)));
            betas.push_back(alignment_angle(dh.col(s), c.col(s)));
        }
        rec.K = detail::mean_defined(ks);
        rec.L = detail::mean_defined(ls);
        rec.beta_deg = detail::mean_defined(betas);
        rec.norm_dh = dh.template cast<double>().norm();
        rec.norm_c = c.template cast<double>().norm();
        rec.K_flat = criterion_K(dh, h);
        rec.L_flat = criterion_L(dh, c);
        rec.beta_flat_deg = alignment_angle(dh, c);
        records.push_back(rec);
    }
    return records;
}

}  // namespace fblab

#endif  // FBLAB_DIAGNOSE_HPP
