#ifndef FBLAB_CREDIT_HPP
#define FBLAB_CREDIT_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fblab/network.hpp"

namespace fblab {

enum class Method { BP, FA, DFA, IFA };

inline const char* to_string(Method m)
{
    switch (m) {
        case Method::BP: return "BP";
        case Method::FA: return "FA";
        case Method::DFA: return "DFA";
        case Method::IFA: return "IFA";
    }
    return "?";
}

inline Method method_from_string(const std::string& s)
{
    if (s == "BP" || s == "bp") return Method::BP;
    if (s == "FA" || s == "fa") return Method::FA;
    if (s == "DFA" || s == "dfa") return Method::DFA;
    if (s == "IFA" || s == "ifa") return Method::IFA;
    throw ValueError("unknown method '" + s + "'");
}

/// A hidden site is a place where an error signal is injected or transported
/// to: each hidden dense layer, and each conv block at its pool output.
struct Site {
    Index layer;       // dense layer, or the maxpool layer of a conv block
    Index conv_layer;  // -1 for dense sites
    Index dim;         // unit count at the site

    bool is_block() const { return conv_layer >= 0; }
};

template <typename Scalar>
std::vector<Site> hidden_sites(const NetworkT<Scalar>& net)
{
    std::vector<Site> sites;
    for (Index i = 0; i + 1 < net.depth(); ++i) {
        switch (net.layers[static_cast<std::size_t>(i)].kind) {
            case LayerKind::Dense:
                sites.push_back({i, -1, net.extents[static_cast<std::size_t>(i)].flat()});
                break;
            case LayerKind::MaxPool:
                sites.push_back({i, i - 1, net.extents[static_cast<std::size_t>(i)].flat()});
                break;
            case LayerKind::Conv:
                break;  // represented by its pool
        }
    }
    return sites;
}

// ---------------------------------------------------------------------------
// Feedback weights
// ---------------------------------------------------------------------------

/// Fixed random matrices transporting the error. Immutable once created: a
/// training run must end with bitwise-identical matrices.
template <typename Scalar = double>
struct FeedbackWeightsT {
    Method method = Method::BP;
    std::vector<MatrixX<Scalar>> matrices;  // empty for BP; one per site for FA/DFA; single for IFA
    bool shared = false;                    // DFA only: one matrix aliased to all sites

    const MatrixX<Scalar>& at(std::size_t site) const
    {
        return shared ? matrices.front() : matrices.at(site);
    }
};

using FeedbackWeights = FeedbackWeightsT<double>;

/// Samples feedback matrices uniform on [-1/sqrt(fanout), +1/sqrt(fanout)],
/// where fanout is the dimension of the signal being fed back:
///   FA  - B_i maps the site above, shape (dim_i x dim_{i+1});
///   DFA - B_i maps the output error, shape (dim_i x out);
///   IFA - a single B for the first hidden site, shape (dim_0 x out).
template <typename Scalar = double>
FeedbackWeightsT<Scalar> init_feedback(Method method, const std::vector<Index>& site_dims,
                                       Index out_units, SeededRng& rng, bool shared = false)
{
    FeedbackWeightsT<Scalar> fb;
    fb.method = method;
    fb.shared = false;
    if (method == Method::BP || site_dims.empty()) return fb;

    switch (method) {
        case Method::FA: {
            for (std::size_t i = 0; i < site_dims.size(); ++i) {
                const Index src = i + 1 < site_dims.size() ? site_dims[i + 1] : out_units;
                fb.matrices.push_back(
                    sample_uniform<Scalar>(site_dims[i], src, 1.0 / std::sqrt(double(src)), rng));
            }
            break;
        }
        case Method::DFA: {
            if (shared) {
                for (Index d : site_dims)
                    if (d != site_dims.front())
                        throw ValueError("init_feedback: shared feedback requires equal layer widths");
                fb.shared = true;
                fb.matrices.push_back(sample_uniform<Scalar>(site_dims.front(), out_units,
                                                             1.0 / std::sqrt(double(out_units)), rng));
            } else {
                for (Index d : site_dims)
                    fb.matrices.push_back(
                        sample_uniform<Scalar>(d, out_units, 1.0 / std::sqrt(double(out_units)), rng));
            }
            break;
        }
        case Method::IFA: {
            fb.matrices.push_back(sample_uniform<Scalar>(site_dims.front(), out_units,
                                                         1.0 / std::sqrt(double(out_units)), rng));
            break;
        }
        case Method::BP: break;
    }
    return fb;
}

/// FNV-1a over the raw matrix bytes; used to assert feedback immutability.
template <typename Scalar>
std::uint64_t feedback_checksum(const FeedbackWeightsT<Scalar>& fb)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& m : fb.matrices) mix(m.data(), sizeof(Scalar) * static_cast<std::size_t>(m.size()));
    return h;
}

// ---------------------------------------------------------------------------
// Loss and output error
// ---------------------------------------------------------------------------

/// Binary cross-entropy summed over outputs, averaged over the mini-batch.
/// Predictions are clamped into [eps, 1-eps] before the logs.
template <typename Scalar>
double compute_loss(const MatrixX<Scalar>& yhat, const MatrixX<Scalar>& y, Index batch,
                    double eps = 1e-12)
{
    require_same_shape(yhat.rows(), yhat.cols(), y.rows(), y.cols(), "compute_loss");
    if (batch <= 0) throw ValueError("compute_loss: batch size must be positive");
    double j = 0.0;
    for (Index c = 0; c < y.cols(); ++c) {
        for (Index r = 0; r < y.rows(); ++r) {
            const double t = static_cast<double>(y(r, c));
            if (t != 0.0 && t != 1.0)
                throw ValueError("compute_loss: targets must be 0 or 1");
            const double p = std::min(std::max(static_cast<double>(yhat(r, c)), eps), 1.0 - eps);
            j -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        }
    }
    return j / static_cast<double>(batch);
}

/// e = yhat - y, the loss gradient at the output pre-activation.
template <typename Scalar>
MatrixX<Scalar> output_error(const MatrixX<Scalar>& yhat, const MatrixX<Scalar>& y)
{
    require_same_shape(yhat.rows(), yhat.cols(), y.rows(), y.cols(), "output_error");
    return yhat - y;
}

// ---------------------------------------------------------------------------
// Update directions
// ---------------------------------------------------------------------------

/// Per-batch result of a credit-assignment pass. delta_h / delta_a are indexed
/// by layer: for a dense layer delta_h is the direction at its activations and
/// delta_a the direction at its pre-activations; for a conv block delta_h sits
/// on the pool layer (the injection point) and delta_a on the conv layer's
/// pre-activation maps. Parameter gradients are averaged over the batch and
/// follow the convention p <- p - lr * grad.
template <typename Scalar = double>
struct UpdateDirectionsT {
    MatrixX<Scalar> error;  // e
    std::vector<MatrixX<Scalar>> delta_h;
    std::vector<MatrixX<Scalar>> delta_a;
    std::vector<MatrixX<Scalar>> weight_grad;
    std::vector<VectorX<Scalar>> bias_grad;
    MatrixX<Scalar> input_grad;  // dJ/dx, only when requested from backward_bp

    bool all_zero(double tol = 0.0) const
    {
        for (const auto& g : weight_grad)
            if (g.size() > 0 && g.cwiseAbs().maxCoeff() > tol) return false;
        for (const auto& g : bias_grad)
            if (g.size() > 0 && g.cwiseAbs().maxCoeff() > tol) return false;
        return true;
    }
};

using UpdateDirections = UpdateDirectionsT<double>;

namespace detail {

template <typename Scalar>
void check_backward_args(const NetworkT<Scalar>& net, const ForwardTrace<Scalar>& trace,
                         const MatrixX<Scalar>& e)
{
    if (static_cast<Index>(trace.post.size()) != net.depth())
        throw ShapeError("backward: trace does not match network depth");
    if (e.rows() != net.out_units() || e.cols() != trace.batch)
        throw ShapeError("backward: error shape does not match network output");
    for (Index i = 0; i < net.depth(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (net.layers[idx].kind != LayerKind::MaxPool &&
            trace.pre[idx].rows() != net.extents[idx].flat())
            throw ShapeError("backward: trace layer " + std::to_string(i) + " shape mismatch");
    }
}

template <typename Scalar>
UpdateDirectionsT<Scalar> make_directions(const NetworkT<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                          const MatrixX<Scalar>& e)
{
    UpdateDirectionsT<Scalar> ud;
    ud.error = e;
    ud.delta_h.resize(net.layers.size());
    ud.delta_a.resize(net.layers.size());
    ud.weight_grad.resize(net.layers.size());
    ud.bias_grad.resize(net.layers.size());

    // Output layer: dW = e h^T / N, db = rowmean(e).
    const auto last = net.layers.size() - 1;
    const Scalar inv_n = Scalar(1) / Scalar(trace.batch);
    ud.delta_a[last] = e;
    ud.weight_grad[last] = e * trace.layer_in(static_cast<Index>(last)).transpose() * inv_n;
    ud.bias_grad[last] = e.rowwise().sum() * inv_n;
    return ud;
}

/// Applies the site-local part of every method: mask by the dropout scale the
/// forward pass used, mask by f', then form the parameter gradients. Returns
/// nothing; results land in ud. delta_h must already sit on the site.
template <typename Scalar>
void settle_site(const NetworkT<Scalar>& net, const ForwardTrace<Scalar>& trace, const Site& site,
                 UpdateDirectionsT<Scalar>& ud)
{
    const Scalar inv_n = Scalar(1) / Scalar(trace.batch);
    const auto li = static_cast<std::size_t>(site.layer);
    MatrixX<Scalar>& dh = ud.delta_h[li];
    if (!trace.drop_scale.empty() && trace.drop_scale[li].size() > 0)
        dh = dh.cwiseProduct(trace.drop_scale[li]);

    if (!site.is_block()) {
        ud.delta_a[li] = dh.cwiseProduct(activate_grad<Scalar>(net.layers[li].activation, trace.pre[li]));
        ud.weight_grad[li] = ud.delta_a[li] * trace.layer_in(site.layer).transpose() * inv_n;
        ud.bias_grad[li] = ud.delta_a[li].rowwise().sum() * inv_n;
        return;
    }

    // Conv block: scatter through the pool argmax, mask by f' of the conv
    // pre-activations, then accumulate kernel gradients patch by patch.
    const auto ci = static_cast<std::size_t>(site.conv_layer);
    const PoolGeom pg = pool_geometry(net.extent_in(site.layer), net.layers[li]);
    const ConvGeom cg = conv_geometry(net.extent_in(site.conv_layer), net.layers[ci]);
    MatrixX<Scalar> delta_conv_h = maxpool_backward<Scalar>(pg, trace.pool_mask[li], dh);
    ud.delta_a[ci] =
        delta_conv_h.cwiseProduct(activate_grad<Scalar>(net.layers[ci].activation, trace.pre[ci]));

    const MatrixX<Scalar>& block_in = trace.layer_in(site.conv_layer);
    MatrixX<Scalar> dw = MatrixX<Scalar>::Zero(cg.filters, cg.patch());
    VectorX<Scalar> db = VectorX<Scalar>::Zero(cg.filters);
    const Index positions = cg.out_h * cg.out_w;
    for (Index s = 0; s < trace.batch; ++s) {
        const auto maps = ud.delta_a[ci].col(s).reshaped(positions, cg.filters).transpose();
        dw.noalias() += maps * im2col<Scalar>(cg, block_in.col(s)).transpose();
        db += maps.rowwise().sum();
    }
    ud.weight_grad[ci] = dw * inv_n;
    ud.bias_grad[ci] = db * inv_n;
}

/// Transported delta leaving a settled site downward (BP chaining):
/// dense layers chain through the transposed weights, conv blocks through the
/// transposed kernels (col2im of W^T delta).
template <typename Scalar>
MatrixX<Scalar> chain_below(const NetworkT<Scalar>& net, const ForwardTrace<Scalar>& trace,
                            const Site& site, const UpdateDirectionsT<Scalar>& ud)
{
    if (!site.is_block())
        return net.weights[static_cast<std::size_t>(site.layer)].transpose() *
               ud.delta_a[static_cast<std::size_t>(site.layer)];

    const auto ci = static_cast<std::size_t>(site.conv_layer);
    const ConvGeom cg = conv_geometry(net.extent_in(site.conv_layer), net.layers[ci]);
    const Index positions = cg.out_h * cg.out_w;
    MatrixX<Scalar> below = MatrixX<Scalar>::Zero(cg.in_flat(), trace.batch);
    for (Index s = 0; s < trace.batch; ++s) {
        const auto maps = ud.delta_a[ci].col(s).reshaped(positions, cg.filters).transpose();
        MatrixX<Scalar> cols = net.weights[ci].transpose() * maps;
        col2im_add<Scalar>(cg, cols, below.col(s));
    }
    return below;
}

/// The unit-level delta a settled site exposes to a feedback chain (FA) or a
/// forward loop (IFA): for dense sites the post-f' delta_a, for conv blocks
/// the delta injected at the pool units.
template <typename Scalar>
const MatrixX<Scalar>& site_delta_out(const Site& site, const UpdateDirectionsT<Scalar>& ud)
{
    if (!site.is_block()) return ud.delta_a[static_cast<std::size_t>(site.layer)];
    return ud.delta_h[static_cast<std::size_t>(site.layer)];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The four credit-assignment strategies
// ---------------------------------------------------------------------------

/// Back-propagation: the error is chained through the transposed forward
/// weights, layer by layer. want_input_grad additionally carries the chain
/// below the first layer, producing dJ/dx (used for adversarial examples).
template <typename Scalar>
UpdateDirectionsT<Scalar> backward_bp(const NetworkT<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                      const MatrixX<Scalar>& e, bool want_input_grad = false)
{
    detail::check_backward_args(net, trace, e);
    auto ud = detail::make_directions(net, trace, e);
    const auto sites = hidden_sites(net);

    MatrixX<Scalar> carry = net.weights.back().transpose() * e;
    for (auto it = sites.rbegin(); it != sites.rend(); ++it) {
        ud.delta_h[static_cast<std::size_t>(it->layer)] = std::move(carry);
        detail::settle_site(net, trace, *it, ud);
        const bool lowest = std::next(it) == sites.rend();
        if (!lowest || want_input_grad) carry = detail::chain_below(net, trace, *it, ud);
    }
    if (want_input_grad) {
        if (sites.empty()) carry = net.weights.back().transpose() * e;
        if (trace.drop_scale_input.size() > 0) carry = carry.cwiseProduct(trace.drop_scale_input);
        ud.input_grad = std::move(carry);
    }
    return ud;
}

/// Feedback-alignment: the topmost hidden site receives B*e; every lower site
/// receives B_i times the delta the site above settled on.
template <typename Scalar>
UpdateDirectionsT<Scalar> backward_fa(const NetworkT<Scalar>& net, const FeedbackWeightsT<Scalar>& fb,
                                      const ForwardTrace<Scalar>& trace, const MatrixX<Scalar>& e)
{
    if (fb.method != Method::FA) throw ValueError("backward_fa: feedback weights are not FA");
    detail::check_backward_args(net, trace, e);
    auto ud = detail::make_directions(net, trace, e);
    const auto sites = hidden_sites(net);
    if (fb.matrices.size() != sites.size())
        throw ShapeError("backward_fa: feedback matrix count does not match hidden sites");

    const MatrixX<Scalar>* above = &e;
    for (std::size_t k = sites.size(); k-- > 0;) {
        const Site& site = sites[k];
        const MatrixX<Scalar>& b = fb.at(k);
        if (b.rows() != site.dim || b.cols() != above->rows())
            throw ShapeError("backward_fa: feedback matrix " + std::to_string(k) + " has shape " +
                             detail::shape_str(b.rows(), b.cols()) + ", expected " +
                             detail::shape_str(site.dim, above->rows()));
        ud.delta_h[static_cast<std::size_t>(site.layer)] = b * (*above);
        detail::settle_site(net, trace, site, ud);
        above = &detail::site_delta_out(site, ud);
    }
    return ud;
}

/// Direct feedback-alignment: every hidden site receives its own fixed random
/// projection of the output error; no signal travels between hidden layers.
/// Only the architecture of net is consulted, never its forward weights.
template <typename Scalar>
UpdateDirectionsT<Scalar> backward_dfa(const NetworkT<Scalar>& net, const FeedbackWeightsT<Scalar>& fb,
                                       const ForwardTrace<Scalar>& trace, const MatrixX<Scalar>& e)
{
    if (fb.method != Method::DFA) throw ValueError("backward_dfa: feedback weights are not DFA");
    detail::check_backward_args(net, trace, e);
    auto ud = detail::make_directions(net, trace, e);
    const auto sites = hidden_sites(net);
    if (!fb.shared && fb.matrices.size() != sites.size())
        throw ShapeError("backward_dfa: feedback matrix count does not match hidden sites");

    for (std::size_t k = 0; k < sites.size(); ++k) {
        const MatrixX<Scalar>& b = fb.at(k);
        if (b.rows() != sites[k].dim || b.cols() != e.rows())
            throw ShapeError("backward_dfa: feedback matrix " + std::to_string(k) + " has shape " +
                             detail::shape_str(b.rows(), b.cols()) + ", expected " +
                             detail::shape_str(sites[k].dim, e.rows()));
        ud.delta_h[static_cast<std::size_t>(sites[k].layer)] = b * e;
        detail::settle_site(net, trace, sites[k], ud);
    }
    return ud;
}

/// Indirect feedback-alignment: the error reaches only the first hidden layer
/// through B; every layer above receives the direction forward-propagated
/// through the adapted weights. Dense architectures only.
template <typename Scalar>
UpdateDirectionsT<Scalar> backward_ifa(const NetworkT<Scalar>& net, const FeedbackWeightsT<Scalar>& fb,
                                       const ForwardTrace<Scalar>& trace, const MatrixX<Scalar>& e)
{
    if (fb.method != Method::IFA) throw ValueError("backward_ifa: feedback weights are not IFA");
    detail::check_backward_args(net, trace, e);
    auto ud = detail::make_directions(net, trace, e);
    const auto sites = hidden_sites(net);
    for (const Site& s : sites)
        if (s.is_block()) throw ValueError("backward_ifa: conv blocks are not supported");
    if (fb.matrices.size() != 1 && !sites.empty())
        throw ShapeError("backward_ifa: expected a single feedback matrix");

    for (std::size_t k = 0; k < sites.size(); ++k) {
        const Site& site = sites[k];
        const auto li = static_cast<std::size_t>(site.layer);
        if (k == 0) {
            const MatrixX<Scalar>& b = fb.matrices.front();
            if (b.rows() != site.dim || b.cols() != e.rows())
                throw ShapeError("backward_ifa: feedback matrix has shape " +
                                 detail::shape_str(b.rows(), b.cols()) + ", expected " +
                                 detail::shape_str(site.dim, e.rows()));
            ud.delta_h[li] = b * e;
        } else {
            const Site& below = sites[k - 1];
            ud.delta_h[li] =
                net.weights[li] * ud.delta_a[static_cast<std::size_t>(below.layer)];
        }
        detail::settle_site(net, trace, site, ud);
    }
    return ud;
}

/// Dispatch by method; fb is ignored for BP.
template <typename Scalar>
UpdateDirectionsT<Scalar> backward(Method method, const NetworkT<Scalar>& net,
                                   const FeedbackWeightsT<Scalar>& fb, const ForwardTrace<Scalar>& trace,
                                   const MatrixX<Scalar>& e)
{
    switch (method) {
        case Method::BP: return backward_bp(net, trace, e);
        case Method::FA: return backward_fa(net, fb, trace, e);
        case Method::DFA: return backward_dfa(net, fb, trace, e);
        case Method::IFA: return backward_ifa(net, fb, trace, e);
    }
    throw ValueError("backward: bad method");
}

}  // namespace fblab

#endif  // FBLAB_CREDIT_HPP
