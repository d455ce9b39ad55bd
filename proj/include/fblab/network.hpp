#ifndef FBLAB_NETWORK_HPP
#define FBLAB_NETWORK_HPP

#include <string>
#include <utility>
#include <vector>

#include "fblab/activation.hpp"
#include "fblab/dropout.hpp"
#include "fblab/linalg.hpp"
#include "fblab/rng.hpp"

namespace fblab {

using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

enum class LayerKind { Dense, Conv, MaxPool };

/// One layer of the architecture description. Conv layers must be followed by
/// a MaxPool layer; together they form one hidden block.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    Activation activation = Activation::Tanh;
    bool frozen = false;

    Index units = 0;                             // Dense
    Index filters = 0, kernel_h = 0, kernel_w = 0;  // Conv
    Index window_h = 0, window_w = 0;            // MaxPool
    Index stride = 1;                            // Conv / MaxPool

    static LayerSpec dense(Index units, Activation act, bool frozen = false)
    {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.units = units;
        s.activation = act;
        s.frozen = frozen;
        return s;
    }
    static LayerSpec conv(Index filters, Index kh, Index kw, Index stride, Activation act)
    {
        LayerSpec s;
        s.kind = LayerKind::Conv;
        s.filters = filters;
        s.kernel_h = kh;
        s.kernel_w = kw;
        s.stride = stride;
        s.activation = act;
        return s;
    }
    static LayerSpec maxpool(Index wh, Index ww, Index stride)
    {
        LayerSpec s;
        s.kind = LayerKind::MaxPool;
        s.window_h = wh;
        s.window_w = ww;
        s.stride = stride;
        s.activation = Activation::Identity;  // pooling carries no non-linearity
        return s;
    }
};

/// Shape of the signal between two layers: a (channels, height, width) image
/// stack, or a flat vector (height = width = 1).
struct Extent {
    Index channels = 0;
    Index height = 1;
    Index width = 1;
    bool spatial = false;

    Index flat() const { return channels * height * width; }

    static Extent vec(Index n) { return Extent{n, 1, 1, false}; }
    static Extent image(Index c, Index h, Index w) { return Extent{c, h, w, true}; }
};

// ---------------------------------------------------------------------------
// Convolution / pooling geometry
// ---------------------------------------------------------------------------

/// Same-padding cross-correlation: output spatial size is ceil(in / stride),
/// zero padding split with the smaller half on the top/left.
struct ConvGeom {
    Index in_c, in_h, in_w;
    Index filters, kh, kw, stride;
    Index out_h, out_w;
    Index pad_top, pad_left;

    Index patch() const { return in_c * kh * kw; }
    Index out_flat() const { return filters * out_h * out_w; }
    Index in_flat() const { return in_c * in_h * in_w; }
};

inline ConvGeom conv_geometry(const Extent& in, const LayerSpec& spec)
{
    if (!in.spatial) throw ShapeError("conv: input must be spatial (channels x h x w)");
    if (spec.kernel_h <= 0 || spec.kernel_w <= 0 || spec.stride <= 0 || spec.filters <= 0)
        throw ValueError("conv: kernel, stride and filter count must be positive");
    if (in.height <= 0 || in.width <= 0 || in.channels <= 0)
        throw ShapeError("conv: degenerate input extent");
    ConvGeom g;
    g.in_c = in.channels;
    g.in_h = in.height;
    g.in_w = in.width;
    g.filters = spec.filters;
    g.kh = spec.kernel_h;
    g.kw = spec.kernel_w;
    g.stride = spec.stride;
    g.out_h = (in.height + spec.stride - 1) / spec.stride;
    g.out_w = (in.width + spec.stride - 1) / spec.stride;
    const Index pad_h = std::max<Index>((g.out_h - 1) * g.stride + g.kh - g.in_h, 0);
    const Index pad_w = std::max<Index>((g.out_w - 1) * g.stride + g.kw - g.in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
}

/// Valid max pooling: windows never leave the input, output is
/// floor((in - window) / stride) + 1 per dimension.
struct PoolGeom {
    Index c, in_h, in_w;
    Index wh, ww, stride;
    Index out_h, out_w;

    Index out_flat() const { return c * out_h * out_w; }
    Index in_flat() const { return c * in_h * in_w; }
};

inline PoolGeom pool_geometry(const Extent& in, const LayerSpec& spec)
{
    if (!in.spatial) throw ShapeError("maxpool: input must be spatial (channels x h x w)");
    if (spec.window_h <= 0 || spec.window_w <= 0 || spec.stride <= 0)
        throw ValueError("maxpool: window and stride must be positive");
    if (spec.window_h > in.height || spec.window_w > in.width)
        throw ShapeError("maxpool: window exceeds input dims (" + std::to_string(spec.window_h) +
                         "x" + std::to_string(spec.window_w) + " over " + std::to_string(in.height) +
                         "x" + std::to_string(in.width) + ")");
    PoolGeom g;
    g.c = in.channels;
    g.in_h = in.height;
    g.in_w = in.width;
    g.wh = spec.window_h;
    g.ww = spec.window_w;
    g.stride = spec.stride;
    g.out_h = (in.height - spec.window_h) / spec.stride + 1;
    g.out_w = (in.width - spec.window_w) / spec.stride + 1;
    return g;
}

/// Patch matrix for one sample: column p = (oy * out_w + ox) holds the
/// receptive field of output position p, entries ordered c, ky, kx.
/// Out-of-image positions contribute zero.
template <typename Scalar>
MatrixX<Scalar> im2col(const ConvGeom& g, const VectorX<Scalar>& sample)
{
    MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(g.patch(), g.out_h * g.out_w);
    for (Index oy = 0; oy < g.out_h; ++oy) {
        for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index col = oy * g.out_w + ox;
            for (Index c = 0; c < g.in_c; ++c) {
                for (Index ky = 0; ky < g.kh; ++ky) {
                    const Index y = oy * g.stride - g.pad_top + ky;
                    if (y < 0 || y >= g.in_h) continue;
                    for (Index kx = 0; kx < g.kw; ++kx) {
                        const Index x = ox * g.stride - g.pad_left + kx;
                        if (x < 0 || x >= g.in_w) continue;
                        cols((c * g.kh + ky) * g.kw + kx, col) = sample(c * g.in_h * g.in_w + y * g.in_w + x);
                    }
                }
            }
        }
    }
    return cols;
}

/// Adjoint of im2col: scatter-adds patch columns back onto an image stack.
template <typename Scalar>
void col2im_add(const ConvGeom& g, const MatrixX<Scalar>& cols,
                Eigen::Ref<VectorX<Scalar>> sample)
{
    for (Index oy = 0; oy < g.out_h; ++oy) {
        for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index col = oy * g.out_w + ox;
            for (Index c = 0; c < g.in_c; ++c) {
                for (Index ky = 0; ky < g.kh; ++ky) {
                    const Index y = oy * g.stride - g.pad_top + ky;
                    if (y < 0 || y >= g.in_h) continue;
                    for (Index kx = 0; kx < g.kw; ++kx) {
                        const Index x = ox * g.stride - g.pad_left + kx;
                        if (x < 0 || x >= g.in_w) continue;
                        sample(c * g.in_h * g.in_w + y * g.in_w + x) += cols((c * g.kh + ky) * g.kw + kx, col);
                    }
                }
            }
        }
    }
}

/// Pre-activation maps for a batch of flattened image stacks. weights is
/// (filters x patch), bias one entry per filter.
template <typename Scalar>
MatrixX<Scalar> conv_forward(const ConvGeom& g, const MatrixX<Scalar>& weights,
                             const VectorX<Scalar>& bias, const MatrixX<Scalar>& input)
{
    if (weights.rows() != g.filters || weights.cols() != g.patch())
        throw ShapeError("conv_forward: weight shape does not match geometry");
    if (input.rows() != g.in_flat())
        throw ShapeError("conv_forward: input rows " + std::to_string(input.rows()) +
                         ", expected " + std::to_string(g.in_flat()));
    const Index n = input.cols();
    MatrixX<Scalar> out(g.out_flat(), n);
    for (Index s = 0; s < n; ++s) {
        MatrixX<Scalar> maps = weights * im2col<Scalar>(g, input.col(s));
        maps.colwise() += bias;
        out.col(s) = maps.template reshaped<Eigen::RowMajor>();
    }
    return out;
}

/// Max over each window plus the winning flat index into the input map.
/// Ties resolve to the first maximum in a row-major scan of the window.
template <typename Scalar>
std::pair<MatrixX<Scalar>, IndexMatrix> maxpool_forward(const PoolGeom& g, const MatrixX<Scalar>& input)
{
    if (input.rows() != g.in_flat())
        throw ShapeError("maxpool_forward: input rows " + std::to_string(input.rows()) +
                         ", expected " + std::to_string(g.in_flat()));
    const Index n = input.cols();
    MatrixX<Scalar> out(g.out_flat(), n);
    IndexMatrix mask(g.out_flat(), n);
    for (Index s = 0; s < n; ++s) {
        for (Index c = 0; c < g.c; ++c) {
            const Index base = c * g.in_h * g.in_w;
            for (Index oy = 0; oy < g.out_h; ++oy) {
                for (Index ox = 0; ox < g.out_w; ++ox) {
                    Index best = base + (oy * g.stride) * g.in_w + ox * g.stride;
                    Scalar best_val = input(best, s);
                    for (Index wy = 0; wy < g.wh; ++wy) {
                        for (Index wx = 0; wx < g.ww; ++wx) {
                            const Index idx = base + (oy * g.stride + wy) * g.in_w + (ox * g.stride + wx);
                            if (input(idx, s) > best_val) {
                                best_val = input(idx, s);
                                best = idx;
                            }
                        }
                    }
                    const Index o = c * g.out_h * g.out_w + oy * g.out_w + ox;
                    out(o, s) = best_val;
                    mask(o, s) = best;
                }
            }
        }
    }
    return {std::move(out), std::move(mask)};
}

/// Routes a gradient at the pool output back onto the pre-pool map: each pool
/// cell's delta lands on its stored argmax position.
template <typename Scalar>
MatrixX<Scalar> maxpool_backward(const PoolGeom& g, const IndexMatrix& mask,
                                 const MatrixX<Scalar>& delta_pool)
{
    if (delta_pool.rows() != g.out_flat() || delta_pool.rows() != mask.rows() ||
        delta_pool.cols() != mask.cols())
        throw ShapeError("maxpool_backward: delta/mask shape mismatch");
    MatrixX<Scalar> delta = MatrixX<Scalar>::Zero(g.in_flat(), delta_pool.cols());
    for (Index s = 0; s < delta_pool.cols(); ++s)
        for (Index o = 0; o < delta_pool.rows(); ++o)
            delta(mask(o, s), s) += delta_pool(o, s);
    return delta;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

enum class InitScheme { Zero, UniformFanIn };

template <typename Scalar = double>
struct NetworkT {
    Extent input;
    std::vector<LayerSpec> layers;
    std::vector<MatrixX<Scalar>> weights;  // 0x0 for MaxPool layers
    std::vector<VectorX<Scalar>> biases;
    std::vector<Extent> extents;  // output extent per layer

    Index depth() const { return static_cast<Index>(layers.size()); }
    Index in_units() const { return input.flat(); }
    Index out_units() const { return extents.back().flat(); }

    const Extent& extent_in(Index layer) const { return layer == 0 ? input : extents[layer - 1]; }
};

using Network = NetworkT<double>;

namespace detail {

inline void validate_architecture(const Extent& input, const std::vector<LayerSpec>& specs)
{
    if (specs.empty()) throw ValueError("network: at least one layer required");
    if (specs.back().kind != LayerKind::Dense)
        throw ValueError("network: output layer must be dense");
    if (specs.back().activation != Activation::Logistic)
        throw ValueError("network: output layer activation must be logistic");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        if (s.kind == LayerKind::Conv) {
            if (i + 1 >= specs.size() || specs[i + 1].kind != LayerKind::MaxPool)
                throw ValueError("network: every conv layer must be followed by a maxpool layer");
        }
        if (s.kind == LayerKind::MaxPool) {
            if (i == 0 || specs[i - 1].kind != LayerKind::Conv)
                throw ValueError("network: maxpool is only supported directly after conv");
            if (s.activation != Activation::Identity)
                throw ValueError("network: maxpool layers carry no activation");
        }
        if (s.kind == LayerKind::Dense && s.units <= 0)
            throw ValueError("network: dense layer needs a positive unit count");
    }
    (void)input;
}

}  // namespace detail

/// Zero-parameter skeleton with validated, chained extents.
template <typename Scalar = double>
NetworkT<Scalar> build_network(const Extent& input, const std::vector<LayerSpec>& specs)
{
    detail::validate_architecture(input, specs);
    NetworkT<Scalar> net;
    net.input = input;
    net.layers = specs;
    Extent cur = input;
    for (const auto& spec : specs) {
        switch (spec.kind) {
            case LayerKind::Dense: {
                net.weights.push_back(MatrixX<Scalar>::Zero(spec.units, cur.flat()));
                net.biases.push_back(VectorX<Scalar>::Zero(spec.units));
                cur = Extent::vec(spec.units);
                break;
            }
            case LayerKind::Conv: {
                const ConvGeom g = conv_geometry(cur, spec);
                net.weights.push_back(MatrixX<Scalar>::Zero(g.filters, g.patch()));
                net.biases.push_back(VectorX<Scalar>::Zero(g.filters));
                cur = Extent::image(g.filters, g.out_h, g.out_w);
                break;
            }
            case LayerKind::MaxPool: {
                const PoolGeom g = pool_geometry(cur, spec);
                net.weights.emplace_back();
                net.biases.emplace_back();
                cur = Extent::image(g.c, g.out_h, g.out_w);
                break;
            }
        }
        net.extents.push_back(cur);
    }
    return net;
}

/// Builds the network and fills parameters per the init scheme. Zero init is
/// rejected for ReLU hidden layers: a zero-weight, zero-bias ReLU unit has
/// zero error derivative and its parameters can never move. Weights draw
/// uniform with limit 1/sqrt(fanin) under UniformFanIn; biases start at zero
/// under both schemes.
template <typename Scalar = double>
NetworkT<Scalar> init_network(const Extent& input, const std::vector<LayerSpec>& specs,
                              InitScheme scheme, SeededRng& rng)
{
    if (scheme == InitScheme::Zero) {
        for (std::size_t i = 0; i + 1 < specs.size(); ++i) {
            if (specs[i].activation == Activation::ReLU)
                throw ValueError(
                    "init_network: zero init cannot train ReLU hidden layers "
                    "(dead units from the start); use UniformFanIn");
        }
    }
    NetworkT<Scalar> net = build_network<Scalar>(input, specs);
    if (scheme == InitScheme::UniformFanIn) {
        for (auto& w : net.weights) {
            if (w.size() == 0) continue;
            w = sample_uniform<Scalar>(w.rows(), w.cols(), 1.0 / std::sqrt(double(w.cols())), rng);
        }
    }
    return net;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct ForwardTrace {
    Index batch = 0;
    MatrixX<Scalar> input;                  // x as seen by the first layer (after input dropout)
    std::vector<MatrixX<Scalar>> pre;       // a_i; empty for MaxPool layers
    std::vector<MatrixX<Scalar>> post;      // h_i; pooled maps for MaxPool layers
    std::vector<IndexMatrix> pool_mask;     // argmax winners, only for MaxPool layers
    std::vector<MatrixX<Scalar>> drop_scale;  // per-layer inverted-dropout factors; empty if unused
    MatrixX<Scalar> drop_scale_input;       // empty if unused

    const MatrixX<Scalar>& output() const { return post.back(); }       // y-hat
    const MatrixX<Scalar>& output_pre() const { return pre.back(); }    // a_y
    const MatrixX<Scalar>& layer_in(Index layer) const
    {
        return layer == 0 ? input : post[static_cast<std::size_t>(layer) - 1];
    }
    bool has_dropout() const { return drop_scale_input.size() > 0 || !drop_scale.empty(); }
};

/// Full forward pass per the layer stack. With a train-mode dropout spec the
/// input and every hidden block output are masked and the scale factors are
/// kept on the trace so backward reuses the identical masks.
template <typename Scalar>
ForwardTrace<Scalar> forward(const NetworkT<Scalar>& net, const MatrixX<Scalar>& x,
                             const DropoutSpec* dropout = nullptr, SeededRng* rng = nullptr)
{
    if (x.rows() != net.in_units())
        throw ShapeError("forward: input rows " + std::to_string(x.rows()) + ", network expects " +
                         std::to_string(net.in_units()));
    const bool drop = dropout != nullptr && dropout->mode == DropoutMode::train && dropout->active();
    if (drop && rng == nullptr) throw ValueError("forward: dropout requires an rng");

    ForwardTrace<Scalar> trace;
    trace.batch = x.cols();
    trace.pre.resize(net.layers.size());
    trace.post.resize(net.layers.size());
    trace.pool_mask.resize(net.layers.size());
    if (drop) trace.drop_scale.resize(net.layers.size());

    trace.input = x;
    if (drop && dropout->p_input > 0.0) {
        auto [masked, mask] = apply_dropout<Scalar>(x, dropout->p_input, *rng, DropoutMode::train);
        trace.input = std::move(masked);
        trace.drop_scale_input = mask * Scalar(1.0 / (1.0 - dropout->p_input));
    }

    const MatrixX<Scalar>* cur = &trace.input;
    const std::size_t last = net.layers.size() - 1;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& spec = net.layers[i];
        switch (spec.kind) {
            case LayerKind::Dense: {
                if (net.weights[i].cols() != cur->rows())
                    throw ShapeError("forward: dense layer " + std::to_string(i) + " fan-in mismatch");
                trace.pre[i] = net.weights[i] * (*cur);
                trace.pre[i].colwise() += net.biases[i];
                trace.post[i] = activate<Scalar>(spec.activation, trace.pre[i]);
                break;
            }
            case LayerKind::Conv: {
                const ConvGeom g = conv_geometry(net.extent_in(static_cast<Index>(i)), spec);
                trace.pre[i] = conv_forward<Scalar>(g, net.weights[i], net.biases[i], *cur);
                trace.post[i] = activate<Scalar>(spec.activation, trace.pre[i]);
                break;
            }
            case LayerKind::MaxPool: {
                const PoolGeom g = pool_geometry(net.extent_in(static_cast<Index>(i)), spec);
                auto [pooled, mask] = maxpool_forward<Scalar>(g, *cur);
                trace.post[i] = std::move(pooled);
                trace.pool_mask[i] = std::move(mask);
                break;
            }
        }
        // Hidden dropout sits on block outputs: dense activations and pooled
        // maps, never between a conv and its pool, never on the output layer.
        const bool block_out = spec.kind != LayerKind::Conv && i != last;
        if (drop && dropout->p_hidden > 0.0 && block_out) {
            auto [masked, mask] = apply_dropout<Scalar>(trace.post[i], dropout->p_hidden, *rng, DropoutMode::train);
            trace.post[i] = std::move(masked);
            trace.drop_scale[i] = mask * Scalar(1.0 / (1.0 - dropout->p_hidden));
        }
        cur = &trace.post[i];
    }
    return trace;
}

}  // namespace fblab

#endif  // FBLAB_NETWORK_HPP
