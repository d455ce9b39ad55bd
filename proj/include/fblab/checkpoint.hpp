#ifndef FBLAB_CHECKPOINT_HPP
#define FBLAB_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "fblab/network.hpp"

// Network checkpoint, binary layout version 1, all fields little-endian:
//   "FBNC" | u32 version | u8 scalar_bytes | u8 endian(1=little) | u16 0
//   input extent: u8 spatial, u32 channels, u32 height, u32 width
//   u32 layer_count, then per layer:
//     u8 kind (0 dense, 1 conv, 2 maxpool) | u8 activation (0 tanh, 1 logistic,
//     2 relu, 3 identity) | u8 frozen
//     dense: u32 units; conv: u32 filters, kh, kw, stride;
//     maxpool: u32 window_h, window_w, stride
//     u64 w_rows, u64 w_cols, scalars row-major; u64 b_size, scalars
// Round-trips bitwise in double precision.

namespace fblab {

class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("checkpoint: truncated file");
    return v;
}

template <typename Scalar>
void put_matrix(std::ostream& os, const MatrixX<Scalar>& m)
{
    put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) put<Scalar>(os, m(i, j));
}

template <typename Scalar>
MatrixX<Scalar> get_matrix(std::istream& is)
{
    const auto rows = static_cast<Index>(get<std::uint64_t>(is));
    const auto cols = static_cast<Index>(get<std::uint64_t>(is));
    MatrixX<Scalar> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = get<Scalar>(is);
    return m;
}

}  // namespace detail

template <typename Scalar>
void save_network(const NetworkT<Scalar>& net, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
    os.write("FBNC", 4);
    detail::put<std::uint32_t>(os, 1);
    detail::put<std::uint8_t>(os, sizeof(Scalar));
    detail::put<std::uint8_t>(os, 1);
    detail::put<std::uint16_t>(os, 0);
    detail::put<std::uint8_t>(os, net.input.spatial ? 1 : 0);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.input.channels));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.input.height));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.input.width));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers.size()));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& s = net.layers[i];
        detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.kind));
        detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.activation));
        detail::put<std::uint8_t>(os, s.frozen ? 1 : 0);
        switch (s.kind) {
            case LayerKind::Dense:
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.units));
                break;
            case LayerKind::Conv:
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.filters));
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.kernel_h));
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.kernel_w));
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.stride));
                break;
            case LayerKind::MaxPool:
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.window_h));
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.window_w));
                detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.stride));
                break;
        }
        detail::put_matrix<Scalar>(os, net.weights[i]);
        detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(net.biases[i].size()));
        for (Index k = 0; k < net.biases[i].size(); ++k) detail::put<Scalar>(os, net.biases[i](k));
    }
    if (!os) throw CheckpointError("checkpoint: write to '" + path + "' failed");
}

template <typename Scalar = double>
NetworkT<Scalar> load_network(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "FBNC")
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    const auto version = detail::get<std::uint32_t>(is);
    if (version != 1) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    const auto scalar_bytes = detail::get<std::uint8_t>(is);
    if (scalar_bytes != sizeof(Scalar))
        throw CheckpointError("checkpoint: scalar width " + std::to_string(scalar_bytes) +
                              " does not match, expected " + std::to_string(sizeof(Scalar)));
    if (detail::get<std::uint8_t>(is) != 1) throw CheckpointError("checkpoint: not little-endian");
    detail::get<std::uint16_t>(is);

    Extent input;
    input.spatial = detail::get<std::uint8_t>(is) != 0;
    input.channels = detail::get<std::uint32_t>(is);
    input.height = detail::get<std::uint32_t>(is);
    input.width = detail::get<std::uint32_t>(is);

    const auto n_layers = detail::get<std::uint32_t>(is);
    std::vector<LayerSpec> specs;
    std::vector<MatrixX<Scalar>> weights;
    std::vector<VectorX<Scalar>> biases;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec s;
        s.kind = static_cast<LayerKind>(detail::get<std::uint8_t>(is));
        s.activation = static_cast<Activation>(detail::get<std::uint8_t>(is));
        s.frozen = detail::get<std::uint8_t>(is) != 0;
        switch (s.kind) {
            case LayerKind::Dense:
                s.units = detail::get<std::uint32_t>(is);
                break;
            case LayerKind::Conv:
                s.filters = detail::get<std::uint32_t>(is);
                s.kernel_h = detail::get<std::uint32_t>(is);
                s.kernel_w = detail::get<std::uint32_t>(is);
                s.stride = detail::get<std::uint32_t>(is);
                break;
            case LayerKind::MaxPool:
                s.window_h = detail::get<std::uint32_t>(is);
                s.window_w = detail::get<std::uint32_t>(is);
                s.stride = detail::get<std::uint32_t>(is);
                break;
            default:
                throw CheckpointError("checkpoint: bad layer kind");
        }
        specs.push_back(s);
        weights.push_back(detail::get_matrix<Scalar>(is));
        const auto b_size = static_cast<Index>(detail::get<std::uint64_t>(is));
        VectorX<Scalar> b(b_size);
        for (Index k = 0; k < b_size; ++k) b(k) = detail::get<Scalar>(is);
        biases.push_back(std::move(b));
    }

    // Rebuild extents through a skeleton, then splice the params in.
    NetworkT<Scalar> net = build_network<Scalar>(input, specs);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (net.weights[i].rows() != weights[i].rows() || net.weights[i].cols() != weights[i].cols())
            throw CheckpointError("checkpoint: layer " + std::to_string(i) +
                                  " weight shape does not match its spec");
        if (net.biases[i].size() != biases[i].size())
            throw CheckpointError("checkpoint: layer " + std::to_string(i) +
                                  " bias length does not match its spec");
        net.weights[i] = std::move(weights[i]);
        net.biases[i] = std::move(biases[i]);
    }
    return net;
}

}  // namespace fblab

#endif  // FBLAB_CHECKPOINT_HPP
