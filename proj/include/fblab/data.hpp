#ifndef FBLAB_DATA_HPP
#define FBLAB_DATA_HPP

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fblab/linalg.hpp"
#include "fblab/rng.hpp"

namespace fblab {

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

enum class SplitKind { train, validation, test };

/// One split of a dataset: inputs are (features x samples), targets one-hot
/// (classes x samples) with each column summing to exactly one.
template <typename Scalar = double>
struct DatasetT {
    MatrixX<Scalar> inputs;
    MatrixX<Scalar> targets;
    std::vector<int> labels;
    SplitKind kind = SplitKind::train;

    Index count() const { return inputs.cols(); }
    Index features() const { return inputs.rows(); }
    Index classes() const { return targets.rows(); }
};

using Dataset = DatasetT<double>;

// ---------------------------------------------------------------------------
// Raw file ingestion
// ---------------------------------------------------------------------------

namespace detail {

/// Whole file as bytes; gzip streams (1f 8b) are inflated transparently.
inline std::vector<std::uint8_t> read_bytes(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        std::vector<std::uint8_t> out;
        out.resize(bytes.size() * 4 + 1024);
        z_stream zs{};
        if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
            throw DataError("gzip: inflateInit failed for '" + path + "'");
        zs.next_in = bytes.data();
        zs.avail_in = static_cast<uInt>(bytes.size());
        int rc = Z_OK;
        std::size_t written = 0;
        while (rc != Z_STREAM_END) {
            if (written == out.size()) out.resize(out.size() * 2);
            zs.next_out = out.data() + written;
            zs.avail_out = static_cast<uInt>(out.size() - written);
            rc = inflate(&zs, Z_NO_FLUSH);
            if (rc != Z_OK && rc != Z_STREAM_END) {
                inflateEnd(&zs);
                throw DataError("gzip: corrupt stream in '" + path + "'");
            }
            written = out.size() - zs.avail_out;
        }
        inflateEnd(&zs);
        out.resize(written);
        return out;
    }
    return bytes;
}

inline std::uint32_t be32(const std::uint8_t* p)
{
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

inline void put_be32(std::ostream& os, std::uint32_t v)
{
    const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    os.write(b, 4);
}

}  // namespace detail

struct RawImages {
    Index count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols, image-major
};

struct RawLabels {
    std::vector<std::uint8_t> labels;
};

/// IDX image file: big-endian magic 2051, then count, rows, cols, then pixels.
inline RawImages load_idx_images(const std::string& path)
{
    const auto bytes = detail::read_bytes(path);
    if (bytes.size() < 16) throw DataError("idx: truncated header in '" + path + "'");
    const auto magic = detail::be32(bytes.data());
    if (magic != 2051)
        throw DataError("idx: bad image magic " + std::to_string(magic) + " in '" + path +
                        "', expected 2051");
    RawImages img;
    img.count = detail::be32(bytes.data() + 4);
    img.rows = detail::be32(bytes.data() + 8);
    img.cols = detail::be32(bytes.data() + 12);
    const std::size_t need = 16 + std::size_t(img.count) * img.rows * img.cols;
    if (bytes.size() != need)
        throw DataError("idx: '" + path + "' holds " + std::to_string(bytes.size()) +
                        " bytes, header implies " + std::to_string(need));
    img.pixels.assign(bytes.begin() + 16, bytes.end());
    return img;
}

/// IDX label file: big-endian magic 2049, then count, then one byte per label.
inline RawLabels load_idx_labels(const std::string& path)
{
    const auto bytes = detail::read_bytes(path);
    if (bytes.size() < 8) throw DataError("idx: truncated header in '" + path + "'");
    const auto magic = detail::be32(bytes.data());
    if (magic != 2049)
        throw DataError("idx: bad label magic " + std::to_string(magic) + " in '" + path +
                        "', expected 2049");
    const auto count = detail::be32(bytes.data() + 4);
    if (bytes.size() != 8 + std::size_t(count))
        throw DataError("idx: '" + path + "' label payload does not match its header count");
    RawLabels lab;
    lab.labels.assign(bytes.begin() + 8, bytes.end());
    return lab;
}

/// Loads an MNIST-style image/label pair and cross-checks the sample counts.
inline std::pair<RawImages, RawLabels> load_mnist_idx(const std::string& images_path,
                                                      const std::string& labels_path)
{
    RawImages img = load_idx_images(images_path);
    RawLabels lab = load_idx_labels(labels_path);
    if (std::size_t(img.count) != lab.labels.size())
        throw DataError("idx: " + std::to_string(img.count) + " images but " +
                        std::to_string(lab.labels.size()) + " labels");
    return {std::move(img), std::move(lab)};
}

/// Re-serialization, byte-exact inverse of load_idx_images.
inline void save_idx_images(const RawImages& img, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    detail::put_be32(os, 2051);
    detail::put_be32(os, std::uint32_t(img.count));
    detail::put_be32(os, std::uint32_t(img.rows));
    detail::put_be32(os, std::uint32_t(img.cols));
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
}

inline void save_idx_labels(const RawLabels& lab, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    detail::put_be32(os, 2049);
    detail::put_be32(os, std::uint32_t(lab.labels.size()));
    os.write(reinterpret_cast<const char*>(lab.labels.data()),
             static_cast<std::streamsize>(lab.labels.size()));
}

enum class CifarVariant { cifar10, cifar100 };

struct RawCifar {
    Index count = 0;
    std::vector<std::uint8_t> labels;  // fine labels for cifar100
    std::vector<std::uint8_t> pixels;  // count * 3072
};

/// CIFAR binary batches: cifar10 records are 1 label byte + 3072 pixels,
/// cifar100 records 2 label bytes (coarse then fine; fine kept) + 3072 pixels.
inline RawCifar load_cifar_binary(const std::vector<std::string>& paths, CifarVariant variant)
{
    const std::size_t label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
    const std::size_t record = label_bytes + 3072;
    RawCifar out;
    for (const auto& path : paths) {
        const auto bytes = detail::read_bytes(path);
        if (bytes.empty() || bytes.size() % record != 0)
            throw DataError("cifar: '" + path + "' length " + std::to_string(bytes.size()) +
                            " is not a positive multiple of the record size " + std::to_string(record));
        const std::size_t n = bytes.size() / record;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* rec = bytes.data() + i * record;
            out.labels.push_back(rec[label_bytes - 1]);  // fine label is the last label byte
            out.pixels.insert(out.pixels.end(), rec + label_bytes, rec + record);
        }
        out.count += static_cast<Index>(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// value / 255 as a (features x samples) matrix.
template <typename Scalar = double>
MatrixX<Scalar> scale_unit(const std::vector<std::uint8_t>& bytes, Index features, Index count)
{
    if (static_cast<std::size_t>(features) * count != bytes.size())
        throw ShapeError("scale_unit: " + std::to_string(bytes.size()) + " bytes cannot fill " +
                         std::to_string(features) + "x" + std::to_string(count));
    MatrixX<Scalar> m(features, count);
    for (Index s = 0; s < count; ++s)
        for (Index f = 0; f < features; ++f)
            m(f, s) = Scalar(bytes[std::size_t(s) * features + f]) / Scalar(255);
    return m;
}

/// Exact one-hot columns; labels must lie in [0, classes).
template <typename Scalar = double>
MatrixX<Scalar> one_hot(const std::vector<int>& labels, Index classes)
{
    MatrixX<Scalar> m = MatrixX<Scalar>::Zero(classes, static_cast<Index>(labels.size()));
    for (std::size_t s = 0; s < labels.size(); ++s) {
        if (labels[s] < 0 || labels[s] >= classes)
            throw ValueError("one_hot: label " + std::to_string(labels[s]) + " outside [0, " +
                             std::to_string(classes) + ")");
        m(labels[s], static_cast<Index>(s)) = Scalar(1);
    }
    return m;
}

/// ZCA whitening fit on the training inputs only: mean removal followed by
/// V (Lambda + eps I)^(-1/2) V^T from the eigendecomposition of the covariance.
template <typename Scalar = double>
struct WhitenTransformT {
    VectorX<Scalar> mean;
    MatrixX<Scalar> zca;
};

using WhitenTransform = WhitenTransformT<double>;

template <typename Scalar>
WhitenTransformT<Scalar> whiten_fit(const MatrixX<Scalar>& train_inputs, double eps_zca = 1e-5)
{
    const Index d = train_inputs.rows();
    const Index n = train_inputs.cols();
    if (n < 2) throw ValueError("whiten_fit: need at least two samples");
    if (n < d)
        std::cerr << "whiten_fit: covariance from " << n << " samples over " << d
                  << " features is rank-deficient; relying on the eigenvalue floor\n";
    WhitenTransformT<Scalar> t;
    t.mean = train_inputs.rowwise().mean();
    MatrixX<Scalar> centered = train_inputs.colwise() - t.mean;
    MatrixX<Scalar> cov = centered * centered.transpose() / Scalar(n);
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(cov);
    VectorX<Scalar> inv_sqrt =
        (eig.eigenvalues().array().max(Scalar(0)) + Scalar(eps_zca)).rsqrt();
    t.zca = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    return t;
}

template <typename Scalar>
MatrixX<Scalar> whiten_apply(const WhitenTransformT<Scalar>& t, const MatrixX<Scalar>& inputs)
{
    if (inputs.rows() != t.mean.size())
        throw ShapeError("whiten_apply: feature count does not match the fitted transform");
    return t.zca * (inputs.colwise() - t.mean);
}

// ---------------------------------------------------------------------------
// Split helpers
// ---------------------------------------------------------------------------

/// First n samples, preserving order.
template <typename Scalar>
DatasetT<Scalar> take_prefix(const DatasetT<Scalar>& d, Index n)
{
    if (n <= 0 || n > d.count()) throw ValueError("take_prefix: bad subset size");
    DatasetT<Scalar> out;
    out.kind = d.kind;
    out.inputs = d.inputs.leftCols(n);
    out.targets = d.targets.leftCols(n);
    out.labels.assign(d.labels.begin(), d.labels.begin() + n);
    return out;
}

/// Splits off the last n_val samples as a validation set; the remainder keeps
/// the train tag. Deterministic and disjoint by construction.
template <typename Scalar>
std::pair<DatasetT<Scalar>, DatasetT<Scalar>> split_validation(const DatasetT<Scalar>& train,
                                                               Index n_val)
{
    if (n_val <= 0 || n_val >= train.count())
        throw ValueError("split_validation: validation size must be in (0, count)");
    const Index n_train = train.count() - n_val;
    DatasetT<Scalar> head, tail;
    head.kind = SplitKind::train;
    head.inputs = train.inputs.leftCols(n_train);
    head.targets = train.targets.leftCols(n_train);
    head.labels.assign(train.labels.begin(), train.labels.begin() + n_train);
    tail.kind = SplitKind::validation;
    tail.inputs = train.inputs.rightCols(n_val);
    tail.targets = train.targets.rightCols(n_val);
    tail.labels.assign(train.labels.end() - n_val, train.labels.end());
    return {std::move(head), std::move(tail)};
}

}  // namespace fblab

#endif  // FBLAB_DATA_HPP
