#ifndef FBLAB_LINALG_HPP
#define FBLAB_LINALG_HPP

#include <Eigen/Dense>

#include <sstream>
#include <stdexcept>
#include <string>

namespace fblab {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

using Index = Eigen::Index;

/// Thrown whenever two operands do not have compatible shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string shape_str(Index rows, Index cols)
{
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

}  // namespace detail

/// C = A * B with an explicit inner-dimension check. Both operand shapes are
/// reported on mismatch.
template <typename DerivedA, typename DerivedB>
auto matmul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b)
{
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, lhs is " +
                         detail::shape_str(a.rows(), a.cols()) + ", rhs is " +
                         detail::shape_str(b.rows(), b.cols()));
    }
    return (a.derived() * b.derived()).eval();
}

/// Element-wise product; operands must have identical shapes.
template <typename DerivedA, typename DerivedB>
auto hadamard(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("hadamard: shapes differ, lhs is " +
                         detail::shape_str(a.rows(), a.cols()) + ", rhs is " +
                         detail::shape_str(b.rows(), b.cols()));
    }
    return a.derived().cwiseProduct(b.derived()).eval();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m)
{
    return m.allFinite();
}

inline void require_same_shape(Index r1, Index c1, Index r2, Index c2, const char* who)
{
    if (r1 != r2 || c1 != c2) {
        throw ShapeError(std::string(who) + ": shapes differ, " + detail::shape_str(r1, c1) +
                         " vs " + detail::shape_str(r2, c2));
    }
}

}  // namespace fblab

#endif  // FBLAB_LINALG_HPP
