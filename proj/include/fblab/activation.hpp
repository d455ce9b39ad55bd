#ifndef FBLAB_ACTIVATION_HPP
#define FBLAB_ACTIVATION_HPP

#include <string>

#include "fblab/linalg.hpp"

namespace fblab {

enum class Activation {
    Tanh,
    Logistic,
    ReLU,
    Identity,
};

inline const char* to_string(Activation a)
{
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Logistic: return "logistic";
        case Activation::ReLU: return "relu";
        case Activation::Identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s)
{
    if (s == "tanh") return Activation::Tanh;
    if (s == "logistic") return Activation::Logistic;
    if (s == "relu") return Activation::ReLU;
    if (s == "identity") return Activation::Identity;
    throw ValueError("unknown activation '" + s + "'");
}

template <typename Scalar>
MatrixX<Scalar> activate(Activation kind, const MatrixX<Scalar>& a)
{
    switch (kind) {
        case Activation::Tanh:
            return a.array().tanh().matrix();
        case Activation::Logistic:
            return (Scalar(1) / (Scalar(1) + (-a.array()).exp())).matrix();
        case Activation::ReLU:
            return a.cwiseMax(Scalar(0));
        case Activation::Identity:
            return a;
    }
    throw ValueError("activate: bad kind");
}

/// Derivative evaluated at the pre-activation a:
/// tanh'(a) = 1 - tanh^2(a), logistic'(a) = s(a)(1 - s(a)), relu'(a) = [a > 0].
template <typename Scalar>
MatrixX<Scalar> activate_grad(Activation kind, const MatrixX<Scalar>& a)
{
    switch (kind) {
        case Activation::Tanh: {
            auto t = a.array().tanh();
            return (Scalar(1) - t.square()).matrix();
        }
        case Activation::Logistic: {
            auto s = Scalar(1) / (Scalar(1) + (-a.array()).exp());
            return (s * (Scalar(1) - s)).matrix();
        }
        case Activation::ReLU:
            return (a.array() > Scalar(0)).template cast<Scalar>().matrix();
        case Activation::Identity:
            return MatrixX<Scalar>::Ones(a.rows(), a.cols());
    }
    throw ValueError("activate_grad: bad kind");
}

}  // namespace fblab

#endif  // FBLAB_ACTIVATION_HPP
