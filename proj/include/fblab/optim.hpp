#ifndef FBLAB_OPTIM_HPP
#define FBLAB_OPTIM_HPP

#include <string>
#include <vector>

#include "fblab/credit.hpp"
#include "fblab/network.hpp"

namespace fblab {

enum class Optimizer { SGD, RMSprop };

inline Optimizer optimizer_from_string(const std::string& s)
{
    if (s == "sgd") return Optimizer::SGD;
    if (s == "rmsprop") return Optimizer::RMSprop;
    throw ValueError("unknown optimizer '" + s + "'");
}

inline const char* to_string(Optimizer o)
{
    return o == Optimizer::SGD ? "sgd" : "rmsprop";
}

namespace detail {

template <typename Scalar>
void check_grads(const NetworkT<Scalar>& net, const UpdateDirectionsT<Scalar>& ud)
{
    if (ud.weight_grad.size() != net.weights.size() || ud.bias_grad.size() != net.biases.size())
        throw ShapeError("optimizer: gradient count does not match network layers");
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        if (ud.weight_grad[i].size() == 0) continue;  // pool layers carry no parameters
        require_same_shape(ud.weight_grad[i].rows(), ud.weight_grad[i].cols(), net.weights[i].rows(),
                           net.weights[i].cols(), "optimizer");
    }
}

}  // namespace detail

/// p <- p - lr * g. Frozen layers are left untouched no matter the gradient.
template <typename Scalar>
void sgd_step(NetworkT<Scalar>& net, const UpdateDirectionsT<Scalar>& ud, double lr)
{
    detail::check_grads(net, ud);
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        if (net.layers[i].frozen || ud.weight_grad[i].size() == 0) continue;
        net.weights[i] -= Scalar(lr) * ud.weight_grad[i];
        net.biases[i] -= Scalar(lr) * ud.bias_grad[i];
    }
}

/// Running mean-square accumulators, one per parameter tensor. Shapes are
/// fixed at creation; entries never go negative.
template <typename Scalar = double>
struct RmsStateT {
    double rho = 0.99;
    double eps = 1e-8;
    double lr = 1e-4;
    std::vector<MatrixX<Scalar>> sq_weight;
    std::vector<VectorX<Scalar>> sq_bias;

    static RmsStateT like(const NetworkT<Scalar>& net, double lr, double rho = 0.99,
                          double eps = 1e-8)
    {
        RmsStateT s;
        s.lr = lr;
        s.rho = rho;
        s.eps = eps;
        for (std::size_t i = 0; i < net.weights.size(); ++i) {
            s.sq_weight.push_back(MatrixX<Scalar>::Zero(net.weights[i].rows(), net.weights[i].cols()));
            s.sq_bias.push_back(VectorX<Scalar>::Zero(net.biases[i].size()));
        }
        return s;
    }
};

using RmsState = RmsStateT<double>;

/// s <- rho*s + (1-rho)*g^2;  p <- p - lr * g / (sqrt(s) + eps).
template <typename Scalar>
void rmsprop_step(RmsStateT<Scalar>& state, NetworkT<Scalar>& net, const UpdateDirectionsT<Scalar>& ud)
{
    detail::check_grads(net, ud);
    if (state.sq_weight.size() != net.weights.size())
        throw ShapeError("rmsprop_step: state does not match network");
    const Scalar rho = Scalar(state.rho);
    const Scalar one_minus = Scalar(1) - rho;
    const Scalar eps = Scalar(state.eps);
    const Scalar lr = Scalar(state.lr);
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        if (net.layers[i].frozen || ud.weight_grad[i].size() == 0) continue;
        auto& sw = state.sq_weight[i];
        auto& sb = state.sq_bias[i];
        require_same_shape(sw.rows(), sw.cols(), ud.weight_grad[i].rows(), ud.weight_grad[i].cols(),
                           "rmsprop_step");
        sw = rho * sw + one_minus * ud.weight_grad[i].cwiseAbs2();
        sb = rho * sb + one_minus * ud.bias_grad[i].cwiseAbs2();
        net.weights[i].array() -= lr * ud.weight_grad[i].array() / (sw.array().sqrt() + eps);
        net.biases[i].array() -= lr * ud.bias_grad[i].array() / (sb.array().sqrt() + eps);
    }
}

template <typename Scalar>
void optimizer_step(Optimizer opt, RmsStateT<Scalar>& state, NetworkT<Scalar>& net,
                    const UpdateDirectionsT<Scalar>& ud)
{
    if (opt == Optimizer::SGD)
        sgd_step(net, ud, state.lr);
    else
        rmsprop_step(state, net, ud);
}

}  // namespace fblab

#endif  // FBLAB_OPTIM_HPP
