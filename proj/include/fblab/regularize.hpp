#ifndef FBLAB_REGULARIZE_HPP
#define FBLAB_REGULARIZE_HPP

#include "fblab/credit.hpp"
#include "fblab/dropout.hpp"
#include "fblab/network.hpp"

namespace fblab {

/// Fast-sign adversarial examples: x_adv = clip(x + eps * sign(dJ/dx), 0, 1).
/// The input gradient always comes from a true transposed-weight pass, no
/// matter which feedback rule the surrounding training run uses, because the
/// perturbation is defined by the loss gradient itself. Dropout is off while
/// generating.
template <typename Scalar>
MatrixX<Scalar> fast_sign_adversarial(const NetworkT<Scalar>& net, const MatrixX<Scalar>& x,
                                      const MatrixX<Scalar>& y, double eps)
{
    if (eps < 0.0) throw ValueError("fast_sign_adversarial: eps must be non-negative");
    if (x.minCoeff() < Scalar(0) || x.maxCoeff() > Scalar(1))
        throw ValueError("fast_sign_adversarial: inputs must lie in [0, 1]");
    const auto trace = forward(net, x);
    const auto e = output_error<Scalar>(trace.output(), y);
    const auto ud = backward_bp(net, trace, e, /*want_input_grad=*/true);
    MatrixX<Scalar> sign = ud.input_grad.unaryExpr(
        [](Scalar g) { return g > Scalar(0) ? Scalar(1) : (g < Scalar(0) ? Scalar(-1) : Scalar(0)); });
    return (x + Scalar(eps) * sign).cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

}  // namespace fblab

#endif  // FBLAB_REGULARIZE_HPP
