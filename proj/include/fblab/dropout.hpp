#ifndef FBLAB_DROPOUT_HPP
#define FBLAB_DROPOUT_HPP

#include <utility>

#include "fblab/linalg.hpp"
#include "fblab/rng.hpp"

namespace fblab {

enum class DropoutMode { train, eval };

struct DropoutSpec {
    double p_input = 0.0;
    double p_hidden = 0.0;
    DropoutMode mode = DropoutMode::train;

    bool active() const { return p_input > 0.0 || p_hidden > 0.0; }
};

/// Inverted dropout: in train mode each entry is zeroed with probability p and
/// survivors are scaled by 1/(1-p), so eval mode is the identity. Returns the
/// masked matrix and the 0/1 mask.
template <typename Scalar>
std::pair<MatrixX<Scalar>, MatrixX<Scalar>> apply_dropout(const MatrixX<Scalar>& h, double p,
                                                          SeededRng& rng, DropoutMode mode)
{
    if (p < 0.0 || p >= 1.0) throw ValueError("apply_dropout: p must lie in [0, 1)");
    if (mode == DropoutMode::eval || p == 0.0) {
        return {h, MatrixX<Scalar>::Ones(h.rows(), h.cols())};
    }
    MatrixX<Scalar> mask(h.rows(), h.cols());
    for (Index i = 0; i < h.rows(); ++i)
        for (Index j = 0; j < h.cols(); ++j)
            mask(i, j) = rng.next_unit() < p ? Scalar(0) : Scalar(1);
    const Scalar scale = Scalar(1) / Scalar(1.0 - p);
    return {h.cwiseProduct(mask) * scale, mask};
}

}  // namespace fblab

#endif  // FBLAB_DROPOUT_HPP
