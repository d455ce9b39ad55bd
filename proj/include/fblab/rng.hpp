#ifndef FBLAB_RNG_HPP
#define FBLAB_RNG_HPP

#include <cstdint>
#include <vector>

#include "fblab/linalg.hpp"

namespace fblab {

/// Purpose-separated random streams. Drawing from one stream never perturbs
/// another, so e.g. enabling dropout cannot change the weight initialization.
enum class Stream : std::uint64_t {
    init = 0,
    feedback = 1,
    dropout = 2,
    shuffle = 3,
};

/// Deterministic generator: xoshiro256** seeded through splitmix64.
/// The algorithm and its constants are fixed; two runs with the same
/// (seed, stream) produce bitwise-identical sequences on any platform.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, Stream stream)
    {
        // Per-stream tags keep the four streams statistically independent.
        static constexpr std::uint64_t tags[4] = {
            0x696e697400000000ull,  // "init"
            0x6665656400000000ull,  // "feed"
            0x64726f7000000000ull,  // "drop"
            0x7368756600000000ull,  // "shuf"
        };
        std::uint64_t sm = seed ^ tags[static_cast<std::uint64_t>(stream)];
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64()
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double next_unit()
    {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [-limit, +limit].
    double next_symmetric(double limit)
    {
        return limit * (2.0 * next_unit() - 1.0);
    }

    /// Unbiased integer in [0, n) via mask rejection; n must be positive.
    std::uint64_t next_below(std::uint64_t n)
    {
        if (n == 0) throw ValueError("SeededRng::next_below: n must be positive");
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        std::uint64_t draw;
        do {
            draw = next_u64() & mask;
        } while (draw >= n);
        return draw;
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x)
    {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k)
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

/// Matrix with entries drawn i.i.d. uniform on [-limit, +limit], filled in
/// row-major order so the sequence-to-entry mapping is storage independent.
template <typename Scalar = double>
MatrixX<Scalar> sample_uniform(Index rows, Index cols, double limit, SeededRng& rng)
{
    if (!(limit > 0.0)) throw ValueError("sample_uniform: limit must be positive");
    MatrixX<Scalar> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = static_cast<Scalar>(rng.next_symmetric(limit));
    return m;
}

/// Deterministic Fisher-Yates; std::shuffle is implementation-defined and
/// would break cross-platform reproducibility.
template <typename T>
void shuffle(std::vector<T>& v, SeededRng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace fblab

#endif  // FBLAB_RNG_HPP
