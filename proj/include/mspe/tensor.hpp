#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace mspe {

/// Fixed-rank row-major tensor.
template <typename T, std::size_t R>
struct TensorN {
    std::array<std::size_t, R> shape{};
    std::vector<T> data;

    TensorN() = default;
    explicit TensorN(const std::array<std::size_t, R>& s, T fill = T(0)) : shape(s) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        data.assign(n, fill);
    }

    std::size_t size() const { return data.size(); }

    template <typename... Ix>
        requires(sizeof...(Ix) == R)
    T& operator()(Ix... ix) {
        return data[flat(ix...)];
    }

    template <typename... Ix>
        requires(sizeof...(Ix) == R)
    const T& operator()(Ix... ix) const {
        return data[flat(ix...)];
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    template <typename... Ix>
    std::size_t flat(Ix... ix) const {
        std::array<std::size_t, R> idx{static_cast<std::size_t>(ix)...};
        std::size_t f = 0;
        for (std::size_t d = 0; d < R; ++d) f = f * shape[d] + idx[d];
        return f;
    }
};

/// Image: (height, width, channels).
template <typename T>
using Image = TensorN<T, 3>;

/// Patch kernel: (kh, kw, channels, embed_dim).
template <typename T>
using Kernel = TensorN<T, 4>;

/// Token or position grid: (nh, nw, embed_dim).
template <typename T>
using Grid = TensorN<T, 3>;

/// Output of patch embedding, tagged with the resolution it came from.
template <typename T>
struct TokenGrid {
    Grid<T> tokens;
    std::size_t source_h = 0;
    std::size_t source_w = 0;
};

} // namespace mspe
