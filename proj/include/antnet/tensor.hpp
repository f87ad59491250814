#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "antnet/common.hpp"

namespace antnet {

/// Dense rank-4 array in N,C,H,W order, row-major. The universal
/// activation/weight carrier; immutable by convention once built by an op.
template <typename T>
struct Tensor4 {
    static_assert(std::is_floating_point_v<T>, "Tensor4 requires a real scalar type");

    i64 n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;

    Tensor4(i64 n_, i64 c_, i64 h_, i64 w_) : n(n_), c(c_), h(h_), w(w_) {
        if (n < 1 || c < 1 || h < 1 || w < 1) {
            throw DimensionError("Tensor4 dims must all be >= 1, got " + shape_str());
        }
        data.assign(static_cast<std::size_t>(numel()), T(0));
    }

    static Tensor4 full(i64 n, i64 c, i64 h, i64 w, T value) {
        Tensor4 t(n, c, h, w);
        for (auto& v : t.data) v = value;
        return t;
    }

    i64 numel() const { return n * c * h * w; }

    i64 index(i64 in, i64 ic, i64 iy, i64 ix) const {
        return ((in * c + ic) * h + iy) * w + ix;
    }

    T& at(i64 in, i64 ic, i64 iy, i64 ix) { return data[static_cast<std::size_t>(index(in, ic, iy, ix))]; }
    const T& at(i64 in, i64 ic, i64 iy, i64 ix) const {
        return data[static_cast<std::size_t>(index(in, ic, iy, ix))];
    }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    bool all_finite() const {
        for (const T v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << n << "x" << c << "x" << h << "x" << w;
        return os.str();
    }
};

/// Row-major matrix, used by the attention/FFN paths and the linear op.
template <typename T>
struct Mat {
    i64 rows = 0, cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(i64 r, i64 c) : rows(r), cols(c) {
        if (r < 1 || c < 1) throw DimensionError("Mat dims must be >= 1");
        data.assign(static_cast<std::size_t>(r * c), T(0));
    }

    T& at(i64 r, i64 c) { return data[static_cast<std::size_t>(r * cols + c)]; }
    const T& at(i64 r, i64 c) const { return data[static_cast<std::size_t>(r * cols + c)]; }

    i64 numel() const { return rows * cols; }
};

/// Borrowed view of one parameter tensor: 4-dim shape plus flat storage.
/// Vectors show up as (1,len,1,1), matrices as (1,1,rows,cols).
template <typename T>
struct TensorView {
    std::array<i64, 4> dims{1, 1, 1, 1};
    T* ptr = nullptr;
    i64 size = 0;
};

template <typename T>
TensorView<T> view_of(Tensor4<T>& t) {
    return TensorView<T>{{t.n, t.c, t.h, t.w}, t.data.data(), t.numel()};
}

template <typename T>
TensorView<T> view_of(Mat<T>& m) {
    return TensorView<T>{{1, 1, m.rows, m.cols}, m.data.data(), m.numel()};
}

template <typename T>
TensorView<T> view_of(std::vector<T>& v) {
    const i64 len = static_cast<i64>(v.size());
    return TensorView<T>{{1, len, 1, 1}, v.data(), len};
}

}  // namespace antnet
