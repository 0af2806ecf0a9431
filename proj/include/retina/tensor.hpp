#pragma once

#include <cmath>
#include <vector>

#include "retina/error.hpp"

namespace retina {

// Dense NCHW tensor of doubles.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
            throw InvalidArgument("Tensor4 dimensions must be positive");
    }

    std::size_t index(int i, int ci, int y, int x) const {
        return ((static_cast<std::size_t>(i) * c + ci) * h + y) * w + x;
    }
    double& at(int i, int ci, int y, int x) { return data[index(i, ci, y, x)]; }
    double at(int i, int ci, int y, int x) const { return data[index(i, ci, y, x)]; }

    const double* plane(int i, int ci) const {
        return data.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
    }
    double* plane(int i, int ci) {
        return data.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

} // namespace retina
