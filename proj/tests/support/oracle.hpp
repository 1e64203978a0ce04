#pragma once

// Independent reference semantics for the simulator: a naive triple loop
// accumulating in double. Kept free of any compiler/lowering machinery.

#include "anvil/matrix.hpp"
#include "anvil/types.hpp"

namespace anvil::testing {

inline Matrix naive_matmul(long m, long n, long k, const Matrix& a, const Matrix& b,
                           Layout c_layout = Layout::col_major()) {
    Matrix c = Matrix::zeros(m, n, c_layout);
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) {
            double acc = 0.0;
            for (long kk = 0; kk < k; ++kk)
                acc += static_cast<double>(a.at(i, kk)) * static_cast<double>(b.at(kk, j));
            c.at(i, j) = static_cast<float>(acc);
        }
    return c;
}

inline double max_abs_error(const Matrix& got, const Matrix& want) {
    double worst = 0.0;
    for (long r = 0; r < got.rows; ++r)
        for (long c = 0; c < got.cols; ++c)
            worst = std::max(worst, std::fabs(static_cast<double>(got.at(r, c)) -
                                              static_cast<double>(want.at(r, c))));
    return worst;
}

} // namespace anvil::testing
