#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "anvil/types.hpp"

namespace anvil {

// Host-side matrix backed by physical storage in the given layout.
struct Matrix {
    long rows = 0, cols = 0;
    Layout layout;
    std::vector<float> data;

    static Matrix zeros(long r, long c, Layout l = Layout::col_major()) {
        Matrix m;
        m.rows = r;
        m.cols = c;
        m.layout = l;
        m.data.assign(static_cast<size_t>(l.extent(r, c)), 0.0f);
        return m;
    }

    long linear(long r, long c) const {
        return r * layout.row_stride(rows, cols) + c * layout.col_stride(rows, cols);
    }
    float at(long r, long c) const { return data[static_cast<size_t>(linear(r, c))]; }
    float& at(long r, long c) { return data[static_cast<size_t>(linear(r, c))]; }
};

// splitmix64: fixed, platform-independent stream for reproducible inputs
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed) {}
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
};

inline void fill_integers(Matrix& m, uint64_t seed, long lo = -3, long hi = 3) {
    Rng rng(seed);
    uint64_t span = static_cast<uint64_t>(hi - lo + 1);
    for (long r = 0; r < m.rows; ++r)
        for (long c = 0; c < m.cols; ++c)
            m.at(r, c) = static_cast<float>(lo + static_cast<long>(rng.next() % span));
}

inline void fill_uniform(Matrix& m, uint64_t seed) {
    Rng rng(seed);
    for (long r = 0; r < m.rows; ++r)
        for (long c = 0; c < m.cols; ++c) {
            double u = static_cast<double>(rng.next() >> 11) * 0x1.0p-53; // [0,1)
            m.at(r, c) = static_cast<float>(2.0 * u - 1.0);
        }
}

// Nearest F16-representable value (round to nearest even); inputs declared
// F16 are snapped to this grid at ingestion.
inline float round_to_f16(float x) {
    if (x == 0.0f || !std::isfinite(x)) return x;
    int e = 0;
    std::frexp(std::fabs(x), &e); // |x| = m * 2^e, m in [0.5, 1)
    if (e - 1 < -14) {
        // subnormal range: quantum 2^-24
        float q = std::ldexp(1.0f, -24);
        return std::nearbyint(x / q) * q;
    }
    if (e - 1 > 15) return x > 0 ? 65504.0f : -65504.0f;
    // 11 significant bits
    float scaled = std::ldexp(x, 11 - e);
    return std::ldexp(std::nearbyint(scaled), e - 11);
}

inline void round_matrix_to_f16(Matrix& m) {
    for (auto& v : m.data) v = round_to_f16(v);
}

inline uint64_t digest(const Matrix& m) {
    uint64_t h = 1469598103934665603ull; // FNV-1a
    auto mix = [&h](uint32_t bits) {
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    for (long r = 0; r < m.rows; ++r)
        for (long c = 0; c < m.cols; ++c) {
            float v = m.at(r, c);
            uint32_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            __builtin_memcpy(&bits, &v, sizeof(bits));
            mix(bits);
        }
    return h;
}

// Trivial text format: "rows cols" header, then row-major values.
inline Matrix read_matrix(const std::string& path, Layout layout = Layout::col_major()) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
    long rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 1 || cols < 1)
        fail(ErrorKind::IoError, "bad matrix header in '" + path + "'");
    Matrix m = Matrix::zeros(rows, cols, layout);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            float v;
            if (!(in >> v)) fail(ErrorKind::IoError, "short matrix data in '" + path + "'");
            m.at(r, c) = v;
        }
    return m;
}

inline void write_matrix(const std::string& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::IoError, "cannot open '" + path + "' for writing");
    out << m.rows << " " << m.cols << "\n";
    for (long r = 0; r < m.rows; ++r) {
        for (long c = 0; c < m.cols; ++c) {
            if (c) out << " ";
            out << m.at(r, c);
        }
        out << "\n";
    }
}

} // namespace anvil
