#include "fd2cl/fft.hpp"

#include <cmath>

namespace fd2cl::fft {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative Cooley-Tukey, bit-reversal permutation first.
void fft_pow2(std::vector<cdouble>& a, bool invert) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (invert ? 1.0 : -1.0);
        const cdouble wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cdouble w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cdouble u = a[i + k];
                const cdouble v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void dft_naive(std::vector<cdouble>& a, bool invert) {
    const std::size_t n = a.size();
    std::vector<cdouble> out(n, {0.0, 0.0});
    const double sign = invert ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = sign * 2.0 * kPi * static_cast<double>(k * t) /
                               static_cast<double>(n);
            out[k] += a[t] * cdouble(std::cos(ang), std::sin(ang));
        }
    }
    a = std::move(out);
}

void transform(std::vector<cdouble>& a, bool invert) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size()))
        fft_pow2(a, invert);
    else
        dft_naive(a, invert);
}

}  // namespace

void fft_inplace(std::vector<cdouble>& a) { transform(a, false); }

void ifft_inplace(std::vector<cdouble>& a) {
    transform(a, true);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= inv;
}

namespace {

void fft2_dir(std::vector<cdouble>& a, int h, int w, bool invert) {
    std::vector<cdouble> row(static_cast<std::size_t>(w));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) row[static_cast<std::size_t>(c)] = a[static_cast<std::size_t>(r) * w + c];
        transform(row, invert);
        for (int c = 0; c < w; ++c) a[static_cast<std::size_t>(r) * w + c] = row[static_cast<std::size_t>(c)];
    }
    std::vector<cdouble> col(static_cast<std::size_t>(h));
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) col[static_cast<std::size_t>(r)] = a[static_cast<std::size_t>(r) * w + c];
        transform(col, invert);
        for (int r = 0; r < h; ++r) a[static_cast<std::size_t>(r) * w + c] = col[static_cast<std::size_t>(r)];
    }
}

}  // namespace

void fft2(std::vector<cdouble>& a, int h, int w) { fft2_dir(a, h, w, false); }

void ifft2(std::vector<cdouble>& a, int h, int w) {
    fft2_dir(a, h, w, true);
    const double inv = 1.0 / (static_cast<double>(h) * static_cast<double>(w));
    for (auto& v : a) v *= inv;
}

}  // namespace fd2cl::fft
