#ifndef FD2CL_FFT_HPP
#define FD2CL_FFT_HPP

#include <complex>
#include <vector>

namespace fd2cl::fft {

using cdouble = std::complex<double>;

// In-place forward DFT (no normalization). Radix-2 for power-of-two sizes,
// direct O(n^2) evaluation otherwise. Fixed summation order throughout.
void fft_inplace(std::vector<cdouble>& a);

// In-place inverse DFT with 1/n normalization.
void ifft_inplace(std::vector<cdouble>& a);

// Row-major 2-D transforms over an h-by-w grid.
void fft2(std::vector<cdouble>& a, int h, int w);
void ifft2(std::vector<cdouble>& a, int h, int w);

}  // namespace fd2cl::fft

#endif
