#ifndef FD2CL_DOMAINS_HPP
#define FD2CL_DOMAINS_HPP

#include <cstdint>

#include "fd2cl/tensor.hpp"

namespace fd2cl::domains {

enum class DomainTag { Spatial, Wavelet, Fourier };

// Learnable per-frequency phase modulation, one plane shared across channels.
// Modulated phase is phi' = phi + scale * tanh(gain), applied over the stored
// half spectrum with Hermitian symmetry enforced so outputs stay real.
struct PhaseGate {
    num::Tensor gain;   // {H, W/2+1}
    num::Tensor scale;  // {1}

    static PhaseGate init(int h, int w, double scale0 = 0.1);
};

struct HaarBands {
    num::Tensor ll, lh, hl, hh;  // each {H/2, W/2}
};

// Single-level orthonormal 2-D Haar transform of one plane. H and W must be
// even. LL(i,j) = (a+b+c+d)/2 over each 2x2 block; detail bands are signed
// half-differences.
HaarBands haar_dwt2(const num::Tensor& plane);
num::Tensor haar_idwt2(const HaarBands& bands);

// Forward Haar, zero the LL band, inverse. Linear idempotent projection.
// Applies per plane over the last two dimensions of any rank >= 2 tensor.
num::Tensor wavelet_highfreq_view(const num::Tensor& image);

struct FourierStats {
    double max_imag = 0.0;  // largest |Im| discarded after the inverse FFT
};

// FFT -> split magnitude/phase -> modulate phase -> inverse FFT, per plane.
// Magnitude spectrum is preserved exactly; output is real by construction.
num::Tensor fourier_phase_view(const num::Tensor& image, const PhaseGate& gate,
                               FourierStats* stats = nullptr);

// Batch-statistics alignment of z to s: (z - mu(z))/sigma(z) * sigma(s) + mu(s)
// with scalar statistics over all elements (population std). Degenerate
// sigma(z) <= eps falls back to a pure mean shift.
struct AlignParams {
    double gain = 1.0;
    double offset = 0.0;
    bool degenerate = false;
};
AlignParams align_params(const num::Tensor& z, const num::Tensor& s, double eps = 1e-8);
num::Tensor align_to_spatial(const num::Tensor& z, const num::Tensor& s);

// Differentiable phase-gated Fourier view. `batch` is treated as constant;
// gradients flow to gain and scale only.
num::Tape::Var fourier_phase_op(num::Tape& t, const num::Tensor& batch,
                                num::Tape::Var gain, num::Tape::Var scale,
                                FourierStats* stats = nullptr);

// The three per-image views of a batch {B,C,H,W}: spatial unchanged, wavelet
// and Fourier views aligned to the spatial batch distribution. Alignment
// statistics are treated as constants in the backward pass. When `frozen` is
// supplied, previously captured statistics are reused (finite-difference
// harness support); an empty struct is filled on first use.
struct FrozenAlignStats {
    bool captured = false;
    AlignParams wavelet;
    AlignParams fourier;
};

struct Views {
    num::Tape::Var spatial;
    num::Tape::Var wavelet;
    num::Tape::Var fourier;
};

Views make_views(num::Tape& t, const num::Tensor& batch, num::Tape::Var gain,
                 num::Tape::Var scale, bool freq_branches = true,
                 FrozenAlignStats* frozen = nullptr, FourierStats* stats = nullptr);

}  // namespace fd2cl::domains

#endif
