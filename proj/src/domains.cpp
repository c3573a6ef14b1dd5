#include "fd2cl/domains.hpp"

#include <cmath>
#include <memory>

#include "fd2cl/fft.hpp"

namespace fd2cl::domains {

using num::Tensor;
using num::Tape;

PhaseGate PhaseGate::init(int h, int w, double scale0) {
    PhaseGate g;
    g.gain = Tensor({h, w / 2 + 1});
    g.scale = Tensor::scalar(scale0);
    return g;
}

namespace {

struct PlaneDims {
    int planes;  // product of leading dimensions
    int h, w;
};

PlaneDims plane_dims(const Tensor& t) {
    if (t.ndim() < 2) throw DimensionError("expected a tensor with at least 2 dimensions");
    PlaneDims d;
    d.h = t.dim(t.ndim() - 2);
    d.w = t.dim(t.ndim() - 1);
    d.planes = 1;
    for (int i = 0; i < t.ndim() - 2; ++i) d.planes *= t.dim(i);
    return d;
}

}  // namespace

HaarBands haar_dwt2(const Tensor& plane) {
    const int h = plane.rows(), w = plane.cols();
    if (h % 2 != 0 || w % 2 != 0)
        throw DimensionError("haar_dwt2: height and width must be even");
    const int h2 = h / 2, w2 = w / 2;
    HaarBands out{Tensor({h2, w2}), Tensor({h2, w2}), Tensor({h2, w2}), Tensor({h2, w2})};
    for (int i = 0; i < h2; ++i) {
        for (int j = 0; j < w2; ++j) {
            const double a = plane.at(2 * i, 2 * j);
            const double b = plane.at(2 * i, 2 * j + 1);
            const double c = plane.at(2 * i + 1, 2 * j);
            const double d = plane.at(2 * i + 1, 2 * j + 1);
            out.ll.at(i, j) = (a + b + c + d) / 2.0;
            out.lh.at(i, j) = (a - b + c - d) / 2.0;
            out.hl.at(i, j) = (a + b - c - d) / 2.0;
            out.hh.at(i, j) = (a - b - c + d) / 2.0;
        }
    }
    return out;
}

num::Tensor haar_idwt2(const HaarBands& bands) {
    const int h2 = bands.ll.rows(), w2 = bands.ll.cols();
    Tensor out({h2 * 2, w2 * 2});
    for (int i = 0; i < h2; ++i) {
        for (int j = 0; j < w2; ++j) {
            const double ll = bands.ll.at(i, j);
            const double lh = bands.lh.at(i, j);
            const double hl = bands.hl.at(i, j);
            const double hh = bands.hh.at(i, j);
            out.at(2 * i, 2 * j) = (ll + lh + hl + hh) / 2.0;
            out.at(2 * i, 2 * j + 1) = (ll - lh + hl - hh) / 2.0;
            out.at(2 * i + 1, 2 * j) = (ll + lh - hl - hh) / 2.0;
            out.at(2 * i + 1, 2 * j + 1) = (ll - lh - hl + hh) / 2.0;
        }
    }
    return out;
}

num::Tensor wavelet_highfreq_view(const Tensor& image) {
    const PlaneDims d = plane_dims(image);
    Tensor out(image.shape());
    const std::int64_t stride = static_cast<std::int64_t>(d.h) * d.w;
    for (int p = 0; p < d.planes; ++p) {
        Tensor plane({d.h, d.w});
        for (std::int64_t i = 0; i < stride; ++i) plane[i] = image[p * stride + i];
        HaarBands bands = haar_dwt2(plane);
        bands.ll = Tensor({d.h / 2, d.w / 2});
        Tensor rec = haar_idwt2(bands);
        for (std::int64_t i = 0; i < stride; ++i) out[p * stride + i] = rec[i];
    }
    return out;
}

namespace {

// Antisymmetrized stored-half phase shift. Columns that are their own
// conjugate mirror (w == 0, and w == W/2 for even W) pair rows u <-> H-u;
// antisymmetrizing them keeps the full spectrum Hermitian for any gate.
Tensor phase_delta_tilde(const Tensor& gain, double scale, int h, int w) {
    const int wh = w / 2 + 1;
    if (gain.rows() != h || gain.cols() != wh)
        throw DimensionError("phase gate gain has wrong shape for this image size");
    Tensor dt({h, wh});
    for (int u = 0; u < h; ++u)
        for (int c = 0; c < wh; ++c) {
            const bool self_conj = (c == 0) || (2 * c == w);
            const double d = scale * std::tanh(gain.at(u, c));
            if (self_conj) {
                const int um = (h - u) % h;
                const double dm = scale * std::tanh(gain.at(um, c));
                dt.at(u, c) = (d - dm) / 2.0;
            } else {
                dt.at(u, c) = d;
            }
        }
    return dt;
}

Tensor expand_full_delta(const Tensor& dt, int h, int w) {
    const int wh = w / 2 + 1;
    Tensor full({h, w});
    for (int u = 0; u < h; ++u)
        for (int c = 0; c < w; ++c) {
            if (c < wh)
                full.at(u, c) = dt.at(u, c);
            else
                full.at(u, c) = -dt.at((h - u) % h, w - c);
        }
    return full;
}

// Adjoint of expand_full_delta.
Tensor collapse_full_grad(const Tensor& gfull, int h, int w) {
    const int wh = w / 2 + 1;
    Tensor gdt({h, wh});
    for (int u = 0; u < h; ++u)
        for (int c = 0; c < w; ++c) {
            if (c < wh)
                gdt.at(u, c) += gfull.at(u, c);
            else
                gdt.at((h - u) % h, w - c) -= gfull.at(u, c);
        }
    return gdt;
}

// Adjoint of the antisymmetrization, then chain through scale * tanh(gain).
void delta_grad_to_gate(const Tensor& gdt, const Tensor& gain, double scale, int h,
                        int w, Tensor& ggain, double& gscale) {
    const int wh = w / 2 + 1;
    Tensor graw({h, wh});
    for (int u = 0; u < h; ++u)
        for (int c = 0; c < wh; ++c) {
            const bool self_conj = (c == 0) || (2 * c == w);
            if (self_conj) {
                graw.at(u, c) += gdt.at(u, c) / 2.0;
                graw.at((h - u) % h, c) -= gdt.at(u, c) / 2.0;
            } else {
                graw.at(u, c) += gdt.at(u, c);
            }
        }
    for (int u = 0; u < h; ++u)
        for (int c = 0; c < wh; ++c) {
            const double th = std::tanh(gain.at(u, c));
            ggain.at(u, c) += graw.at(u, c) * scale * (1.0 - th * th);
            gscale += graw.at(u, c) * th;
        }
}

struct PhasePlanes {
    std::vector<std::vector<fft::cdouble>> spectra;  // modulated spectrum per plane
    Tensor output;
    double max_imag = 0.0;
};

PhasePlanes phase_forward(const Tensor& image, const Tensor& gain, double scale) {
    const PlaneDims d = plane_dims(image);
    const Tensor dt = phase_delta_tilde(gain, scale, d.h, d.w);
    const Tensor delta = expand_full_delta(dt, d.h, d.w);
    const std::int64_t stride = static_cast<std::int64_t>(d.h) * d.w;

    PhasePlanes out;
    out.output = Tensor(image.shape());
    out.spectra.resize(static_cast<std::size_t>(d.planes));
    std::vector<fft::cdouble> rot(static_cast<std::size_t>(stride));
    for (std::int64_t i = 0; i < stride; ++i)
        rot[static_cast<std::size_t>(i)] = {std::cos(delta[i]), std::sin(delta[i])};

    for (int p = 0; p < d.planes; ++p) {
        std::vector<fft::cdouble> z(static_cast<std::size_t>(stride));
        for (std::int64_t i = 0; i < stride; ++i)
            z[static_cast<std::size_t>(i)] = {image[p * stride + i], 0.0};
        fft::fft2(z, d.h, d.w);
        for (std::int64_t i = 0; i < stride; ++i) z[static_cast<std::size_t>(i)] *= rot[static_cast<std::size_t>(i)];
        out.spectra[static_cast<std::size_t>(p)] = z;
        std::vector<fft::cdouble> y = z;
        fft::ifft2(y, d.h, d.w);
        for (std::int64_t i = 0; i < stride; ++i) {
            out.output[p * stride + i] = y[static_cast<std::size_t>(i)].real();
            out.max_imag = std::max(out.max_imag, std::abs(y[static_cast<std::size_t>(i)].imag()));
        }
    }
    return out;
}

}  // namespace

namespace {
double linf_scale(const Tensor& t) {
    return std::max(1.0, std::max(std::abs(t.min()), std::abs(t.max())));
}
}  // namespace

num::Tensor fourier_phase_view(const Tensor& image, const PhaseGate& gate,
                               FourierStats* stats) {
    PhasePlanes p = phase_forward(image, gate.gain, gate.scale.item());
    if (stats) stats->max_imag = p.max_imag;
    if (p.max_imag > 1e-9 * linf_scale(image))
        throw NumericalError("fourier_phase_view: output is not real");
    return std::move(p.output);
}

AlignParams align_params(const Tensor& z, const Tensor& s, double eps) {
    const double n_z = static_cast<double>(z.size());
    const double n_s = static_cast<double>(s.size());
    const double mu_z = z.sum() / n_z;
    const double mu_s = s.sum() / n_s;
    double var_z = 0.0, var_s = 0.0;
    for (std::int64_t i = 0; i < z.size(); ++i) var_z += (z[i] - mu_z) * (z[i] - mu_z);
    for (std::int64_t i = 0; i < s.size(); ++i) var_s += (s[i] - mu_s) * (s[i] - mu_s);
    const double sigma_z = std::sqrt(var_z / n_z);
    const double sigma_s = std::sqrt(var_s / n_s);

    AlignParams p;
    if (sigma_z <= eps) {
        p.degenerate = true;
        p.gain = 1.0;
        p.offset = mu_s - mu_z;
    } else {
        p.gain = sigma_s / sigma_z;
        p.offset = mu_s - p.gain * mu_z;
    }
    return p;
}

num::Tensor align_to_spatial(const Tensor& z, const Tensor& s) {
    const AlignParams p = align_params(z, s);
    Tensor out = z;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] * p.gain + p.offset;
    return out;
}

num::Tape::Var fourier_phase_op(Tape& t, const Tensor& batch, Tape::Var gain,
                                Tape::Var scale, FourierStats* stats) {
    const PlaneDims d = plane_dims(batch);
    const Tensor gain_v = t.value(gain);
    const double scale_v = t.value(scale).item();
    PhasePlanes p = phase_forward(batch, gain_v, scale_v);
    if (stats) stats->max_imag = p.max_imag;
    if (p.max_imag > 1e-9 * linf_scale(batch))
        throw NumericalError("fourier_phase_op: output is not real");

    auto spectra = std::make_shared<std::vector<std::vector<fft::cdouble>>>(std::move(p.spectra));
    auto gain_saved = std::make_shared<Tensor>(gain_v);
    const int h = d.h, w = d.w, planes = d.planes;

    return t.custom(
        std::move(p.output), {gain, scale},
        [=](Tape& tape, const Tensor& gout) {
            const std::int64_t stride = static_cast<std::int64_t>(h) * w;
            const double inv_n = 1.0 / static_cast<double>(stride);
            Tensor gdelta({h, w});
            std::vector<fft::cdouble> fbar(static_cast<std::size_t>(stride));
            for (int pl = 0; pl < planes; ++pl) {
                for (std::int64_t i = 0; i < stride; ++i)
                    fbar[static_cast<std::size_t>(i)] = {gout[pl * stride + i], 0.0};
                fft::fft2(fbar, h, w);
                const auto& z = (*spectra)[static_cast<std::size_t>(pl)];
                for (std::int64_t i = 0; i < stride; ++i) {
                    const fft::cdouble prod =
                        z[static_cast<std::size_t>(i)] * std::conj(fbar[static_cast<std::size_t>(i)]);
                    gdelta[i] += -inv_n * prod.imag();
                }
            }
            const Tensor gdt = collapse_full_grad(gdelta, h, w);
            Tensor ggain({h, w / 2 + 1});
            double gscale = 0.0;
            delta_grad_to_gate(gdt, *gain_saved, scale_v, h, w, ggain, gscale);
            tape.accumulate_grad(gain, ggain);
            tape.accumulate_grad(scale, Tensor::scalar(gscale));
        });
}

Views make_views(Tape& t, const Tensor& batch, Tape::Var gain, Tape::Var scale,
                 bool freq_branches, FrozenAlignStats* frozen, FourierStats* stats) {
    if (batch.ndim() != 4) throw DimensionError("make_views: batch must be {B,C,H,W}");
    Views v;
    v.spatial = t.constant(batch);
    if (!freq_branches) {
        v.wavelet = v.spatial;
        v.fourier = v.spatial;
        return v;
    }

    const Tensor wave = wavelet_highfreq_view(batch);
    AlignParams wp = (frozen && frozen->captured) ? frozen->wavelet : align_params(wave, batch);
    Tensor wave_aligned = wave;
    for (std::int64_t i = 0; i < wave_aligned.size(); ++i)
        wave_aligned[i] = wave_aligned[i] * wp.gain + wp.offset;
    v.wavelet = t.constant(std::move(wave_aligned));

    Tape::Var four = fourier_phase_op(t, batch, gain, scale, stats);
    AlignParams fp = (frozen && frozen->captured) ? frozen->fourier
                                                  : align_params(t.value(four), batch);
    v.fourier = t.scale_shift(four, fp.gain, fp.offset);

    if (frozen && !frozen->captured) {
        frozen->wavelet = wp;
        frozen->fourier = fp;
        frozen->captured = true;
    }
    return v;
}

}  // namespace fd2cl::domains
