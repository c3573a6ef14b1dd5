#include "fd2cl/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fd2cl/fft.hpp"
#include "fd2cl/rng.hpp"

namespace fd2cl::synth {

using num::Tensor;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'D', '2', 'D', 'S', '\0', '\0', '\1'};
constexpr std::uint64_t kDonorIndexOffset = 1ull << 40;  // outside any sample range

// Sub-stream tags keep real/fake/perturb draws decorrelated.
enum StreamTag : std::uint64_t {
    kRealStream = 0x5245414cULL,   // "REAL"
    kFakeStream = 0x46414b45ULL,   // "FAKE"
    kPerturbStream = 0x50545242ULL,
};

rng::Xoshiro256pp sample_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t mixed = rng::splitmix64(s) ^ (tag * 0x9e3779b97f4a7c15ULL);
    return rng::Xoshiro256pp::from_stream(mixed, index);
}

void quantize_f32(Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<double>(static_cast<float>(t[i]));
}

void clamp01(Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = std::min(1.0, std::max(0.0, t[i]));
}

double& px(Tensor& img, int c, int y, int x) {
    return img[(static_cast<std::int64_t>(c) * kHeight + y) * kWidth + x];
}

double pxv(const Tensor& img, int c, int y, int x) {
    return img[(static_cast<std::int64_t>(c) * kHeight + y) * kWidth + x];
}

}  // namespace

ArtifactKind artifact_from_string(const std::string& s) {
    if (s == "HighFreqCheckerboard") return ArtifactKind::HighFreqCheckerboard;
    if (s == "PhaseJitter") return ArtifactKind::PhaseJitter;
    if (s == "BlendBoundary") return ArtifactKind::BlendBoundary;
    if (s == "SpectralSlope") return ArtifactKind::SpectralSlope;
    throw ConfigError("unknown artifact kind: " + s);
}

std::string to_string(ArtifactKind k) {
    switch (k) {
        case ArtifactKind::HighFreqCheckerboard: return "HighFreqCheckerboard";
        case ArtifactKind::PhaseJitter: return "PhaseJitter";
        case ArtifactKind::BlendBoundary: return "BlendBoundary";
        case ArtifactKind::SpectralSlope: return "SpectralSlope";
    }
    throw ConfigError("invalid artifact kind value");
}

PerturbKind perturb_from_string(const std::string& s) {
    if (s == "BlockDropout") return PerturbKind::BlockDropout;
    if (s == "GridShuffle") return PerturbKind::GridShuffle;
    if (s == "GaussianNoise") return PerturbKind::GaussianNoise;
    if (s == "MedianBlur") return PerturbKind::MedianBlur;
    throw ConfigError("unknown perturbation kind: " + s);
}

std::string to_string(PerturbKind k) {
    switch (k) {
        case PerturbKind::BlockDropout: return "BlockDropout";
        case PerturbKind::GridShuffle: return "GridShuffle";
        case PerturbKind::GaussianNoise: return "GaussianNoise";
        case PerturbKind::MedianBlur: return "MedianBlur";
    }
    throw ConfigError("invalid perturbation kind value");
}

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == static_cast<std::uint8_t>(s))
            idx.push_back(static_cast<int>(i));
    return idx;
}

num::Tensor gen_real(const RealParams& params, std::uint64_t index) {
    auto gen = sample_rng(params.seed, kRealStream, index);
    Tensor img({kChannels, kHeight, kWidth});

    // Radial luminance gradient with a per-channel tint. Polynomial falloff
    // keeps pixel math free of transcendental library calls.
    const double cx = (kWidth - 1) / 2.0, cy = (kHeight - 1) / 2.0;
    const double rmax2 = cx * cx + cy * cy;
    const double lum = gen.uniform(0.46, 0.60);
    const double falloff = gen.uniform(0.14, 0.24);
    double tint[kChannels];
    for (double& t : tint) t = gen.uniform(-0.05, 0.05);
    for (int c = 0; c < kChannels; ++c)
        for (int y = 0; y < kHeight; ++y)
            for (int x = 0; x < kWidth; ++x) {
                const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / rmax2;
                px(img, c, y, x) = lum + tint[c] - falloff * r2;
            }

    // Quasi-fixed facial landmarks: two dark eye spots and a mouth bar with
    // slight per-identity jitter. Gives real images a stable shared template.
    {
        const double jx = gen.uniform(-1.0, 1.0), jy = gen.uniform(-1.0, 1.0);
        const double amp = gen.uniform(0.8, 1.2);
        auto spot = [&](double sy, double sx, double ry, double rx, double a) {
            for (int y = 0; y < kHeight; ++y)
                for (int x = 0; x < kWidth; ++x) {
                    const double d2 = ((x - sx) * (x - sx)) / (rx * rx) +
                                      ((y - sy) * (y - sy)) / (ry * ry);
                    if (d2 >= 1.0) continue;
                    const double bump = (1.0 - d2) * (1.0 - d2);
                    for (int c = 0; c < kChannels; ++c) px(img, c, y, x) += a * bump;
                }
        };
        spot(12.0 + jy, 11.0 + jx, 2.6, 2.6, -0.20 * amp);  // left eye
        spot(12.0 + jy, 21.0 + jx, 2.6, 2.6, -0.20 * amp);  // right eye
        spot(23.0 + jy, 16.0 + jx, 1.8, 5.0, -0.13 * amp);  // mouth
    }

    // Identity blobs: Welch-window bumps at seeded positions.
    for (int b = 0; b < params.blobs; ++b) {
        const double bx = gen.uniform(6.0, 26.0);
        const double by = gen.uniform(6.0, 26.0);
        const double rad = gen.uniform(3.5, 9.0);
        const double amp = gen.uniform(-0.20, 0.20);
        double wc[kChannels];
        for (double& w : wc) w = gen.uniform(0.6, 1.0);
        for (int y = 0; y < kHeight; ++y)
            for (int x = 0; x < kWidth; ++x) {
                const double d2 = ((x - bx) * (x - bx) + (y - by) * (y - by)) / (rad * rad);
                if (d2 >= 1.0) continue;
                const double bump = (1.0 - d2) * (1.0 - d2);
                for (int c = 0; c < kChannels; ++c) px(img, c, y, x) += amp * wc[c] * bump;
            }
    }

    // Low-amplitude smooth noise: bilinear upsampling of a coarse grid.
    const double noise_amp = 0.12 * (1.0 - params.smoothness);
    if (noise_amp > 0.0) {
        constexpr int kGrid = 6;
        double grid[kChannels][kGrid][kGrid];
        for (auto& ch : grid)
            for (auto& row : ch)
                for (double& v : row) v = gen.uniform(-1.0, 1.0);
        for (int c = 0; c < kChannels; ++c)
            for (int y = 0; y < kHeight; ++y)
                for (int x = 0; x < kWidth; ++x) {
                    const double gy = static_cast<double>(y) / (kHeight - 1) * (kGrid - 1);
                    const double gx = static_cast<double>(x) / (kWidth - 1) * (kGrid - 1);
                    const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
                    const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
                    const double fy = gy - y0, fx = gx - x0;
                    const double v = grid[c][y0][x0] * (1 - fy) * (1 - fx) +
                                     grid[c][y0][x0 + 1] * (1 - fy) * fx +
                                     grid[c][y0 + 1][x0] * fy * (1 - fx) +
                                     grid[c][y0 + 1][x0 + 1] * fy * fx;
                    px(img, c, y, x) += noise_amp * v;
                }
    }

    for (std::int64_t i = 0; i < img.size(); ++i)
        img[i] = std::min(0.98, std::max(0.02, img[i]));
    quantize_f32(img);
    return img;
}

namespace {

void apply_checkerboard(Tensor& img, double strength, rng::Xoshiro256pp& gen) {
    double wc[kChannels];
    for (double& w : wc) w = gen.uniform(0.8, 1.0);
    for (int c = 0; c < kChannels; ++c)
        for (int y = 0; y < kHeight; ++y)
            for (int x = 0; x < kWidth; ++x) {
                const double sign = ((x + y) & 1) ? -1.0 : 1.0;
                px(img, c, y, x) += strength * wc[c] * sign;
            }
}

// Hermitian-consistent phase jitter. Everything beyond the coarsest bins is
// rotated, so the smooth image content itself warps (abnormal phase traces).
void apply_phase_jitter(Tensor& img, double strength, rng::Xoshiro256pp& gen) {
    constexpr int h = kHeight, w = kWidth, wh = kWidth / 2 + 1;
    constexpr double kPi = 3.141592653589793238462643383279502884;
    double jitter[h][wh];
    for (auto& row : jitter)
        for (double& v : row) v = strength * gen.uniform(-kPi, kPi);
    // Only DC keeps its phase, so global luminance is stable and everything
    // else warps.
    jitter[0][0] = 0.0;
    double tilde[h][wh];
    for (int u = 0; u < h; ++u)
        for (int c = 0; c < wh; ++c) {
            const bool self_conj = (c == 0) || (2 * c == w);
            tilde[u][c] = self_conj ? (jitter[u][c] - jitter[(h - u) % h][c]) / 2.0
                                    : jitter[u][c];
        }
    for (int ch = 0; ch < kChannels; ++ch) {
        std::vector<fft::cdouble> z(static_cast<std::size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                z[static_cast<std::size_t>(y) * w + x] = {pxv(img, ch, y, x), 0.0};
        fft::fft2(z, h, w);
        for (int u = 0; u < h; ++u)
            for (int c = 0; c < w; ++c) {
                const double d = (c < wh) ? tilde[u][c] : -tilde[(h - u) % h][w - c];
                z[static_cast<std::size_t>(u) * w + c] *= fft::cdouble(std::cos(d), std::sin(d));
            }
        fft::ifft2(z, h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) px(img, ch, y, x) = z[static_cast<std::size_t>(y) * w + x].real();
    }
}

void apply_blend_boundary(Tensor& img, const Tensor& donor, double strength,
                          rng::Xoshiro256pp& gen) {
    const int cx = static_cast<int>(gen.uniform(13.0, 19.0));
    const int cy = static_cast<int>(gen.uniform(13.0, 19.0));
    const int hx = static_cast<int>(gen.uniform(6.0, 8.0));
    const int hy = static_cast<int>(gen.uniform(6.0, 8.0));
    const double seam = (gen.below(2) ? 1.0 : -1.0) * 0.3 * strength;
    // Color mismatch of the swapped-in content, a fixed warm cast.
    const double tint[kChannels] = {0.10 * strength, -0.05 * strength, -0.05 * strength};
    const int x0 = std::max(0, cx - hx), x1 = std::min(kWidth - 1, cx + hx);
    const int y0 = std::max(0, cy - hy), y1 = std::min(kHeight - 1, cy + hy);
    // Donor content inside the box, a channel cast, and a two-pixel luminance
    // step along the box outline: seam plus color mismatch are the detectable
    // traces. Pixels outside the box are untouched.
    for (int c = 0; c < kChannels; ++c)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double v = (1.0 - strength) * pxv(img, c, y, x) +
                           strength * (pxv(donor, c, y, x) + tint[c]);
                const bool ring = y <= y0 + 1 || y >= y1 - 1 || x <= x0 + 1 || x >= x1 - 1;
                if (ring) v += seam;
                px(img, c, y, x) = v;
            }
}

// Additive noise field whose magnitude spectrum rises quadratically with
// radial frequency: an elevated high-frequency noise floor, synthesized with
// Hermitian-symmetric random phases so the field is real.
void apply_spectral_slope(Tensor& img, double strength, rng::Xoshiro256pp& gen) {
    constexpr int h = kHeight, w = kWidth, wh = kWidth / 2 + 1;
    constexpr double kPi = 3.141592653589793238462643383279502884;
    const double rmax2 = static_cast<double>((h / 2) * (h / 2) + (w / 2) * (w / 2));
    for (int ch = 0; ch < kChannels; ++ch) {
        double phase[h][wh];
        for (auto& row : phase)
            for (double& v : row) v = gen.uniform(-kPi, kPi);
        std::vector<fft::cdouble> z(static_cast<std::size_t>(h) * w, {0.0, 0.0});
        for (int u = 0; u < h; ++u)
            for (int c = 0; c < w; ++c) {
                const int ru = std::min(u, h - u);
                const int rc = std::min(c, w - c);
                if (ru == 0 && rc == 0) continue;
                const double mag = static_cast<double>(ru * ru + rc * rc) / rmax2;
                const bool self_conj = (c == 0 || 2 * c == w) && (u == 0 || 2 * u == h);
                double ph;
                if (c < wh) {
                    ph = phase[u][c];
                    if (c == 0 || 2 * c == w) {
                        const double mirror = phase[(h - u) % h][c];
                        ph = (ph - mirror) / 2.0;
                    }
                } else {
                    ph = -phase[(h - u) % h][w - c];
                    if (w - c == 0 || 2 * (w - c) == w) {
                        const double mirror = phase[u][w - c];
                        ph = -(phase[(h - u) % h][w - c] - mirror) / 2.0;
                    }
                }
                if (self_conj) ph = 0.0;  // those bins must stay real
                z[static_cast<std::size_t>(u) * w + c] = {mag * std::cos(ph), mag * std::sin(ph)};
            }
        fft::ifft2(z, h, w);
        // normalize the field to unit std, then scale
        double var = 0.0;
        for (const auto& v : z) var += v.real() * v.real();
        const double sd = std::sqrt(var / (h * w));
        const double amp = 0.03 * strength / (sd > 1e-12 ? sd : 1.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                px(img, ch, y, x) += amp * z[static_cast<std::size_t>(y) * w + x].real();
    }
}

}  // namespace

num::Tensor gen_fake(const RealParams& real, const FakeParams& fake, std::uint64_t index) {
    Tensor img = gen_real(real, index);
    if (fake.strength == 0.0) return img;  // null artifact
    auto gen = sample_rng(fake.seed, kFakeStream, index);
    switch (fake.kind) {
        case ArtifactKind::HighFreqCheckerboard:
            apply_checkerboard(img, fake.strength, gen);
            break;
        case ArtifactKind::PhaseJitter:
            apply_phase_jitter(img, fake.strength, gen);
            break;
        case ArtifactKind::BlendBoundary: {
            const Tensor donor = gen_real(real, index + kDonorIndexOffset);
            apply_blend_boundary(img, donor, fake.strength, gen);
            break;
        }
        case ArtifactKind::SpectralSlope:
            apply_spectral_slope(img, fake.strength, gen);
            break;
        default:
            throw ConfigError("gen_fake: unknown artifact kind");
    }
    clamp01(img);
    quantize_f32(img);
    return img;
}

namespace {

Tensor perturb_block_dropout(const Tensor& image, double ratio, rng::Xoshiro256pp& gen) {
    constexpr int kBlock = 4;
    constexpr int kBlocksPerSide = kWidth / kBlock;
    constexpr int kTotalBlocks = kBlocksPerSide * kBlocksPerSide;
    const int n = static_cast<int>(std::llround(ratio * kTotalBlocks));
    std::vector<int> ids(kTotalBlocks);
    for (int i = 0; i < kTotalBlocks; ++i) ids[static_cast<std::size_t>(i)] = i;
    gen.shuffle(ids);
    Tensor out = image;
    for (int k = 0; k < n; ++k) {
        const int by = ids[static_cast<std::size_t>(k)] / kBlocksPerSide;
        const int bx = ids[static_cast<std::size_t>(k)] % kBlocksPerSide;
        for (int c = 0; c < kChannels; ++c)
            for (int y = by * kBlock; y < (by + 1) * kBlock; ++y)
                for (int x = bx * kBlock; x < (bx + 1) * kBlock; ++x) px(out, c, y, x) = 0.0;
    }
    return out;
}

Tensor perturb_grid_shuffle(const Tensor& image, int patch, rng::Xoshiro256pp& gen) {
    // Pad to a multiple of the patch size with edge replication (right and
    // bottom), shuffle the patch grid, crop back to the original size.
    const int padded = ((kWidth + patch - 1) / patch) * patch;
    std::vector<double> buf(static_cast<std::size_t>(kChannels) * padded * padded);
    auto bpx = [&](int c, int y, int x) -> double& {
        return buf[(static_cast<std::size_t>(c) * padded + y) * padded + x];
    };
    for (int c = 0; c < kChannels; ++c)
        for (int y = 0; y < padded; ++y)
            for (int x = 0; x < padded; ++x)
                bpx(c, y, x) = pxv(image, c, std::min(y, kHeight - 1), std::min(x, kWidth - 1));

    const int side = padded / patch;
    std::vector<int> perm(static_cast<std::size_t>(side * side));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    gen.shuffle(perm);

    std::vector<double> shuffled(buf.size());
    auto spx = [&](int c, int y, int x) -> double& {
        return shuffled[(static_cast<std::size_t>(c) * padded + y) * padded + x];
    };
    for (int p = 0; p < side * side; ++p) {
        const int sy = (perm[static_cast<std::size_t>(p)] / side) * patch;
        const int sx = (perm[static_cast<std::size_t>(p)] % side) * patch;
        const int dy = (p / side) * patch;
        const int dx = (p % side) * patch;
        for (int c = 0; c < kChannels; ++c)
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    spx(c, dy + y, dx + x) = bpx(c, sy + y, sx + x);
    }

    Tensor out(image.shape());
    for (int c = 0; c < kChannels; ++c)
        for (int y = 0; y < kHeight; ++y)
            for (int x = 0; x < kWidth; ++x) px(out, c, y, x) = spx(c, y, x);
    return out;
}

Tensor perturb_gaussian_noise(const Tensor& image, double sigma, rng::Xoshiro256pp& gen) {
    Tensor out = image;
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = std::min(1.0, std::max(0.0, out[i] + sigma * gen.normal()));
    return out;
}

Tensor perturb_median_blur(const Tensor& image, int kernel) {
    const int half = kernel / 2;
    Tensor out(image.shape());
    std::vector<double> window(static_cast<std::size_t>(kernel) * kernel);
    for (int c = 0; c < kChannels; ++c)
        for (int y = 0; y < kHeight; ++y)
            for (int x = 0; x < kWidth; ++x) {
                std::size_t n = 0;
                for (int dy = -half; dy <= half; ++dy)
                    for (int dx = -half; dx <= half; ++dx) {
                        const int yy = std::min(kHeight - 1, std::max(0, y + dy));
                        const int xx = std::min(kWidth - 1, std::max(0, x + dx));
                        window[n++] = pxv(image, c, yy, xx);
                    }
                std::sort(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(n));
                px(out, c, y, x) = window[n / 2];
            }
    return out;
}

}  // namespace

num::Tensor perturb(const Tensor& image, PerturbKind kind, int level, std::uint64_t seed) {
    if (level < 0 || level > 4) throw ConfigError("perturb: level must be in 0..4");
    if (level == 0) return image;
    auto gen = sample_rng(seed, kPerturbStream,
                          (static_cast<std::uint64_t>(kind) << 8) | static_cast<std::uint64_t>(level));
    switch (kind) {
        case PerturbKind::BlockDropout: {
            constexpr double kRatios[4] = {0.1, 0.2, 0.3, 0.4};
            return perturb_block_dropout(image, kRatios[level - 1], gen);
        }
        case PerturbKind::GridShuffle: {
            constexpr int kPatch[4] = {2, 4, 8, 12};
            return perturb_grid_shuffle(image, kPatch[level - 1], gen);
        }
        case PerturbKind::GaussianNoise: {
            constexpr double kSigma[4] = {0.01, 0.02, 0.04, 0.08};
            return perturb_gaussian_noise(image, kSigma[level - 1], gen);
        }
        case PerturbKind::MedianBlur: {
            constexpr int kKernel[4] = {3, 5, 7, 9};
            return perturb_median_blur(image, kKernel[level - 1]);
        }
    }
    throw ConfigError("perturb: invalid kind");
}

Dataset generate_dataset(const TaskSpec& spec) {
    if (spec.counts.train < 64 || spec.counts.val < 32 || spec.counts.test < 32)
        throw ConfigError("generate_dataset: split counts below desk-scale minimums");
    Dataset ds;
    ds.spec = spec;
    std::uint64_t real_idx = 0, fake_idx = 0;
    int train_fakes = 0;
    const int split_counts[3] = {spec.counts.train, spec.counts.val, spec.counts.test};
    for (int s = 0; s < 3; ++s) {
        for (int i = 0; i < split_counts[s]; ++i) {
            bool fake = (i % 2) == 1;
            if (fake && s == 0 && spec.fake_budget > 0 && train_fakes >= spec.fake_budget)
                fake = false;  // scarcity cap: remainder of the split is real
            Sample sample;
            if (fake) {
                sample.image = gen_fake(spec.real, spec.fake, fake_idx++);
                sample.label = 1;
                if (s == 0) ++train_fakes;
            } else {
                sample.image = gen_real(spec.real, real_idx++);
                sample.label = 0;
            }
            sample.split = static_cast<std::uint8_t>(s);
            ds.samples.push_back(std::move(sample));
        }
    }
    return ds;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

void put_u32_le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json task_spec_to_json(const TaskSpec& s) {
    return json{
        {"task_id", s.task_id},
        {"real", {{"seed", s.real.seed}, {"blobs", s.real.blobs}, {"smoothness", s.real.smoothness}}},
        {"fake", {{"kind", to_string(s.fake.kind)}, {"strength", s.fake.strength}, {"seed", s.fake.seed}}},
        {"counts", {{"train", s.counts.train}, {"val", s.counts.val}, {"test", s.counts.test}}},
        {"fake_budget", s.fake_budget},
        {"seed", s.seed},
    };
}

TaskSpec task_spec_from_json(const json& j) {
    TaskSpec s;
    s.task_id = j.at("task_id").get<int>();
    s.real.seed = j.at("real").at("seed").get<std::uint64_t>();
    s.real.blobs = j.at("real").at("blobs").get<int>();
    s.real.smoothness = j.at("real").at("smoothness").get<double>();
    s.fake.kind = artifact_from_string(j.at("fake").at("kind").get<std::string>());
    s.fake.strength = j.at("fake").at("strength").get<double>();
    s.fake.seed = j.at("fake").at("seed").get<std::uint64_t>();
    s.counts.train = j.at("counts").at("train").get<int>();
    s.counts.val = j.at("counts").at("val").get<int>();
    s.counts.test = j.at("counts").at("test").get<int>();
    s.fake_budget = j.at("fake_budget").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::vector<std::uint8_t> payload;
    payload.reserve(ds.samples.size() * (2 + kPixels * 4));
    int counts[3] = {0, 0, 0};
    for (const auto& s : ds.samples) {
        payload.push_back(s.label);
        payload.push_back(s.split);
        ++counts[s.split];
        for (std::int64_t i = 0; i < s.image.size(); ++i) {
            const float f = static_cast<float>(s.image[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32_le(payload, bits);
        }
    }
    const std::uint32_t crc = crc32(payload.data(), payload.size());

    std::vector<std::uint8_t> file;
    file.insert(file.end(), kMagic, kMagic + 8);
    put_u32_le(file, static_cast<std::uint32_t>(ds.samples.size()));
    file.insert(file.end(), payload.begin(), payload.end());

    std::ofstream bin(dir / "data.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("write_dataset: cannot open data.bin for writing");
    bin.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    bin.close();

    json manifest{
        {"format_version", 1},
        {"rng", rng::kAlgorithmId},
        {"samples", ds.samples.size()},
        {"counts", {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}},
        {"crc32", crc},
        {"task_spec", task_spec_to_json(ds.spec)},
    };
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw DataError("write_dataset: cannot open manifest.json for writing");
    mf << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw DataError("read_dataset: missing manifest.json in " + dir.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception&) {
        throw FormatError("read_dataset: manifest.json is not valid JSON", 0);
    }

    std::ifstream bin(dir / "data.bin", std::ios::binary);
    if (!bin) throw DataError("read_dataset: missing data.bin in " + dir.string());
    std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());

    if (file.size() < 12 || std::memcmp(file.data(), kMagic, 8) != 0)
        throw FormatError("read_dataset: bad magic", 0);
    const std::uint32_t count = get_u32_le(file.data() + 8);
    if (manifest.at("samples").get<std::uint64_t>() != count)
        throw FormatError("read_dataset: manifest sample count disagrees with data.bin", 8);
    const std::size_t record = 2 + static_cast<std::size_t>(kPixels) * 4;
    const std::size_t expected = 12 + static_cast<std::size_t>(count) * record;
    if (file.size() != expected)
        throw FormatError("read_dataset: truncated or oversized data.bin",
                          std::min(file.size(), expected));
    const std::uint32_t crc = crc32(file.data() + 12, file.size() - 12);
    if (crc != manifest.at("crc32").get<std::uint32_t>())
        throw FormatError("read_dataset: payload CRC mismatch", 12);

    Dataset ds;
    ds.spec = task_spec_from_json(manifest.at("task_spec"));
    ds.samples.reserve(count);
    const std::uint8_t* p = file.data() + 12;
    for (std::uint32_t s = 0; s < count; ++s) {
        Sample sample;
        sample.label = p[0];
        sample.split = p[1];
        if (sample.label > 1 || sample.split > 2)
            throw FormatError("read_dataset: invalid label or split tag",
                              12 + static_cast<std::size_t>(s) * record);
        p += 2;
        sample.image = Tensor({kChannels, kHeight, kWidth});
        for (int i = 0; i < kPixels; ++i) {
            const std::uint32_t bits = get_u32_le(p);
            float f;
            std::memcpy(&f, &bits, 4);
            sample.image[i] = static_cast<double>(f);
            p += 4;
        }
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

}  // namespace fd2cl::synth
