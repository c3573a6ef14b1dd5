#ifndef FD2CL_SYNTHDATA_HPP
#define FD2CL_SYNTHDATA_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fd2cl/tensor.hpp"

namespace fd2cl::synth {

// Fixed desk-scale image geometry.
inline constexpr int kChannels = 3;
inline constexpr int kHeight = 32;
inline constexpr int kWidth = 32;
inline constexpr int kPixels = kChannels * kHeight * kWidth;

enum class ArtifactKind { HighFreqCheckerboard, PhaseJitter, BlendBoundary, SpectralSlope };
ArtifactKind artifact_from_string(const std::string& s);
std::string to_string(ArtifactKind k);

struct RealParams {
    std::uint64_t seed = 1;
    int blobs = 3;
    double smoothness = 0.85;  // in [0,1]; higher = less fine noise
};

struct FakeParams {
    ArtifactKind kind = ArtifactKind::HighFreqCheckerboard;
    double strength = 0.1;
    std::uint64_t seed = 2;
};

struct SplitCounts {
    int train = 192, val = 64, test = 64;
};

struct TaskSpec {
    int task_id = 0;
    RealParams real;
    FakeParams fake;
    SplitCounts counts;
    int fake_budget = 0;  // 0 = uncapped; otherwise cap on distinct train fakes
    std::uint64_t seed = 0;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct Sample {
    num::Tensor image;  // {3,32,32}, float32-quantized values in [0,1]
    std::uint8_t label = 0;  // 0 real, 1 fake
    std::uint8_t split = 0;
};

struct Dataset {
    TaskSpec spec;
    std::vector<Sample> samples;
    std::vector<int> indices_of(Split s) const;
};

// Smooth synthetic "face": radial luminance gradient, seeded identity blobs,
// low-amplitude smooth noise. Deterministic in (params.seed, index).
num::Tensor gen_real(const RealParams& params, std::uint64_t index);

// gen_real composited with the task's artifact at the given strength.
num::Tensor gen_fake(const RealParams& real, const FakeParams& fake, std::uint64_t index);

enum class PerturbKind { BlockDropout, GridShuffle, GaussianNoise, MedianBlur };
PerturbKind perturb_from_string(const std::string& s);
std::string to_string(PerturbKind k);

// Level 0 is the bitwise identity. Levels 1-4 use, per kind:
//   BlockDropout  mask ratios   0.1 0.2 0.3 0.4
//   GridShuffle   patch sizes   2 4 8 12
//   GaussianNoise std devs      0.01 0.02 0.04 0.08
//   MedianBlur    kernel sizes  3 5 7 9
num::Tensor perturb(const num::Tensor& image, PerturbKind kind, int level,
                    std::uint64_t seed);

Dataset generate_dataset(const TaskSpec& spec);

// Dataset directory layout: manifest.json + data.bin. data.bin starts with the
// magic "FD2DS\0\0\1", a little-endian u32 sample count, then per sample one
// u8 label, one u8 split and 3072 little-endian float32 pixels. The manifest
// echoes the spec, per-split counts, the RNG id and a CRC32 of the sample
// payload.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

}  // namespace fd2cl::synth

#endif
