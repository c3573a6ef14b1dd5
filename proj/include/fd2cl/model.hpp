#ifndef FD2CL_MODEL_HPP
#define FD2CL_MODEL_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fd2cl/domains.hpp"
#include "fd2cl/rng.hpp"
#include "fd2cl/tensor.hpp"

namespace fd2cl::model {

struct ModelDims {
    int c = 3, h = 32, w = 32;     // input image
    int d = 64;                    // feature width
    int h1 = 256;                  // encoder hidden width
    int h2 = 128;                  // classifier hidden width
    int rank = 4;
    double alpha = 16.0;
    int pixels() const { return c * h * w; }
};

// Low-rank delta (alpha/rank) * A * B on one frozen weight matrix.
// B starts at zero so the adapter is the identity delta at creation.
struct LoraPair {
    num::Tensor a;  // {m, rank}
    num::Tensor b;  // {rank, n}
};

// Frozen two-block MLP encoder, three domain adapters (one per view, each
// adapting both blocks), the learnable phase gate, the classifier head, and
// the fixed class anchors. The trainable census is constant for a whole run.
struct ModelState {
    ModelDims dims;

    // frozen after seeded init
    num::Tensor enc_w1, enc_b1, enc_w2, enc_b2;
    num::Tensor anchor_real, anchor_fake;  // unit norm, |<t_r,t_f>| < 0.2

    // trainable
    LoraPair adapters[3][2];  // [domain: S,W,F][block: 1,2]
    domains::PhaseGate gate;
    num::Tensor head_w1, head_b1, head_w2, head_b2;

    static ModelState init(const ModelDims& dims, std::uint64_t seed);
};

inline constexpr int kNumDomains = 3;
inline constexpr double kDropoutProb = 0.5;

// Canonical trainable parameter enumeration. Adapter tensors come first
// (the orthogonal-projection set), then the phase gate and the classifier
// head (the EWC-regularized set). Order is stable across the project.
struct ParamRef {
    std::string name;
    num::Tensor* tensor;
    bool is_adapter;
};
std::vector<ParamRef> trainable_params(ModelState& m);
std::vector<std::size_t> adapter_param_indices(const ModelState& m);
std::vector<std::size_t> ewc_param_indices(const ModelState& m);

// Full census (trainable and frozen) for the constant-size invariant.
std::vector<std::pair<std::string, std::vector<int>>> parameter_census(const ModelState& m);
std::int64_t trainable_entry_count(const ModelState& m);

// One forward pass on a tape. Returns the bound parameter leaves (parallel to
// trainable_params) plus logits {B} and the unit-row alignment feature {B,D}.
struct ForwardOptions {
    bool train_mode = false;
    const num::Tensor* dropout_mask = nullptr;  // {B,H2}; required in train mode
    bool freq_branches = true;
    domains::FrozenAlignStats* frozen_stats = nullptr;
};

struct ForwardVars {
    std::vector<num::Tape::Var> params;
    num::Tape::Var logits;
    num::Tape::Var f_align;
    num::Tape::Var f_cls;
};

ForwardVars forward(num::Tape& t, ModelState& m, const num::Tensor& batch,
                    const ForwardOptions& opts);

// Single-branch encoding of one already-prepared view (exposed for tests and
// feature inspection). The domain tag selects the adapter set.
num::Tape::Var encode_branch(num::Tape& t, ModelState& m, num::Tape::Var view,
                             domains::DomainTag tag,
                             const std::vector<num::Tape::Var>& param_vars);

// Concatenation fusion (S, W, F order) and averaged unit-norm fusion.
num::Tape::Var fuse_cls(num::Tape& t, num::Tape::Var fs, num::Tape::Var fw,
                        num::Tape::Var ff);
num::Tape::Var fuse_align(num::Tape& t, num::Tape::Var fs, num::Tape::Var fw,
                          num::Tape::Var ff);

// Inverted-dropout mask with keep probability 1-p, entries 0 or 1/(1-p).
num::Tensor make_dropout_mask(int rows, int cols, double p, rng::Xoshiro256pp& gen);

}  // namespace fd2cl::model

#endif
