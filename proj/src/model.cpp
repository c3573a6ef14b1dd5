#include "fd2cl/model.hpp"

#include <cmath>

namespace fd2cl::model {

using num::Tensor;
using num::Tape;

namespace {

// Fixed sub-stream ids so initialization does not depend on code order.
enum SeedStream : std::uint64_t {
    kEncW1 = 1,
    kEncW2 = 2,
    kAnchors = 3,
    kAdapterBase = 10,  // +4 per domain: block1.A, block1.B, block2.A, block2.B
    kHead = 40,
};

Tensor uniform_init(int rows, int cols, double bound, rng::Xoshiro256pp& gen) {
    Tensor t({rows, cols});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = gen.uniform(-bound, bound);
    return t;
}

Tensor xavier_init(int rows, int cols, rng::Xoshiro256pp& gen) {
    return uniform_init(rows, cols, std::sqrt(6.0 / (rows + cols)), gen);
}

Tensor unit_vector(int d, rng::Xoshiro256pp& gen) {
    Tensor v({1, d});
    double norm = 0.0;
    do {
        for (int i = 0; i < d; ++i) v[i] = gen.normal();
        norm = v.l2_norm();
    } while (norm < 1e-6);
    for (int i = 0; i < d; ++i) v[i] /= norm;
    return v;
}

}  // namespace

ModelState ModelState::init(const ModelDims& dims, std::uint64_t seed) {
    ModelState m;
    m.dims = dims;
    const int p = dims.pixels();

    {
        auto gen = rng::Xoshiro256pp::from_stream(seed, kEncW1);
        m.enc_w1 = xavier_init(p, dims.h1, gen);
        m.enc_b1 = Tensor({1, dims.h1});
    }
    {
        auto gen = rng::Xoshiro256pp::from_stream(seed, kEncW2);
        m.enc_w2 = xavier_init(dims.h1, dims.d, gen);
        m.enc_b2 = Tensor({1, dims.d});
    }
    {
        auto gen = rng::Xoshiro256pp::from_stream(seed, kAnchors);
        m.anchor_real = unit_vector(dims.d, gen);
        // Re-sample until the anchors are close to orthogonal.
        do {
            m.anchor_fake = unit_vector(dims.d, gen);
        } while (std::abs(num::dot(m.anchor_real, m.anchor_fake)) >= 0.2);
    }

    const int block_in[2] = {p, dims.h1};
    const int block_out[2] = {dims.h1, dims.d};
    for (int dom = 0; dom < kNumDomains; ++dom) {
        for (int blk = 0; blk < 2; ++blk) {
            auto gen = rng::Xoshiro256pp::from_stream(seed, kAdapterBase + 4 * dom + 2 * blk);
            LoraPair& lp = m.adapters[dom][blk];
            lp.a = Tensor({block_in[blk], dims.rank});
            for (std::int64_t i = 0; i < lp.a.size(); ++i) lp.a[i] = 0.02 * gen.normal();
            lp.b = Tensor({dims.rank, block_out[blk]});  // zero: identity delta
        }
    }

    m.gate = domains::PhaseGate::init(dims.h, dims.w, 0.1);

    {
        auto gen = rng::Xoshiro256pp::from_stream(seed, kHead);
        m.head_w1 = xavier_init(3 * dims.d, dims.h2, gen);
        m.head_b1 = Tensor({1, dims.h2});
        m.head_w2 = xavier_init(dims.h2, 1, gen);
        m.head_b2 = Tensor({1, 1});
    }
    return m;
}

std::vector<ParamRef> trainable_params(ModelState& m) {
    std::vector<ParamRef> out;
    static const char* kDomainNames[3] = {"spatial", "wavelet", "fourier"};
    for (int dom = 0; dom < kNumDomains; ++dom) {
        for (int blk = 0; blk < 2; ++blk) {
            const std::string base =
                std::string("adapter.") + kDomainNames[dom] + ".block" + std::to_string(blk + 1);
            out.push_back({base + ".A", &m.adapters[dom][blk].a, true});
            out.push_back({base + ".B", &m.adapters[dom][blk].b, true});
        }
    }
    out.push_back({"gate.gain", &m.gate.gain, false});
    out.push_back({"gate.scale", &m.gate.scale, false});
    out.push_back({"head.w1", &m.head_w1, false});
    out.push_back({"head.b1", &m.head_b1, false});
    out.push_back({"head.w2", &m.head_w2, false});
    out.push_back({"head.b2", &m.head_b2, false});
    return out;
}

std::vector<std::size_t> adapter_param_indices(const ModelState&) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 12; ++i) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> ewc_param_indices(const ModelState&) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 12; i < 18; ++i) idx.push_back(i);
    return idx;
}

std::vector<std::pair<std::string, std::vector<int>>> parameter_census(const ModelState& m) {
    std::vector<std::pair<std::string, std::vector<int>>> census;
    auto& mm = const_cast<ModelState&>(m);
    for (const auto& p : trainable_params(mm)) census.emplace_back(p.name, p.tensor->shape());
    census.emplace_back("enc.w1", m.enc_w1.shape());
    census.emplace_back("enc.b1", m.enc_b1.shape());
    census.emplace_back("enc.w2", m.enc_w2.shape());
    census.emplace_back("enc.b2", m.enc_b2.shape());
    census.emplace_back("anchor.real", m.anchor_real.shape());
    census.emplace_back("anchor.fake", m.anchor_fake.shape());
    return census;
}

std::int64_t trainable_entry_count(const ModelState& m) {
    auto& mm = const_cast<ModelState&>(m);
    std::int64_t n = 0;
    for (const auto& p : trainable_params(mm)) n += p.tensor->size();
    return n;
}

num::Tape::Var encode_branch(Tape& t, ModelState& m, Tape::Var view,
                             domains::DomainTag tag,
                             const std::vector<Tape::Var>& pv) {
    const int dom = static_cast<int>(tag);
    if (dom < 0 || dom >= kNumDomains)
        throw ConfigError("encode_branch: unknown domain tag");
    const double lora_scale = m.dims.alpha / static_cast<double>(m.dims.rank);

    const int batch = t.value(view).dim(0);
    Tape::Var x = t.reshape(view, {batch, m.dims.pixels()});

    const Tape::Var w1 = t.constant(m.enc_w1);
    const Tape::Var b1 = t.constant(m.enc_b1);
    const Tape::Var w2 = t.constant(m.enc_w2);
    const Tape::Var b2 = t.constant(m.enc_b2);

    // block 1: x*W1 + (alpha/r)*(x*A)*B + b1
    const Tape::Var a1 = pv[static_cast<std::size_t>(4 * dom + 0)];
    const Tape::Var bb1 = pv[static_cast<std::size_t>(4 * dom + 1)];
    Tape::Var h = t.matmul(x, w1);
    Tape::Var delta1 = t.scale_shift(t.matmul(t.matmul(x, a1), bb1), lora_scale, 0.0);
    h = t.add_row_broadcast(t.add(h, delta1), b1);
    h = t.gelu(h);

    // block 2
    const Tape::Var a2 = pv[static_cast<std::size_t>(4 * dom + 2)];
    const Tape::Var bb2 = pv[static_cast<std::size_t>(4 * dom + 3)];
    Tape::Var f = t.matmul(h, w2);
    Tape::Var delta2 = t.scale_shift(t.matmul(t.matmul(h, a2), bb2), lora_scale, 0.0);
    f = t.add_row_broadcast(t.add(f, delta2), b2);
    return f;
}

num::Tape::Var fuse_cls(Tape& t, Tape::Var fs, Tape::Var fw, Tape::Var ff) {
    return t.concat_cols({fs, fw, ff});
}

num::Tape::Var fuse_align(Tape& t, Tape::Var fs, Tape::Var fw, Tape::Var ff) {
    Tape::Var mean = t.scale_shift(t.add(t.add(fs, fw), ff), 1.0 / 3.0, 0.0);
    return t.row_l2_normalize(mean, 1e-12);
}

num::Tensor make_dropout_mask(int rows, int cols, double p, rng::Xoshiro256pp& gen) {
    Tensor mask({rows, cols});
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::int64_t i = 0; i < mask.size(); ++i)
        mask[i] = (gen.uniform() >= p) ? keep_scale : 0.0;
    return mask;
}

ForwardVars forward(Tape& t, ModelState& m, const Tensor& batch,
                    const ForwardOptions& opts) {
    if (batch.ndim() != 4) throw DimensionError("forward: batch must be {B,C,H,W}");
    if (opts.train_mode && opts.dropout_mask == nullptr)
        throw StateError("forward: train mode requires a dropout mask");

    ForwardVars fv;
    auto refs = trainable_params(m);
    fv.params.reserve(refs.size());
    for (auto& r : refs) fv.params.push_back(t.leaf(*r.tensor, true));

    const Tape::Var gain = fv.params[12];
    const Tape::Var scale = fv.params[13];
    domains::Views views = domains::make_views(t, batch, gain, scale,
                                               opts.freq_branches, opts.frozen_stats);

    const Tape::Var f_s = encode_branch(t, m, views.spatial, domains::DomainTag::Spatial, fv.params);
    const Tape::Var f_w = encode_branch(t, m, views.wavelet, domains::DomainTag::Wavelet, fv.params);
    const Tape::Var f_f = encode_branch(t, m, views.fourier, domains::DomainTag::Fourier, fv.params);

    fv.f_cls = fuse_cls(t, f_s, f_w, f_f);
    fv.f_align = fuse_align(t, f_s, f_w, f_f);

    Tape::Var h = t.add_row_broadcast(t.matmul(fv.f_cls, fv.params[14]), fv.params[15]);
    h = t.gelu(h);
    if (opts.train_mode) h = t.mul_const(h, *opts.dropout_mask);
    Tape::Var logits2 = t.add_row_broadcast(t.matmul(h, fv.params[16]), fv.params[17]);
    fv.logits = t.reshape(logits2, {batch.dim(0)});
    return fv;
}

}  // namespace fd2cl::model
