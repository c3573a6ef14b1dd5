#include "fd2cl/losses.hpp"

#include <cmath>

namespace fd2cl::losses {

using num::Tensor;
using num::Tape;

num::Tape::Var bce_loss(Tape& t, Tape::Var logits, const Tensor& labels01) {
    return t.bce_with_logits(logits, labels01);
}

double bce_loss_value(const Tensor& logits, const Tensor& labels01) {
    if (logits.size() != labels01.size()) throw DimensionError("bce: size mismatch");
    double loss = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i) {
        const double y = labels01[i];
        loss += y * num::softplus(-logits[i]) + (1.0 - y) * num::softplus(logits[i]);
    }
    return loss / static_cast<double>(logits.size());
}

namespace {

void check_ewc_sets(const std::vector<const Tensor*>& theta_star,
                    const std::vector<const Tensor*>& fr,
                    const std::vector<const Tensor*>& ff, std::size_t n,
                    const std::function<const std::vector<int>&(std::size_t)>& shape_of) {
    if (theta_star.size() != n || fr.size() != n || ff.size() != n)
        throw StateError("ewc_penalty: parameter index sets differ in length");
    for (std::size_t i = 0; i < n; ++i) {
        if (theta_star[i]->shape() != shape_of(i) || fr[i]->shape() != shape_of(i) ||
            ff[i]->shape() != shape_of(i))
            throw StateError("ewc_penalty: parameter index sets differ in shape");
    }
}

}  // namespace

num::Tape::Var ewc_penalty_op(Tape& t, const std::vector<Tape::Var>& theta,
                              const std::vector<const Tensor*>& theta_star,
                              const std::vector<const Tensor*>& fisher_real,
                              const std::vector<const Tensor*>& fisher_fake) {
    check_ewc_sets(theta_star, fisher_real, fisher_fake, theta.size(),
                   [&](std::size_t i) -> const std::vector<int>& {
                       return t.value(theta[i]).shape();
                   });
    Tape::Var acc = Tape::kNone;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        Tensor weight = *fisher_real[i];
        for (std::int64_t k = 0; k < weight.size(); ++k)
            weight[k] += (*fisher_fake[i])[k];
        Tape::Var diff = t.sub(theta[i], t.constant(*theta_star[i]));
        Tape::Var term = t.sum(t.mul_const(t.mul(diff, diff), std::move(weight)));
        acc = (acc == Tape::kNone) ? term : t.add(acc, term);
    }
    if (acc == Tape::kNone) return t.constant(Tensor::scalar(0.0));
    return acc;
}

double ewc_penalty_value(const std::vector<const Tensor*>& theta,
                         const std::vector<const Tensor*>& theta_star,
                         const std::vector<const Tensor*>& fisher_real,
                         const std::vector<const Tensor*>& fisher_fake) {
    check_ewc_sets(theta_star, fisher_real, fisher_fake, theta.size(),
                   [&](std::size_t i) -> const std::vector<int>& {
                       return theta[i]->shape();
                   });
    double acc = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        for (std::int64_t k = 0; k < theta[i]->size(); ++k) {
            const double d = (*theta[i])[k] - (*theta_star[i])[k];
            acc += ((*fisher_real[i])[k] + (*fisher_fake[i])[k]) * d * d;
        }
    }
    return acc;
}

namespace {

Tensor anchor_rows(const Tensor& labels01, const Tensor& anchor_real,
                   const Tensor& anchor_fake) {
    const int b = static_cast<int>(labels01.size());
    const int d = static_cast<int>(anchor_real.size());
    Tensor rows({b, d});
    for (int i = 0; i < b; ++i) {
        const Tensor& a = labels01[i] >= 0.5 ? anchor_fake : anchor_real;
        for (int j = 0; j < d; ++j) rows.at(i, j) = a[j];
    }
    return rows;
}

void check_unit_rows(const Tensor& f) {
    for (int r = 0; r < f.rows(); ++r) {
        double s = 0.0;
        for (int c = 0; c < f.cols(); ++c) s += f.at(r, c) * f.at(r, c);
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
            throw ContractError("align_loss: row " + std::to_string(r) +
                                " is not unit norm");
    }
}

}  // namespace

num::Tape::Var align_loss_op(Tape& t, Tape::Var f_align, const Tensor& labels01,
                             const Tensor& anchor_real, const Tensor& anchor_fake) {
    const Tensor& f = t.value(f_align);
    check_unit_rows(f);
    const double b = static_cast<double>(f.rows());
    Tensor anchors = anchor_rows(labels01, anchor_real, anchor_fake);
    Tape::Var dots = t.sum(t.mul_const(f_align, std::move(anchors)));
    // 1 - (1/B) * sum of anchor dot products
    return t.scale_shift(dots, -1.0 / b, 1.0);
}

double align_loss_value(const Tensor& f_align, const Tensor& labels01,
                        const Tensor& anchor_real, const Tensor& anchor_fake) {
    check_unit_rows(f_align);
    const Tensor anchors = anchor_rows(labels01, anchor_real, anchor_fake);
    double s = 0.0;
    for (std::int64_t i = 0; i < f_align.size(); ++i) s += f_align[i] * anchors[i];
    return 1.0 - s / static_cast<double>(f_align.rows());
}

double orth_loss(const std::vector<const Tensor*>& current_grads,
                 const std::vector<const Tensor*>& cache_dirs) {
    if (current_grads.size() != cache_dirs.size())
        throw StateError("orth_loss: gradient/cache list size mismatch");
    double acc = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < current_grads.size(); ++i) {
        if (cache_dirs[i] == nullptr) continue;
        ++counted;
        if (current_grads[i] == nullptr) continue;
        const Tensor& g = *current_grads[i];
        const Tensor& h = *cache_dirs[i];
        if (g.size() != h.size()) throw StateError("orth_loss: tensor size mismatch");
        const double gn = g.l2_norm();
        if (gn < 1e-12) continue;
        const double c = num::dot(g, h) / gn;  // cache entries are unit norm
        acc += c * c;
    }
    return counted == 0 ? 0.0 : acc / static_cast<double>(counted);
}

}  // namespace fd2cl::losses
