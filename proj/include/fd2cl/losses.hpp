#ifndef FD2CL_LOSSES_HPP
#define FD2CL_LOSSES_HPP

#include <vector>

#include "fd2cl/tensor.hpp"

namespace fd2cl::losses {

// Per-step decomposition of the training objective
//   total = bce + lambda_ewc_eff * ewc + lambda_orth * orth + lambda_align * align
struct LossBreakdown {
    double bce = 0.0;
    double ewc = 0.0;
    double orth = 0.0;
    double align = 0.0;
    double total = 0.0;
    double lambda_ewc_eff = 0.0;
    double lambda_orth = 0.0;
    double lambda_align = 0.0;

    double composed() const {
        return bce + lambda_ewc_eff * ewc + lambda_orth * orth + lambda_align * align;
    }
    bool composition_ok(double tol = 1e-9) const {
        double v = total - composed();
        return v < tol && v > -tol;
    }
};

// Mean binary cross-entropy over the batch, stable softplus form.
num::Tape::Var bce_loss(num::Tape& t, num::Tape::Var logits, const num::Tensor& labels01);
double bce_loss_value(const num::Tensor& logits, const num::Tensor& labels01);

// Class-aware EWC penalty: sum_i (F_real(i) + F_fake(i)) * (theta_i - theta*_i)^2.
// The outer lambda is applied by the caller. All four lists must describe the
// identical parameter index set.
num::Tape::Var ewc_penalty_op(num::Tape& t, const std::vector<num::Tape::Var>& theta,
                              const std::vector<const num::Tensor*>& theta_star,
                              const std::vector<const num::Tensor*>& fisher_real,
                              const std::vector<const num::Tensor*>& fisher_fake);
double ewc_penalty_value(const std::vector<const num::Tensor*>& theta,
                         const std::vector<const num::Tensor*>& theta_star,
                         const std::vector<const num::Tensor*>& fisher_real,
                         const std::vector<const num::Tensor*>& fisher_fake);

// 1 - mean_i <f_align_i, anchor(y_i)>. Rows must be unit norm within 1e-6.
num::Tape::Var align_loss_op(num::Tape& t, num::Tape::Var f_align,
                             const num::Tensor& labels01, const num::Tensor& anchor_real,
                             const num::Tensor& anchor_fake);
double align_loss_value(const num::Tensor& f_align, const num::Tensor& labels01,
                        const num::Tensor& anchor_real, const num::Tensor& anchor_fake);

// Mean squared cosine similarity between current gradients and cached unit
// directions. Entries with a null cache direction are skipped; an empty cache
// gives 0. Evaluated on held-constant gradient surrogates, so it contributes
// to the logged total but not to parameter gradients.
double orth_loss(const std::vector<const num::Tensor*>& current_grads,
                 const std::vector<const num::Tensor*>& cache_dirs);

}  // namespace fd2cl::losses

#endif
