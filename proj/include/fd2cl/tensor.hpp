#ifndef FD2CL_TENSOR_HPP
#define FD2CL_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fd2cl/errors.hpp"

namespace fd2cl::num {

// Dense row-major tensor of doubles. All reductions over its data use a
// fixed sequential order so identical inputs give bit-identical results.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor identity(int n);

    const std::vector<int>& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    // 2-D accessors; throw on other ranks.
    int rows() const;
    int cols() const;
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double item() const;
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool empty() const { return data_.empty(); }

    Tensor reshaped(std::vector<int> shape) const;

    double sum() const;        // fixed-order sequential
    double l2_norm() const;
    double min() const;
    double max() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Value-level kernels shared by forward and backward passes.
Tensor matmul_value(const Tensor& a, const Tensor& b);            // A[m,k] * B[k,n]
Tensor matmul_transpose_a(const Tensor& a, const Tensor& b);      // A^T * B
Tensor matmul_transpose_b(const Tensor& a, const Tensor& b);      // A * B^T
double dot(const Tensor& a, const Tensor& b);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);
double sigmoid(double x);
double softplus(double x);

// Reverse-mode tape over the fixed operation set the model needs. Nodes are
// appended in evaluation order, so creation order is a topological order and
// backward() is a single reverse sweep that visits each node exactly once.
class Tape {
public:
    using Var = int;
    static constexpr Var kNone = -1;

    // Backward callback: given the tape and the node's output gradient,
    // accumulate into the node's inputs via accumulate_grad().
    using BackwardFn = std::function<void(Tape&, const Tensor&)>;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[check(v)].needs_grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);                       // same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                       // elementwise
    Var mul_const(Var x, Tensor c);              // elementwise by constant
    Var scale_shift(Var x, double gain, double shift);
    Var add_row_broadcast(Var x, Var bias);      // x[B,N] + bias[1,N]
    Var gelu(Var x);
    Var tanh(Var x);
    Var sum(Var x);
    Var mean(Var x);
    Var reshape(Var x, std::vector<int> shape);
    Var concat_cols(const std::vector<Var>& xs);
    Var row_l2_normalize(Var x, double min_norm);
    Var bce_with_logits(Var logits, const Tensor& labels01);   // mean over batch

    // Escape hatch for composite differentiable operations (FFT-domain ops).
    Var custom(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    void backward(Var loss);
    void accumulate_grad(Var v, const Tensor& g);

private:
    struct Node {
        Tensor value;
        Tensor grad;               // lazily allocated during backward
        bool needs_grad = false;
        std::vector<Var> inputs;
        BackwardFn back;
    };

    Var check(Var v) const;
    Var push(Tensor value, std::vector<Var> inputs, BackwardFn back);

    std::vector<Node> nodes_;
};

// Central finite-difference verification of tape gradients.
//
// loss_fn(nullptr) evaluates the loss at the current parameter values;
// loss_fn(&grads) additionally fills one gradient tensor per parameter, in
// order. Relative error uses max(|analytic|, |numeric|, 1e-5) as denominator.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;
    std::int64_t worst_index = 0;
    std::int64_t entries_checked = 0;
    bool passed(double tol) const { return max_rel_err < tol; }
};

GradCheckReport grad_check(const std::function<double(std::vector<Tensor>*)>& loss_fn,
                           const std::vector<Tensor*>& params, double h, double tol);

}  // namespace fd2cl::num

#endif
