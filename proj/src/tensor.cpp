#include "fd2cl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace fd2cl::num {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size()))
        throw DimensionError("tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int Tensor::rows() const {
    if (ndim() != 2) throw DimensionError("rows(): tensor is not 2-D");
    return shape_[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw DimensionError("cols(): tensor is not 2-D");
    return shape_[1];
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item(): tensor is not a scalar");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_product(shape) != size()) throw DimensionError("reshape: element count mismatch");
    return Tensor(std::move(shape), data_);
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::l2_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Tensor::min() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
}

Tensor matmul_value(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw DimensionError("matmul: inner dimensions do not match");
    Tensor c({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    // i-k-j order: for each output entry the k contributions accumulate in
    // ascending order, so the summation order is fixed.
    for (int i = 0; i < m; ++i) {
        double* crow = cp + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = ap[static_cast<std::size_t>(i) * k + p];
            const double* brow = bp + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor matmul_transpose_a(const Tensor& a, const Tensor& b) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) throw DimensionError("matmul_transpose_a: dimensions do not match");
    Tensor c({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    for (int p = 0; p < k; ++p) {
        const double* arow = ap + static_cast<std::size_t>(p) * m;
        const double* brow = bp + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = cp + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor matmul_transpose_b(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) throw DimensionError("matmul_transpose_b: dimensions do not match");
    // Transpose b once, then reuse the fixed-order kernel.
    Tensor bt({k, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) bt.at(j, i) = b.at(i, j);
    (void)m;
    return matmul_value(a, bt);
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double s = 0.0;
    const double* ap = a.data();
    const double* bp = b.data();
    for (std::int64_t i = 0; i < a.size(); ++i) s += ap[i] * bp[i];
    return s;
}

namespace {
constexpr double kGeluC = 0.7978845608;  // sqrt(2/pi), tanh approximation
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_scalar(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    // log(1 + e^x) without overflow.
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

Tape::Var Tape::check(Var v) const {
    if (v < 0 || v >= static_cast<Var>(nodes_.size()))
        throw StateError("tape: invalid variable handle");
    return v;
}

Tape::Var Tape::push(Tensor value, std::vector<Var> inputs, BackwardFn back) {
    if (!value.all_finite())
        throw NumericalError("tape: operation produced non-finite values");
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (Var in : n.inputs)
        if (nodes_[static_cast<std::size_t>(in)].needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw NumericalError("tape: leaf holds non-finite values");
    Node n;
    n.value = std::move(value);
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(check(v))];
    if (n.grad.empty()) {
        static const Tensor empty;
        return empty;
    }
    return n.grad;
}

void Tape::accumulate_grad(Var v, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(check(v))];
    if (!n.needs_grad) return;
    if (n.grad.empty()) {
        n.grad = g;
        return;
    }
    if (!n.grad.same_shape(g)) throw DimensionError("accumulate_grad: shape mismatch");
    double* dst = n.grad.data();
    const double* src = g.data();
    for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
    check(loss);
    if (nodes_[static_cast<std::size_t>(loss)].value.size() != 1)
        throw DimensionError("backward: loss must be scalar");
    for (auto& n : nodes_) n.grad = Tensor();
    nodes_[static_cast<std::size_t>(loss)].grad = Tensor::scalar(1.0);
    for (Var id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.back || n.grad.empty()) continue;
        n.back(*this, n.grad);
    }
}

Tape::Var Tape::matmul(Var a, Var b) {
    Tensor out = matmul_value(value(a), value(b));
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) t.accumulate_grad(a, matmul_transpose_b(g, t.value(b)));
        if (t.requires_grad(b)) t.accumulate_grad(b, matmul_transpose_a(t.value(a), g));
    });
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw DimensionError("add: shape mismatch");
    Tensor out = av;
    double* op = out.data();
    const double* bp = bv.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] += bp[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        t.accumulate_grad(a, g);
        t.accumulate_grad(b, g);
    });
}

Tape::Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw DimensionError("sub: shape mismatch");
    Tensor out = av;
    double* op = out.data();
    const double* bp = bv.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] -= bp[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        t.accumulate_grad(a, g);
        if (!t.requires_grad(b)) return;
        Tensor neg = g;
        double* p = neg.data();
        for (std::int64_t i = 0; i < neg.size(); ++i) p[i] = -p[i];
        t.accumulate_grad(b, neg);
    });
}

Tape::Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw DimensionError("mul: shape mismatch");
    Tensor out = av;
    double* op = out.data();
    const double* bp = bv.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] *= bp[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor ga = g;
            const double* bp2 = t.value(b).data();
            double* p = ga.data();
            for (std::int64_t i = 0; i < ga.size(); ++i) p[i] *= bp2[i];
            t.accumulate_grad(a, ga);
        }
        if (t.requires_grad(b)) {
            Tensor gb = g;
            const double* ap2 = t.value(a).data();
            double* p = gb.data();
            for (std::int64_t i = 0; i < gb.size(); ++i) p[i] *= ap2[i];
            t.accumulate_grad(b, gb);
        }
    });
}

Tape::Var Tape::mul_const(Var x, Tensor c) {
    const Tensor& xv = value(x);
    if (!xv.same_shape(c)) throw DimensionError("mul_const: shape mismatch");
    Tensor out = xv;
    double* op = out.data();
    const double* cp = c.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] *= cp[i];
    auto cc = std::make_shared<Tensor>(std::move(c));
    return push(std::move(out), {x}, [x, cc](Tape& t, const Tensor& g) {
        Tensor gx = g;
        double* p = gx.data();
        const double* cp2 = cc->data();
        for (std::int64_t i = 0; i < gx.size(); ++i) p[i] *= cp2[i];
        t.accumulate_grad(x, gx);
    });
}

Tape::Var Tape::scale_shift(Var x, double gain, double shift) {
    Tensor out = value(x);
    double* op = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] = op[i] * gain + shift;
    return push(std::move(out), {x}, [x, gain](Tape& t, const Tensor& g) {
        Tensor gx = g;
        double* p = gx.data();
        for (std::int64_t i = 0; i < gx.size(); ++i) p[i] *= gain;
        t.accumulate_grad(x, gx);
    });
}

Tape::Var Tape::add_row_broadcast(Var x, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    const int rows = xv.rows(), cols = xv.cols();
    if (bv.size() != cols) throw DimensionError("add_row_broadcast: bias width mismatch");
    Tensor out = xv;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) += bv[c];
    return push(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor& g) {
        t.accumulate_grad(x, g);
        if (!t.requires_grad(bias)) return;
        Tensor gb(t.value(bias).shape());
        for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
        t.accumulate_grad(bias, gb);
    });
}

Tape::Var Tape::gelu(Var x) {
    Tensor out = value(x);
    double* op = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] = gelu_scalar(op[i]);
    return push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
        Tensor gx = g;
        const double* xp = t.value(x).data();
        double* p = gx.data();
        for (std::int64_t i = 0; i < gx.size(); ++i) p[i] *= gelu_grad_scalar(xp[i]);
        t.accumulate_grad(x, gx);
    });
}

Tape::Var Tape::tanh(Var x) {
    Tensor out = value(x);
    double* op = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) op[i] = std::tanh(op[i]);
    auto saved = std::make_shared<Tensor>(out);
    return push(std::move(out), {x}, [x, saved](Tape& t, const Tensor& g) {
        Tensor gx = g;
        const double* yp = saved->data();
        double* p = gx.data();
        for (std::int64_t i = 0; i < gx.size(); ++i) p[i] *= 1.0 - yp[i] * yp[i];
        t.accumulate_grad(x, gx);
    });
}

Tape::Var Tape::sum(Var x) {
    Tensor out = Tensor::scalar(value(x).sum());
    return push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
        t.accumulate_grad(x, Tensor::full(t.value(x).shape(), g.item()));
    });
}

Tape::Var Tape::mean(Var x) {
    const double n = static_cast<double>(value(x).size());
    Tensor out = Tensor::scalar(value(x).sum() / n);
    return push(std::move(out), {x}, [x, n](Tape& t, const Tensor& g) {
        t.accumulate_grad(x, Tensor::full(t.value(x).shape(), g.item() / n));
    });
}

Tape::Var Tape::reshape(Var x, std::vector<int> shape) {
    Tensor out = value(x).reshaped(shape);
    return push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
        t.accumulate_grad(x, g.reshaped(t.value(x).shape()));
    });
}

Tape::Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat_cols: empty input list");
    const int rows = value(xs[0]).rows();
    int total = 0;
    for (Var v : xs) {
        if (value(v).rows() != rows) throw DimensionError("concat_cols: row count mismatch");
        total += value(v).cols();
    }
    Tensor out({rows, total});
    int off = 0;
    for (Var v : xs) {
        const Tensor& t = value(v);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
        off += t.cols();
    }
    std::vector<Var> inputs = xs;
    return push(std::move(out), std::move(inputs), [xs](Tape& t, const Tensor& g) {
        int off2 = 0;
        for (Var v : xs) {
            const Tensor& xv = t.value(v);
            if (t.requires_grad(v)) {
                Tensor gx(xv.shape());
                for (int r = 0; r < xv.rows(); ++r)
                    for (int c = 0; c < xv.cols(); ++c) gx.at(r, c) = g.at(r, off2 + c);
                t.accumulate_grad(v, gx);
            }
            off2 += xv.cols();
        }
    });
}

Tape::Var Tape::row_l2_normalize(Var x, double min_norm) {
    const Tensor& xv = value(x);
    const int rows = xv.rows(), cols = xv.cols();
    Tensor out(xv.shape());
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += xv.at(r, c) * xv.at(r, c);
        const double nrm = std::sqrt(s);
        if (nrm < min_norm)
            throw NumericalError("row_l2_normalize: degenerate row " + std::to_string(r));
        (*norms)[static_cast<std::size_t>(r)] = nrm;
        for (int c = 0; c < cols; ++c) out.at(r, c) = xv.at(r, c) / nrm;
    }
    auto saved = std::make_shared<Tensor>(out);
    return push(std::move(out), {x}, [x, norms, saved](Tape& t, const Tensor& g) {
        const int rr = g.rows(), cc = g.cols();
        Tensor gx({rr, cc});
        for (int r = 0; r < rr; ++r) {
            double gy = 0.0;
            for (int c = 0; c < cc; ++c) gy += g.at(r, c) * saved->at(r, c);
            const double nrm = (*norms)[static_cast<std::size_t>(r)];
            for (int c = 0; c < cc; ++c)
                gx.at(r, c) = (g.at(r, c) - saved->at(r, c) * gy) / nrm;
        }
        t.accumulate_grad(x, gx);
    });
}

Tape::Var Tape::bce_with_logits(Var logits, const Tensor& labels01) {
    const Tensor& z = value(logits);
    if (z.size() != labels01.size()) throw DimensionError("bce_with_logits: size mismatch");
    const std::int64_t n = z.size();
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double y = labels01[i];
        // -[y log s(z) + (1-y) log(1-s(z))] in stable softplus form
        loss += y * softplus(-z[i]) + (1.0 - y) * softplus(z[i]);
    }
    loss /= static_cast<double>(n);
    auto labels = std::make_shared<Tensor>(labels01);
    return push(Tensor::scalar(loss), {logits}, [logits, labels](Tape& t, const Tensor& g) {
        const Tensor& zt = t.value(logits);
        const std::int64_t m = zt.size();
        Tensor gz(zt.shape());
        const double scale = g.item() / static_cast<double>(m);
        for (std::int64_t i = 0; i < m; ++i)
            gz[i] = (sigmoid(zt[i]) - (*labels)[i]) * scale;
        t.accumulate_grad(logits, gz);
    });
}

Tape::Var Tape::custom(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    return push(std::move(value), std::move(inputs), std::move(backward));
}

GradCheckReport grad_check(const std::function<double(std::vector<Tensor>*)>& loss_fn,
                           const std::vector<Tensor*>& params, double h, double tol) {
    (void)tol;
    std::vector<Tensor> analytic;
    const double base = loss_fn(&analytic);
    if (!std::isfinite(base)) throw NumericalError("grad_check: loss is not finite");
    if (analytic.size() != params.size())
        throw StateError("grad_check: loss_fn returned wrong gradient count");

    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p];
        if (!analytic[p].same_shape(theta))
            throw StateError("grad_check: gradient shape mismatch for parameter " +
                             std::to_string(p));
        for (std::int64_t i = 0; i < theta.size(); ++i) {
            const double orig = theta[i];
            theta[i] = orig + h;
            const double fp = loss_fn(nullptr);
            theta[i] = orig - h;
            const double fm = loss_fn(nullptr);
            theta[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericalError("grad_check: perturbed loss is not finite");
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[p][i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-5});
            const double rel = std::abs(fd - an) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p;
                report.worst_index = i;
            }
            ++report.entries_checked;
        }
    }
    return report;
}

}  // namespace fd2cl::num
