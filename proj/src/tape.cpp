#include "lewis/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lewis/errors.hpp"

namespace lewis {

namespace {

// C[m,n] += A[m,k] * B[k,n]. k innermost of the two loops so the j-axis
// stays contiguous and vectorizes; summation order over k is fixed.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n].
void mm_tn(const double* a, const double* b, double* c, int k, int m, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void transpose(const double* a, double* out, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<std::size_t>(j) * rows + i] = a[static_cast<std::size_t>(i) * cols + j];
}

bool row_broadcast(const NArray& a, const NArray& b) {
    return b.ndim() == 1 && a.last_dim() == b.dim(0) && a.shape != b.shape;
}

std::vector<int> drop_last(const std::vector<int>& s) {
    if (s.size() <= 1) return {1};
    return std::vector<int>(s.begin(), s.end() - 1);
}

}  // namespace

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    backward_done_ = false;
}

NArray& Tape::grad_buf(int id) {
    NArray& g = grads_[static_cast<std::size_t>(id)];
    if (g.v.empty()) g = NArray::zeros_like(nodes_[static_cast<std::size_t>(id)].val);
    return g;
}

bool Tape::has_grad(int id) const { return !grads_[static_cast<std::size_t>(id)].v.empty(); }

const NArray& Tape::grad(int id) { return grad_buf(id); }

int Tape::leaf(NArray value) {
    Node n;
    n.op = Op::kLeaf;
    n.val = std::move(value);
    return push(std::move(n));
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
    const NArray& A = val(a);
    const NArray& B = val(b);
    if (A.ndim() != 2 || B.ndim() != 2) throw ConfigError("matmul: operands must be rank 2");
    if (trans_a && trans_b) throw ConfigError("matmul: both operands transposed is unsupported");
    const int am = trans_a ? A.dim(1) : A.dim(0);
    const int ak = trans_a ? A.dim(0) : A.dim(1);
    const int bk = trans_b ? B.dim(1) : B.dim(0);
    const int bn = trans_b ? B.dim(0) : B.dim(1);
    if (ak != bk)
        throw ConfigError("matmul: inner dims differ, " + shape_str(A.shape) + " x " + shape_str(B.shape));
    Node n;
    n.op = Op::kMatmul;
    n.in0 = a;
    n.in1 = b;
    n.i0 = (trans_a ? 1 : 0) | (trans_b ? 2 : 0);
    n.val = NArray({am, bn});
    // Normalize to nn / tn kernels; nt and tt transpose one operand to scratch.
    if (!trans_a && !trans_b) {
        mm_nn(A.data(), B.data(), n.val.data(), am, ak, bn);
    } else if (trans_a && !trans_b) {
        mm_tn(A.data(), B.data(), n.val.data(), ak, am, bn);
    } else {
        scratch_.resize(B.size());
        transpose(B.data(), scratch_.data(), B.dim(0), B.dim(1));
        mm_nn(A.data(), scratch_.data(), n.val.data(), am, ak, bn);
    }
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    const NArray& A = val(a);
    const NArray& B = val(b);
    Node n;
    n.op = Op::kAdd;
    n.in0 = a;
    n.in1 = b;
    n.val = A;
    if (same_shape(A, B)) {
        for (std::size_t i = 0; i < A.size(); ++i) n.val.v[i] += B.v[i];
    } else if (row_broadcast(A, B)) {
        const int cols = A.last_dim();
        const std::size_t rows = A.rows();
        for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j) n.val.v[r * cols + j] += B.v[static_cast<std::size_t>(j)];
    } else {
        throw ConfigError("add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    const NArray& A = val(a);
    const NArray& B = val(b);
    Node n;
    n.op = Op::kMul;
    n.in0 = a;
    n.in1 = b;
    n.val = A;
    if (same_shape(A, B)) {
        for (std::size_t i = 0; i < A.size(); ++i) n.val.v[i] *= B.v[i];
    } else if (row_broadcast(A, B)) {
        const int cols = A.last_dim();
        const std::size_t rows = A.rows();
        for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j) n.val.v[r * cols + j] *= B.v[static_cast<std::size_t>(j)];
    } else {
        throw ConfigError("mul: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    return push(std::move(n));
}

int Tape::scale(int a, double c) {
    Node n;
    n.op = Op::kScale;
    n.in0 = a;
    n.c = c;
    n.val = val(a);
    for (double& x : n.val.v) x *= c;
    return push(std::move(n));
}

int Tape::tanh(int a) {
    Node n;
    n.op = Op::kTanh;
    n.in0 = a;
    n.val = val(a);
    for (double& x : n.val.v) x = std::tanh(x);
    return push(std::move(n));
}

int Tape::sigmoid(int a) {
    Node n;
    n.op = Op::kSigmoid;
    n.in0 = a;
    n.val = val(a);
    for (double& x : n.val.v) x = 1.0 / (1.0 + std::exp(-x));
    return push(std::move(n));
}

int Tape::log(int a) {
    Node n;
    n.op = Op::kLog;
    n.in0 = a;
    n.val = val(a);
    for (double& x : n.val.v) {
        if (!(x > 0.0)) throw NumericError("log: non-positive argument");
        x = std::log(x);
    }
    return push(std::move(n));
}

int Tape::softmax_last(int a) {
    Node n;
    n.op = Op::kSoftmaxLast;
    n.in0 = a;
    n.val = val(a);
    const int cols = n.val.last_dim();
    const std::size_t rows = n.val.rows();
    for (std::size_t r = 0; r < rows; ++r) {
        double* x = n.val.data() + r * cols;
        double hi = x[0];
        for (int j = 1; j < cols; ++j) hi = std::max(hi, x[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            x[j] = std::exp(x[j] - hi);
            sum += x[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) x[j] *= inv;
    }
    return push(std::move(n));
}

int Tape::layer_norm_last(int a) {
    const NArray& A = val(a);
    if (A.last_dim() < 2) throw ConfigError("layer_norm: last axis must have length >= 2");
    Node n;
    n.op = Op::kLayerNormLast;
    n.in0 = a;
    n.val = A;
    const int cols = n.val.last_dim();
    const std::size_t rows = n.val.rows();
    // Cache 1/sqrt(var+eps) per row for the backward pass.
    scratch_.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double* x = n.val.data() + r * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += x[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        scratch_[r] = inv;
        for (int j = 0; j < cols; ++j) x[j] = (x[j] - mean) * inv;
    }
    n.aux = scratch_;
    return push(std::move(n));
}

int Tape::concat_last(int a, int b) {
    const NArray& A = val(a);
    const NArray& B = val(b);
    if (drop_last(A.shape) != drop_last(B.shape))
        throw ConfigError("concat: leading shapes differ");
    const int ca = A.last_dim();
    const int cb = B.last_dim();
    std::vector<int> shape = A.shape;
    shape.back() = ca + cb;
    Node n;
    n.op = Op::kConcatLast;
    n.in0 = a;
    n.in1 = b;
    n.i0 = ca;
    n.val = NArray(std::move(shape));
    const std::size_t rows = A.rows();
    for (std::size_t r = 0; r < rows; ++r) {
        double* out = n.val.data() + r * static_cast<std::size_t>(ca + cb);
        std::memcpy(out, A.data() + r * ca, sizeof(double) * static_cast<std::size_t>(ca));
        std::memcpy(out + ca, B.data() + r * cb, sizeof(double) * static_cast<std::size_t>(cb));
    }
    return push(std::move(n));
}

int Tape::slice_last(int a, int offset, int length) {
    const NArray& A = val(a);
    const int cols = A.last_dim();
    if (offset < 0 || length <= 0 || offset + length > cols) throw ConfigError("slice: out of range");
    std::vector<int> shape = A.shape;
    shape.back() = length;
    Node n;
    n.op = Op::kSliceLast;
    n.in0 = a;
    n.i0 = offset;
    n.i1 = length;
    n.val = NArray(std::move(shape));
    const std::size_t rows = A.rows();
    for (std::size_t r = 0; r < rows; ++r)
        std::memcpy(n.val.data() + r * length, A.data() + r * cols + offset,
                    sizeof(double) * static_cast<std::size_t>(length));
    return push(std::move(n));
}

int Tape::lookup_rows(int table, std::vector<std::int32_t> idx) {
    const NArray& T = val(table);
    if (T.ndim() != 2) throw ConfigError("lookup: table must be rank 2");
    const int cols = T.dim(1);
    Node n;
    n.op = Op::kLookupRows;
    n.in0 = table;
    n.val = NArray({static_cast<int>(idx.size()), cols});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const int row = idx[r];
        if (row < 0 || row >= T.dim(0)) throw ConfigError("lookup: row out of range");
        std::memcpy(n.val.data() + r * cols, T.data() + static_cast<std::size_t>(row) * cols,
                    sizeof(double) * static_cast<std::size_t>(cols));
    }
    n.idx = std::move(idx);
    return push(std::move(n));
}

int Tape::gather_last(int a, std::vector<std::int32_t> idx) {
    const NArray& A = val(a);
    const int cols = A.last_dim();
    const std::size_t rows = A.rows();
    if (idx.size() != rows) throw ConfigError("gather: one index per row required");
    Node n;
    n.op = Op::kGatherLast;
    n.in0 = a;
    n.val = NArray({static_cast<int>(rows)});
    for (std::size_t r = 0; r < rows; ++r) {
        const int j = idx[r];
        if (j < 0 || j >= cols) throw ConfigError("gather: index out of range");
        n.val.v[r] = A.v[r * cols + static_cast<std::size_t>(j)];
    }
    n.idx = std::move(idx);
    return push(std::move(n));
}

int Tape::clamp_min(int a, double c) {
    Node n;
    n.op = Op::kClampMin;
    n.in0 = a;
    n.c = c;
    n.val = val(a);
    for (double& x : n.val.v) x = std::max(x, c);
    return push(std::move(n));
}

int Tape::sum_last(int a) {
    const NArray& A = val(a);
    const int cols = A.last_dim();
    const std::size_t rows = A.rows();
    Node n;
    n.op = Op::kSumLast;
    n.in0 = a;
    n.val = NArray(drop_last(A.shape));
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* x = A.data() + r * cols;
        for (int j = 0; j < cols; ++j) s += x[j];
        n.val.v[r] = s;
    }
    return push(std::move(n));
}

int Tape::sum_all(int a) {
    const NArray& A = val(a);
    Node n;
    n.op = Op::kSumAll;
    n.in0 = a;
    double s = 0.0;
    for (double x : A.v) s += x;
    n.val = NArray::scalar(s);
    return push(std::move(n));
}

void Tape::backward(int loss) {
    const NArray& L = val(loss);
    if (L.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(L.shape));
    if (backward_done_) throw ContractError("backward: already ran on this tape");
    backward_done_ = true;
    grad_buf(loss).v[0] += 1.0;

    for (int id = loss; id >= 0; --id) {
        const std::size_t uid = static_cast<std::size_t>(id);
        if (grads_[uid].v.empty()) continue;
        const Node& n = nodes_[uid];
        const NArray& g = grads_[uid];
        switch (n.op) {
            case Op::kLeaf:
                break;
            case Op::kMatmul: {
                const bool ta = (n.i0 & 1) != 0;
                const bool tb = (n.i0 & 2) != 0;
                const NArray& A = val(n.in0);
                const NArray& B = val(n.in1);
                NArray& ga = grad_buf(n.in0);
                NArray& gb = grad_buf(n.in1);
                const int m = n.val.dim(0);
                const int nn = n.val.dim(1);
                const int k = ta ? A.dim(0) : A.dim(1);
                if (!ta && !tb) {
                    // dA += G * B^T ; dB += A^T * G
                    scratch_.resize(B.size());
                    transpose(B.data(), scratch_.data(), B.dim(0), B.dim(1));
                    mm_nn(g.data(), scratch_.data(), ga.data(), m, nn, k);
                    mm_tn(A.data(), g.data(), gb.data(), m, k, nn);
                } else if (!ta && tb) {
                    // C = A * B^T with B [n,k]: dA += G * B ; dB += G^T * A
                    mm_nn(g.data(), B.data(), ga.data(), m, nn, k);
                    mm_tn(g.data(), A.data(), gb.data(), m, nn, k);
                } else {
                    // C = A^T * B with A [k,m]: dA += B * G^T ; dB += A * G
                    scratch_.resize(g.size());
                    transpose(g.data(), scratch_.data(), m, nn);
                    mm_nn(B.data(), scratch_.data(), ga.data(), k, nn, m);
                    mm_nn(A.data(), g.data(), gb.data(), k, m, nn);
                }
                break;
            }
            case Op::kAdd: {
                const NArray& A = val(n.in0);
                const NArray& B = val(n.in1);
                NArray& ga = grad_buf(n.in0);
                NArray& gb = grad_buf(n.in1);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
                if (same_shape(A, B)) {
                    for (std::size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i];
                } else {
                    const int cols = A.last_dim();
                    const std::size_t rows = A.rows();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (int j = 0; j < cols; ++j) gb.v[static_cast<std::size_t>(j)] += g.v[r * cols + j];
                }
                break;
            }
            case Op::kMul: {
                const NArray& A = val(n.in0);
                const NArray& B = val(n.in1);
                NArray& ga = grad_buf(n.in0);
                NArray& gb = grad_buf(n.in1);
                if (same_shape(A, B)) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        ga.v[i] += g.v[i] * B.v[i];
                        gb.v[i] += g.v[i] * A.v[i];
                    }
                } else {
                    const int cols = A.last_dim();
                    const std::size_t rows = A.rows();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (int j = 0; j < cols; ++j) {
                            ga.v[r * cols + j] += g.v[r * cols + j] * B.v[static_cast<std::size_t>(j)];
                            gb.v[static_cast<std::size_t>(j)] += g.v[r * cols + j] * A.v[r * cols + j];
                        }
                }
                break;
            }
            case Op::kScale: {
                NArray& ga = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * n.c;
                break;
            }
            case Op::kTanh: {
                NArray& ga = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
                break;
            }
            case Op::kSigmoid: {
                NArray& ga = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * n.val.v[i] * (1.0 - n.val.v[i]);
                break;
            }
            case Op::kLog: {
                const NArray& A = val(n.in0);
                NArray& ga = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] / A.v[i];
                break;
            }
            case Op::kSoftmaxLast: {
                NArray& ga = grad_buf(n.in0);
                const int cols = n.val.last_dim();
                const std::size_t rows = n.val.rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* y = n.val.data() + r * cols;
                    const double* gy = g.data() + r * cols;
                    double dot = 0.0;
                    for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
                    double* gx = ga.data() + r * cols;
                    for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
                }
                break;
            }
            case Op::kLayerNormLast: {
                NArray& ga = grad_buf(n.in0);
                const int cols = n.val.last_dim();
                const std::size_t rows = n.val.rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* y = n.val.data() + r * cols;
                    const double* gy = g.data() + r * cols;
                    const double inv = n.aux[r];
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (int j = 0; j < cols; ++j) {
                        mean_g += gy[j];
                        mean_gy += gy[j] * y[j];
                    }
                    mean_g /= cols;
                    mean_gy /= cols;
                    double* gx = ga.data() + r * cols;
                    for (int j = 0; j < cols; ++j) gx[j] += inv * (gy[j] - mean_g - y[j] * mean_gy);
                }
                break;
            }
            case Op::kConcatLast: {
                NArray& ga = grad_buf(n.in0);
                NArray& gb = grad_buf(n.in1);
                const int ca = n.i0;
                const int cb = n.val.last_dim() - ca;
                const std::size_t rows = n.val.rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * static_cast<std::size_t>(ca + cb);
                    double* gar = ga.data() + r * ca;
                    double* gbr = gb.data() + r * cb;
                    for (int j = 0; j < ca; ++j) gar[j] += gr[j];
                    for (int j = 0; j < cb; ++j) gbr[j] += gr[ca + j];
                }
                break;
            }
            case Op::kSliceLast: {
                NArray& ga = grad_buf(n.in0);
                const int cols = val(n.in0).last_dim();
                const int len = n.i1;
                const std::size_t rows = n.val.rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    double* gar = ga.data() + r * cols + n.i0;
                    const double* gr = g.data() + r * len;
                    for (int j = 0; j < len; ++j) gar[j] += gr[j];
                }
                break;
            }
            case Op::kLookupRows: {
                NArray& gt = grad_buf(n.in0);
                const int cols = n.val.dim(1);
                for (std::size_t r = 0; r < n.idx.size(); ++r) {
                    double* trow = gt.data() + static_cast<std::size_t>(n.idx[r]) * cols;
                    const double* gr = g.data() + r * cols;
                    for (int j = 0; j < cols; ++j) trow[j] += gr[j];
                }
                break;
            }
            case Op::kGatherLast: {
                NArray& ga = grad_buf(n.in0);
                const int cols = val(n.in0).last_dim();
                for (std::size_t r = 0; r < n.idx.size(); ++r)
                    ga.v[r * cols + static_cast<std::size_t>(n.idx[r])] += g.v[r];
                break;
            }
            case Op::kClampMin: {
                const NArray& A = val(n.in0);
                NArray& ga = grad_buf(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (A.v[i] >= n.c) ga.v[i] += g.v[i];
                break;
            }
            case Op::kSumLast: {
                NArray& ga = grad_buf(n.in0);
                const int cols = val(n.in0).last_dim();
                const std::size_t rows = val(n.in0).rows();
                for (std::size_t r = 0; r < rows; ++r) {
                    double* gar = ga.data() + r * cols;
                    const double gv = g.v[r];
                    for (int j = 0; j < cols; ++j) gar[j] += gv;
                }
                break;
            }
            case Op::kSumAll: {
                NArray& ga = grad_buf(n.in0);
                const double gv = g.v[0];
                for (double& x : ga.v) x += gv;
                break;
            }
        }
    }
}

}  // namespace lewis
