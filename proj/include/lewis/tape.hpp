#pragma once

#include <cstdint>
#include <vector>

#include "lewis/narray.hpp"

namespace lewis {

enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,         // flags in i0: bit0 = transpose a, bit1 = transpose b
    kAdd,            // same shape, or b broadcast over rows ([r,n] + [n])
    kMul,            // same shape, or b broadcast over rows
    kScale,          // c * a
    kTanh,
    kSigmoid,
    kLog,
    kSoftmaxLast,    // max-subtracted softmax along the last axis
    kLayerNormLast,  // mean 0 / var 1 along the last axis, eps inside the sqrt
    kConcatLast,
    kSliceLast,      // i0 = offset, i1 = length
    kLookupRows,     // idx selects rows of a table [V, D]
    kGatherLast,     // idx picks one entry per row along the last axis
    kClampMin,       // max(a, c); gradient blocked where a < c
    kSumLast,        // drop the last axis by summation
    kSumAll,         // scalar [1]
};

// Dynamic computation graph over NArrays. Nodes are appended in topological
// order by construction; backward() walks them in reverse. One tape per batch,
// single-threaded. Distinct tapes share nothing.
class Tape {
public:
    struct Node {
        Op op = Op::kLeaf;
        int in0 = -1;
        int in1 = -1;
        int i0 = 0;
        int i1 = 0;
        double c = 0.0;
        NArray val;
        std::vector<std::int32_t> idx;
        std::vector<double> aux;  // per-row cache (layer-norm inverse std)
    };

    static constexpr double kLayerNormEps = 1e-5;

    int leaf(NArray value);
    int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
    int add(int a, int b);
    int mul(int a, int b);
    int scale(int a, double c);
    int tanh(int a);
    int sigmoid(int a);
    int log(int a);
    int softmax_last(int a);
    int layer_norm_last(int a);
    int concat_last(int a, int b);
    int slice_last(int a, int offset, int length);
    int lookup_rows(int table, std::vector<std::int32_t> idx);
    int gather_last(int a, std::vector<std::int32_t> idx);
    int clamp_min(int a, double c);
    int sum_last(int a);
    int sum_all(int a);

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node the
    // loss reaches. loss must be scalar (shape [1]). Single-shot per tape:
    // a second sweep would re-propagate gradients already deposited on
    // interior nodes and double-count them, so callers with several losses
    // combine them with add() and differentiate once.
    void backward(int loss);

    const NArray& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    NArray& mutable_val(int id) { return nodes_[static_cast<std::size_t>(id)].val; }
    // Gradient of a node; lazily materialized as zeros if the last backward()
    // never reached it.
    const NArray& grad(int id);
    bool has_grad(int id) const;

    std::size_t size() const { return nodes_.size(); }
    void reset();

private:
    int push(Node n);
    NArray& grad_buf(int id);

    std::vector<Node> nodes_;
    std::vector<NArray> grads_;
    std::vector<double> scratch_;
    bool backward_done_ = false;
};

}  // namespace lewis
