#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lewis/narray.hpp"
#include "lewis/rng.hpp"
#include "lewis/tape.hpp"

namespace lewis {

// Ordered (name, storage) views over a model's parameters. Order fixes the
// optimizer update sequence and the checkpoint layout.
using ParamRefs = std::vector<std::pair<std::string, NArray*>>;

// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero,
// layer-norm gain 1 / bias 0. Draws depend only on (rng state, shape).
NArray init_weight(Rng& rng, std::vector<int> shape, int fan_in);

struct Linear {
    NArray w;  // [out, in]
    NArray b;  // [out]

    Linear() = default;
    Linear(int in, int out, Rng& rng);

    int in_dim() const { return w.dim(1); }
    int out_dim() const { return w.dim(0); }
    void collect(ParamRefs& out, const std::string& prefix);

    struct Bound {
        int w = -1;
        int b = -1;
    };
    Bound bind(Tape& t, std::vector<int>& flat) const;
    // x [B, in] -> [B, out]
    static int apply(Tape& t, const Bound& p, int x);
};

struct Embedding {
    NArray table;  // [vocab, dim]

    Embedding() = default;
    Embedding(int vocab, int dim, Rng& rng);

    int vocab() const { return table.dim(0); }
    int dim() const { return table.dim(1); }
    void collect(ParamRefs& out, const std::string& prefix);

    struct Bound {
        int table = -1;
    };
    Bound bind(Tape& t, std::vector<int>& flat) const;
    // ids, one per row -> [ids.size(), dim]
    static int apply(Tape& t, const Bound& p, const std::vector<std::int32_t>& ids);
};

// Single LSTM cell with layer normalization on each of the four gate
// pre-activations (input, forget, cell, output), applied before the
// nonlinearity; the cell state itself is not normalized.
struct LstmCell {
    static constexpr int kGates = 4;  // order: input, forget, cell, output

    NArray w_x[kGates];      // [h, in]
    NArray w_h[kGates];      // [h, h]
    NArray b[kGates];        // [h]
    NArray ln_gain[kGates];  // [h]
    NArray ln_bias[kGates];  // [h]

    LstmCell() = default;
    LstmCell(int in, int hidden, Rng& rng);

    int in_dim() const { return w_x[0].dim(1); }
    int hidden_dim() const { return w_x[0].dim(0); }
    void collect(ParamRefs& out, const std::string& prefix);

    struct Bound {
        int w_x[kGates];
        int w_h[kGates];
        int b[kGates];
        int ln_gain[kGates];
        int ln_bias[kGates];
    };
    Bound bind(Tape& t, std::vector<int>& flat) const;

    struct State {
        int h = -1;
        int c = -1;
    };
    // x [B, in], state [B, h] each -> next state.
    static State step(Tape& t, const Bound& p, int x, const State& prev);
    // All-zero initial state for a batch of the given size.
    static State initial_state(Tape& t, int batch, int hidden);
};

struct AdamConfig {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers are created on the first step and keyed
// by position, so the parameter list must be identical (order and shapes)
// across calls. No weight decay, no gradient clipping.
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // grads[i] pairs with params[i]. A non-finite gradient aborts with the
    // parameter's name in the diagnostic.
    void step(const ParamRefs& params, const std::vector<const NArray*>& grads);

    std::int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    nlohmann::json to_json() const;
    static Adam from_json(const nlohmann::json& j);

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<NArray> m_;
    std::vector<NArray> v_;
};

// Flat named-parameter checkpoint blob; order follows the ParamRefs order.
nlohmann::json params_to_json(const ParamRefs& params);
// Shapes and names must match the checkpoint exactly.
void params_from_json(const nlohmann::json& j, const ParamRefs& params);

}  // namespace lewis
