#include "lewis/nn.hpp"

#include <cmath>

#include "lewis/errors.hpp"

namespace lewis {

NArray init_weight(Rng& rng, std::vector<int> shape, int fan_in) {
    NArray out(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : out.v) x = bound * (2.0 * rng.uniform() - 1.0);
    return out;
}

Linear::Linear(int in, int out, Rng& rng) : w(init_weight(rng, {out, in}, in)), b(NArray({out})) {}

void Linear::collect(ParamRefs& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
}

Linear::Bound Linear::bind(Tape& t, std::vector<int>& flat) const {
    Bound p{t.leaf(w), t.leaf(b)};
    flat.push_back(p.w);
    flat.push_back(p.b);
    return p;
}

int Linear::apply(Tape& t, const Bound& p, int x) {
    return t.add(t.matmul(x, p.w, false, true), p.b);
}

Embedding::Embedding(int vocab, int dim, Rng& rng) : table(init_weight(rng, {vocab, dim}, dim)) {}

void Embedding::collect(ParamRefs& out, const std::string& prefix) {
    out.emplace_back(prefix + ".table", &table);
}

Embedding::Bound Embedding::bind(Tape& t, std::vector<int>& flat) const {
    Bound p{t.leaf(table)};
    flat.push_back(p.table);
    return p;
}

int Embedding::apply(Tape& t, const Bound& p, const std::vector<std::int32_t>& ids) {
    return t.lookup_rows(p.table, ids);
}

namespace {
constexpr const char* kGateNames[LstmCell::kGates] = {"i", "f", "g", "o"};
}

LstmCell::LstmCell(int in, int hidden, Rng& rng) {
    for (int g = 0; g < kGates; ++g) w_x[g] = init_weight(rng, {hidden, in}, in);
    for (int g = 0; g < kGates; ++g) w_h[g] = init_weight(rng, {hidden, hidden}, hidden);
    for (int g = 0; g < kGates; ++g) b[g] = NArray({hidden});
    for (int g = 0; g < kGates; ++g) {
        ln_gain[g] = NArray({hidden});
        ln_gain[g].fill(1.0);
        ln_bias[g] = NArray({hidden});
    }
}

void LstmCell::collect(ParamRefs& out, const std::string& prefix) {
    for (int g = 0; g < kGates; ++g) out.emplace_back(prefix + ".w_x_" + kGateNames[g], &w_x[g]);
    for (int g = 0; g < kGates; ++g) out.emplace_back(prefix + ".w_h_" + kGateNames[g], &w_h[g]);
    for (int g = 0; g < kGates; ++g) out.emplace_back(prefix + ".b_" + kGateNames[g], &b[g]);
    for (int g = 0; g < kGates; ++g) out.emplace_back(prefix + ".ln_gain_" + kGateNames[g], &ln_gain[g]);
    for (int g = 0; g < kGates; ++g) out.emplace_back(prefix + ".ln_bias_" + kGateNames[g], &ln_bias[g]);
}

LstmCell::Bound LstmCell::bind(Tape& t, std::vector<int>& flat) const {
    Bound p;
    for (int g = 0; g < kGates; ++g) flat.push_back(p.w_x[g] = t.leaf(w_x[g]));
    for (int g = 0; g < kGates; ++g) flat.push_back(p.w_h[g] = t.leaf(w_h[g]));
    for (int g = 0; g < kGates; ++g) flat.push_back(p.b[g] = t.leaf(b[g]));
    for (int g = 0; g < kGates; ++g) flat.push_back(p.ln_gain[g] = t.leaf(ln_gain[g]));
    for (int g = 0; g < kGates; ++g) flat.push_back(p.ln_bias[g] = t.leaf(ln_bias[g]));
    return p;
}

LstmCell::State LstmCell::step(Tape& t, const Bound& p, int x, const State& prev) {
    int act[kGates];
    for (int g = 0; g < kGates; ++g) {
        const int pre = t.add(t.add(t.matmul(x, p.w_x[g], false, true),
                                    t.matmul(prev.h, p.w_h[g], false, true)),
                              p.b[g]);
        const int normed = t.add(t.mul(t.layer_norm_last(pre), p.ln_gain[g]), p.ln_bias[g]);
        act[g] = (g == 2) ? t.tanh(normed) : t.sigmoid(normed);
    }
    State next;
    next.c = t.add(t.mul(act[1], prev.c), t.mul(act[0], act[2]));
    next.h = t.mul(act[3], t.tanh(next.c));
    return next;
}

LstmCell::State LstmCell::initial_state(Tape& t, int batch, int hidden) {
    State s;
    s.h = t.leaf(NArray({batch, hidden}));
    s.c = t.leaf(NArray({batch, hidden}));
    return s;
}

void Adam::step(const ParamRefs& params, const std::vector<const NArray*>& grads) {
    if (params.size() != grads.size()) throw ContractError("adam: params/grads length mismatch");
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& [name, p] : params) {
            m_.push_back(NArray::zeros_like(*p));
            v_.push_back(NArray::zeros_like(*p));
        }
    }
    if (m_.size() != params.size()) throw ContractError("adam: parameter list changed size");

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        NArray& p = *params[i].second;
        const NArray& g = *grads[i];
        if (!same_shape(p, g))
            throw ContractError("adam: grad shape mismatch for " + params[i].first);
        NArray& m = m_[i];
        NArray& v = v_[i];
        for (std::size_t e = 0; e < p.size(); ++e) {
            const double ge = g.v[e];
            if (!std::isfinite(ge))
                throw NumericError("adam: non-finite gradient in " + params[i].first);
            m.v[e] = cfg_.beta1 * m.v[e] + (1.0 - cfg_.beta1) * ge;
            v.v[e] = cfg_.beta2 * v.v[e] + (1.0 - cfg_.beta2) * ge * ge;
            const double mhat = m.v[e] / bc1;
            const double vhat = v.v[e] / bc2;
            p.v[e] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

nlohmann::json Adam::to_json() const {
    nlohmann::json j;
    j["lr"] = cfg_.lr;
    j["beta1"] = cfg_.beta1;
    j["beta2"] = cfg_.beta2;
    j["eps"] = cfg_.eps;
    j["t"] = t_;
    auto dump = [](const std::vector<NArray>& buf) {
        nlohmann::json arr = nlohmann::json::array();
        for (const NArray& a : buf) arr.push_back(nlohmann::json{{"shape", a.shape}, {"values", a.v}});
        return arr;
    };
    j["m"] = dump(m_);
    j["v"] = dump(v_);
    return j;
}

Adam Adam::from_json(const nlohmann::json& j) {
    AdamConfig cfg;
    cfg.lr = j.at("lr").get<double>();
    cfg.beta1 = j.at("beta1").get<double>();
    cfg.beta2 = j.at("beta2").get<double>();
    cfg.eps = j.at("eps").get<double>();
    Adam out(cfg);
    out.t_ = j.at("t").get<std::int64_t>();
    auto load = [](const nlohmann::json& arr) {
        std::vector<NArray> buf;
        buf.reserve(arr.size());
        for (const auto& e : arr)
            buf.emplace_back(e.at("shape").get<std::vector<int>>(),
                             e.at("values").get<std::vector<double>>());
        return buf;
    };
    out.m_ = load(j.at("m"));
    out.v_ = load(j.at("v"));
    return out;
}

nlohmann::json params_to_json(const ParamRefs& params) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [name, p] : params)
        arr.push_back(nlohmann::json{{"name", name}, {"shape", p->shape}, {"values", p->v}});
    return arr;
}

void params_from_json(const nlohmann::json& j, const ParamRefs& params) {
    if (j.size() != params.size()) throw ConfigError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = j[i];
        if (e.at("name").get<std::string>() != params[i].first)
            throw ConfigError("checkpoint: parameter name mismatch at index " + std::to_string(i));
        auto shape = e.at("shape").get<std::vector<int>>();
        if (shape != params[i].second->shape)
            throw ConfigError("checkpoint: shape mismatch for " + params[i].first);
        params[i].second->v = e.at("values").get<std::vector<double>>();
        if (params[i].second->v.size() != NArray::checked_numel(shape))
            throw ConfigError("checkpoint: value count mismatch for " + params[i].first);
    }
}

}  // namespace lewis
