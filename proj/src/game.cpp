#include "lewis/game.hpp"

#include <cmath>
#include <ostream>
#include <utility>

#include "lewis/errors.hpp"

namespace lewis {

void GameConfig::validate() const {
    if (K < 1) throw ConfigError("game: K must be >= 1");
    if (V < 2) throw ConfigError("game: V must be >= 2");
    if (W < 2) throw ConfigError("game: W must be >= 2");
    if (T < 1) throw ConfigError("game: T must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ConfigError("game: split_fraction must lie in (0, 1)");
}

std::int64_t GameConfig::space_size() const {
    std::int64_t n = 1;
    for (int k = 0; k < K; ++k) {
        n *= V;
        if (n > enumeration_cap)
            throw ConfigError("game: V^K exceeds the enumeration cap; use a sampled dataset instead");
    }
    return n;
}

bool is_valid_object(const ObjectInstance& v, const GameConfig& cfg) {
    if (static_cast<int>(v.size()) != cfg.K) return false;
    for (int x : v)
        if (x < 0 || x >= cfg.V) return false;
    return true;
}

bool is_valid_message(const Message& m, const GameConfig& cfg) {
    if (static_cast<int>(m.tokens.size()) != cfg.T + 1) return false;
    for (int t = 0; t < cfg.T; ++t)
        if (m.tokens[static_cast<std::size_t>(t)] < 0 ||
            m.tokens[static_cast<std::size_t>(t)] >= cfg.W)
            return false;
    return m.tokens.back() == cfg.eos_token();
}

DatasetSplit enumerate_and_split(const GameConfig& cfg, Rng rng) {
    cfg.validate();
    const std::int64_t total = cfg.space_size();
    std::vector<ObjectInstance> all;
    all.reserve(static_cast<std::size_t>(total));
    ObjectInstance cur(static_cast<std::size_t>(cfg.K), 0);
    for (std::int64_t i = 0; i < total; ++i) {
        all.push_back(cur);
        for (int k = cfg.K - 1; k >= 0; --k) {
            if (++cur[static_cast<std::size_t>(k)] < cfg.V) break;
            cur[static_cast<std::size_t>(k)] = 0;
        }
    }
    for (std::size_t i = all.size() - 1; i > 0; --i)
        std::swap(all[i], all[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i) + 1))]);

    const auto n_train =
        static_cast<std::size_t>(std::llround(cfg.split_fraction * static_cast<double>(total)));
    DatasetSplit split;
    split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    return split;
}

NArray one_hot(const ObjectInstance& v, const GameConfig& cfg) {
    if (!is_valid_object(v, cfg)) throw ConfigError("one_hot: invalid object");
    NArray out({cfg.object_dim()});
    for (int k = 0; k < cfg.K; ++k)
        out.v[static_cast<std::size_t>(k * cfg.V + v[static_cast<std::size_t>(k)])] = 1.0;
    return out;
}

NArray one_hot_rows(const std::vector<ObjectInstance>& objs, const GameConfig& cfg) {
    NArray out({static_cast<int>(objs.size()), cfg.object_dim()});
    const std::size_t d = static_cast<std::size_t>(cfg.object_dim());
    for (std::size_t r = 0; r < objs.size(); ++r) {
        if (!is_valid_object(objs[r], cfg)) throw ConfigError("one_hot: invalid object");
        for (int k = 0; k < cfg.K; ++k)
            out.v[r * d + static_cast<std::size_t>(k * cfg.V + objs[r][static_cast<std::size_t>(k)])] = 1.0;
    }
    return out;
}

ObjectInstance decode_one_hot(const NArray& row, const GameConfig& cfg) {
    if (row.size() != static_cast<std::size_t>(cfg.object_dim()))
        throw ConfigError("decode: wrong encoding length");
    ObjectInstance v(static_cast<std::size_t>(cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        int best = 0;
        const double* block = row.data() + static_cast<std::size_t>(k * cfg.V);
        for (int j = 1; j < cfg.V; ++j)
            if (block[j] > block[best]) best = j;
        v[static_cast<std::size_t>(k)] = best;
    }
    return v;
}

void dump_dataset_csv(const DatasetSplit& split, const GameConfig& cfg, std::ostream& out) {
    for (int k = 0; k < cfg.K; ++k) out << "a" << k << ",";
    out << "split\n";
    auto rows = [&](const std::vector<ObjectInstance>& objs, const char* tag) {
        for (const ObjectInstance& v : objs) {
            for (int x : v) out << x << ",";
            out << tag << "\n";
        }
    };
    rows(split.train, "train");
    rows(split.test, "test");
}

}  // namespace lewis
