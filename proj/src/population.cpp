#include "lewis/population.hpp"

#include <algorithm>

#include "lewis/errors.hpp"

namespace lewis {

void HeterogeneityDistribution::validate() const {
    if (!(clamp_min > 0.0) || !(clamp_max <= 1.0) || !(clamp_min <= clamp_max))
        throw ConfigError("heterogeneity: clamp bounds must satisfy 0 < min <= max <= 1");
    switch (kind) {
        case Kind::kLogNormal:
            if (!(sigma >= 0.0)) throw ConfigError("heterogeneity: log-normal sigma must be >= 0");
            break;
        case Kind::kBeta:
            if (!(alpha > 0.0) || !(beta > 0.0))
                throw ConfigError("heterogeneity: beta shapes must be positive");
            break;
        case Kind::kDegenerate:
            if (!(value > 0.0)) throw ConfigError("heterogeneity: degenerate value must be positive");
            break;
    }
}

double HeterogeneityDistribution::sample_raw(Rng& rng) const {
    switch (kind) {
        case Kind::kLogNormal:
            return rng.log_normal(eta, sigma);
        case Kind::kBeta:
            return rng.beta(alpha, beta);
        case Kind::kDegenerate:
            return value;
    }
    throw ContractError("heterogeneity: unknown kind");
}

double HeterogeneityDistribution::sample(Rng& rng) const {
    return std::clamp(sample_raw(rng), clamp_min, clamp_max);
}

void PopulationConfig::validate() const {
    if (n_speakers < 1 || n_listeners < 1)
        throw ConfigError("population: need at least one speaker and one listener");
    if (listener_embed < 1) throw ConfigError("population: listener embedding dim must be >= 1");
    const bool speed_varied = speed.mode != SpeedMode::kHomogeneous;
    const bool capacity_varied = capacity.mode != CapacityMode::kHomogeneous;
    if (speed_varied && capacity_varied)
        throw ConfigError("population: speed and capacity cannot both be non-homogeneous");
    auto check_p = [](double p, const char* what) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("population: ") + what +
                                                       " must lie in [0, 1]");
    };
    switch (speed.mode) {
        case SpeedMode::kHomogeneous:
            check_p(speed.p, "update probability");
            break;
        case SpeedMode::kAsymmetric:
            check_p(speed.p_speaker, "speaker update probability");
            check_p(speed.p_listener, "listener update probability");
            break;
        case SpeedMode::kHeterogeneous:
            speed.dist.validate();
            break;
    }
    auto check_h = [](int h, const char* what) {
        if (h < 1) throw ConfigError(std::string("population: ") + what + " must be >= 1");
    };
    if (capacity.mode == CapacityMode::kHomogeneous) {
        check_h(capacity.h, "hidden size");
    } else {
        check_h(capacity.h_speaker, "speaker hidden size");
        check_h(capacity.h_listener, "listener hidden size");
    }
}

Population build_population(const PopulationConfig& cfg, const GameConfig& game,
                            std::uint64_t seed) {
    cfg.validate();
    game.validate();
    Rng master = Rng::from_seed(seed);

    std::vector<double> p_speakers(static_cast<std::size_t>(cfg.n_speakers));
    std::vector<double> p_listeners(static_cast<std::size_t>(cfg.n_listeners));
    switch (cfg.speed.mode) {
        case SpeedMode::kHomogeneous:
            std::fill(p_speakers.begin(), p_speakers.end(), cfg.speed.p);
            std::fill(p_listeners.begin(), p_listeners.end(), cfg.speed.p);
            break;
        case SpeedMode::kAsymmetric:
            std::fill(p_speakers.begin(), p_speakers.end(), cfg.speed.p_speaker);
            std::fill(p_listeners.begin(), p_listeners.end(), cfg.speed.p_listener);
            break;
        case SpeedMode::kHeterogeneous: {
            Rng het = master.stream("heterogeneity");
            for (double& p : p_speakers) p = cfg.speed.dist.sample(het);
            for (double& p : p_listeners) p = cfg.speed.dist.sample(het);
            break;
        }
    }

    const int h_speaker =
        cfg.capacity.mode == CapacityMode::kHomogeneous ? cfg.capacity.h : cfg.capacity.h_speaker;
    const int h_listener =
        cfg.capacity.mode == CapacityMode::kHomogeneous ? cfg.capacity.h : cfg.capacity.h_listener;

    Population pop;
    for (int i = 0; i < cfg.n_speakers; ++i) {
        Rng init = master.stream("speaker_init", static_cast<std::uint64_t>(i));
        const double p = p_speakers[static_cast<std::size_t>(i)];
        pop.speakers.emplace_back(game, h_speaker, p, init);
        pop.manifest_rows.push_back({"speaker", i, p, h_speaker, init.key()});
    }
    for (int i = 0; i < cfg.n_listeners; ++i) {
        Rng init = master.stream("listener_init", static_cast<std::uint64_t>(i));
        const double p = p_listeners[static_cast<std::size_t>(i)];
        pop.listeners.emplace_back(game, h_listener, cfg.listener_embed, p, init);
        pop.manifest_rows.push_back({"listener", i, p, h_listener, init.key()});
    }
    return pop;
}

std::pair<int, int> sample_pair(const Population& pop, Rng& rng) {
    if (pop.speakers.empty() || pop.listeners.empty())
        throw ContractError("sample_pair: population not built");
    const int s = static_cast<int>(rng.uniform_int(pop.speakers.size()));
    const int l = static_cast<int>(rng.uniform_int(pop.listeners.size()));
    return {s, l};
}

namespace {

std::pair<double, double> role_probs(const PopulationConfig& cfg, const char* caller) {
    switch (cfg.speed.mode) {
        case SpeedMode::kHomogeneous:
            return {cfg.speed.p, cfg.speed.p};
        case SpeedMode::kAsymmetric:
            return {cfg.speed.p_speaker, cfg.speed.p_listener};
        case SpeedMode::kHeterogeneous:
            throw ContractError(std::string(caller) + ": undefined for heterogeneous populations");
    }
    throw ContractError("population: unknown speed mode");
}

}  // namespace

double effective_speed_ratio(const PopulationConfig& cfg) {
    cfg.validate();
    auto [ps, pl] = role_probs(cfg, "effective_speed_ratio");
    if (pl == 0.0 || cfg.n_speakers == 0)
        throw ContractError("effective_speed_ratio: zero denominator");
    return (ps * cfg.n_listeners) / (pl * cfg.n_speakers);
}

double rho_speed(const PopulationConfig& cfg) {
    cfg.validate();
    auto [ps, pl] = role_probs(cfg, "rho_speed");
    if (pl == 0.0) throw ContractError("rho_speed: zero listener update probability");
    return ps / pl;
}

double rho_capacity(const PopulationConfig& cfg) {
    cfg.validate();
    const double hs =
        cfg.capacity.mode == CapacityMode::kHomogeneous ? cfg.capacity.h : cfg.capacity.h_speaker;
    const double hl =
        cfg.capacity.mode == CapacityMode::kHomogeneous ? cfg.capacity.h : cfg.capacity.h_listener;
    return hs / hl;
}

nlohmann::json population_manifest(const Population& pop, std::uint64_t master_seed) {
    nlohmann::json agents = nlohmann::json::array();
    for (const AgentRecord& row : pop.manifest_rows) {
        agents.push_back({{"role", row.role},
                          {"index", row.index},
                          {"p", row.p},
                          {"h", row.h},
                          {"seed", row.seed}});
    }
    return {{"master_seed", master_seed}, {"agents", agents}};
}

}  // namespace lewis
