#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lewis/errors.hpp"
#include "lewis/population.hpp"
#include "lewis/training.hpp"

using lewis::CapacityMode;
using lewis::ConfigError;
using lewis::ContractError;
using lewis::GameConfig;
using lewis::HeterogeneityDistribution;
using lewis::Population;
using lewis::PopulationConfig;
using lewis::Rng;
using lewis::SpeedMode;

namespace {

GameConfig tiny_game() {
    GameConfig cfg;
    cfg.K = 2;
    cfg.V = 2;
    cfg.W = 3;
    cfg.T = 2;
    return cfg;
}

PopulationConfig heterogeneous_config(int n, double eta, double sigma) {
    PopulationConfig cfg;
    cfg.n_speakers = n;
    cfg.n_listeners = n;
    cfg.speed.mode = SpeedMode::kHeterogeneous;
    cfg.speed.dist.kind = HeterogeneityDistribution::Kind::kLogNormal;
    cfg.speed.dist.eta = eta;
    cfg.speed.dist.sigma = sigma;
    cfg.capacity.h = 4;
    cfg.listener_embed = 4;
    return cfg;
}

std::string serialize_population(Population& pop) {
    std::string out;
    for (auto& s : pop.speakers) out += lewis::params_to_json(s.params()).dump();
    for (auto& l : pop.listeners) out += lewis::params_to_json(l.params()).dump();
    return out;
}

}  // namespace

TEST_CASE("degenerate log-normal gives every agent p = 1/e") {
    PopulationConfig cfg = heterogeneous_config(5, -1.0, 0.0);
    Population pop = lewis::build_population(cfg, tiny_game(), 77);
    for (const auto& s : pop.speakers) CHECK(s.update_prob == std::exp(-1.0));
    for (const auto& l : pop.listeners) CHECK(l.update_prob == std::exp(-1.0));
}

TEST_CASE("log-normal mass far above one clamps to the ceiling") {
    PopulationConfig cfg = heterogeneous_config(10, 5.0, 1.0);
    Population pop = lewis::build_population(cfg, tiny_game(), 78);
    for (const auto& s : pop.speakers) CHECK(s.update_prob == 1.0);
    for (const auto& l : pop.listeners) CHECK(l.update_prob == 1.0);
}

TEST_CASE("sampled probabilities always land inside the clamp interval") {
    HeterogeneityDistribution dist;  // log-normal(-1, 1)
    Rng rng = Rng::from_seed(79).stream("heterogeneity");
    for (int i = 0; i < 10000; ++i) {
        double p = dist.sample(rng);
        CHECK(p >= dist.clamp_min);
        CHECK(p <= dist.clamp_max);
    }
}

TEST_CASE("pre-clamp log-normal draws match the closed-form mean") {
    HeterogeneityDistribution dist;
    dist.eta = -1.0;
    dist.sigma = 1.0;
    Rng rng = Rng::from_seed(80).stream("heterogeneity");
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += dist.sample_raw(rng);
    const double expected = std::exp(-0.5);  // exp(eta + sigma^2/2)
    CHECK(std::abs(sum / n - expected) / expected < 0.02);
}

TEST_CASE("pre-clamp beta draws match the closed-form mean") {
    HeterogeneityDistribution dist;
    dist.kind = HeterogeneityDistribution::Kind::kBeta;
    dist.alpha = 1.0;
    dist.beta = 2.0;
    Rng rng = Rng::from_seed(81).stream("heterogeneity");
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += dist.sample_raw(rng);
    CHECK(std::abs(sum / n - 1.0 / 3.0) / (1.0 / 3.0) < 0.02);
}

TEST_CASE("pair sampling") {
    SUBCASE("a single pair is always (0, 0)") {
        PopulationConfig cfg;
        cfg.capacity.h = 4;
        cfg.listener_embed = 4;
        Population pop = lewis::build_population(cfg, tiny_game(), 82);
        Rng rng = Rng::from_seed(82).stream("pairing");
        for (int i = 0; i < 100; ++i) {
            auto [s, l] = lewis::sample_pair(pop, rng);
            CHECK(s == 0);
            CHECK(l == 0);
        }
    }

    SUBCASE("all pairs of a 4x4 population are uniform") {
        PopulationConfig cfg;
        cfg.n_speakers = 4;
        cfg.n_listeners = 4;
        cfg.capacity.h = 4;
        cfg.listener_embed = 4;
        Population pop = lewis::build_population(cfg, tiny_game(), 83);
        Rng rng = Rng::from_seed(83).stream("pairing");
        std::vector<long> counts(16, 0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            auto [s, l] = lewis::sample_pair(pop, rng);
            ++counts[static_cast<std::size_t>(s * 4 + l)];
        }
        for (long c : counts) CHECK(std::abs(c / static_cast<double>(n) - 1.0 / 16) < 0.005);
    }

    SUBCASE("role marginals stay uniform when the sides differ") {
        PopulationConfig cfg;
        cfg.n_speakers = 2;
        cfg.n_listeners = 3;
        cfg.capacity.h = 4;
        cfg.listener_embed = 4;
        Population pop = lewis::build_population(cfg, tiny_game(), 84);
        Rng rng = Rng::from_seed(84).stream("pairing");
        std::vector<long> s_counts(2, 0), l_counts(3, 0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            auto [s, l] = lewis::sample_pair(pop, rng);
            ++s_counts[static_cast<std::size_t>(s)];
            ++l_counts[static_cast<std::size_t>(l)];
        }
        for (long c : s_counts) CHECK(std::abs(c / static_cast<double>(n) - 0.5) < 0.01);
        for (long c : l_counts) CHECK(std::abs(c / static_cast<double>(n) - 1.0 / 3) < 0.01);
    }
}

TEST_CASE("speed and capacity ratios") {
    PopulationConfig cfg;
    cfg.capacity.h = 4;
    cfg.listener_embed = 4;

    SUBCASE("effective speed ratio follows the population shape") {
        cfg.n_speakers = 1;
        cfg.n_listeners = 4;
        CHECK(lewis::effective_speed_ratio(cfg) == 4.0);
        cfg.n_speakers = 3;
        cfg.n_listeners = 3;
        CHECK(lewis::effective_speed_ratio(cfg) == 1.0);
        cfg.n_speakers = 4;
        cfg.n_listeners = 1;
        CHECK(lewis::effective_speed_ratio(cfg) == 0.25);
    }

    SUBCASE("asymmetric update probabilities scale the effective ratio") {
        cfg.speed.mode = SpeedMode::kAsymmetric;
        cfg.speed.p_speaker = 0.2;
        cfg.speed.p_listener = 0.1;
        CHECK(lewis::effective_speed_ratio(cfg) == doctest::Approx(2.0));
        CHECK(lewis::rho_speed(cfg) == doctest::Approx(2.0));
    }

    SUBCASE("heterogeneous populations have no single ratio") {
        cfg.speed.mode = SpeedMode::kHeterogeneous;
        CHECK_THROWS_AS(lewis::effective_speed_ratio(cfg), ContractError);
        CHECK_THROWS_AS(lewis::rho_speed(cfg), ContractError);
    }

    SUBCASE("capacity ratio") {
        CHECK(lewis::rho_capacity(cfg) == 1.0);
        cfg.capacity.mode = CapacityMode::kAsymmetric;
        cfg.capacity.h_speaker = 16;
        cfg.capacity.h_listener = 8;
        CHECK(lewis::rho_capacity(cfg) == 2.0);
    }
}

TEST_CASE("configuration validation") {
    GameConfig game = tiny_game();
    PopulationConfig cfg;
    cfg.capacity.h = 4;
    cfg.listener_embed = 4;

    SUBCASE("population must be nonempty on both sides") {
        cfg.n_speakers = 0;
        CHECK_THROWS_AS(lewis::build_population(cfg, game, 1), ConfigError);
    }

    SUBCASE("speed and capacity cannot both vary") {
        cfg.speed.mode = SpeedMode::kAsymmetric;
        cfg.capacity.mode = CapacityMode::kAsymmetric;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    SUBCASE("update probabilities outside [0, 1] are rejected") {
        cfg.speed.p = 1.5;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg.speed.p = -0.2;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    SUBCASE("distribution parameters are checked") {
        cfg.speed.mode = SpeedMode::kHeterogeneous;
        cfg.speed.dist.sigma = -1.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg.speed.dist.sigma = 1.0;
        cfg.speed.dist.clamp_min = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg.speed.dist.clamp_min = 1e-3;
        cfg.speed.dist.kind = HeterogeneityDistribution::Kind::kBeta;
        cfg.speed.dist.alpha = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    SUBCASE("capacity sizes must be positive") {
        cfg.capacity.h = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("build is deterministic in the seed") {
    PopulationConfig cfg = heterogeneous_config(3, -1.0, 1.0);
    Population a = lewis::build_population(cfg, tiny_game(), 90);
    Population b = lewis::build_population(cfg, tiny_game(), 90);
    Population c = lewis::build_population(cfg, tiny_game(), 91);
    CHECK(serialize_population(a) == serialize_population(b));
    CHECK(serialize_population(a) != serialize_population(c));
    for (std::size_t i = 0; i < a.speakers.size(); ++i)
        CHECK(a.speakers[i].update_prob == b.speakers[i].update_prob);
}

TEST_CASE("asymmetric mode with equal probabilities replays homogeneous byte-for-byte") {
    GameConfig game = tiny_game();
    PopulationConfig homo;
    homo.n_speakers = 2;
    homo.n_listeners = 2;
    homo.speed.p = 0.4;
    homo.capacity.h = 4;
    homo.listener_embed = 4;
    PopulationConfig asym = homo;
    asym.speed.mode = SpeedMode::kAsymmetric;
    asym.speed.p_speaker = 0.4;
    asym.speed.p_listener = 0.4;

    auto run = [&](const PopulationConfig& cfg) {
        Population pop = lewis::build_population(cfg, game, 17);
        lewis::DatasetSplit split =
            lewis::enumerate_and_split(game, Rng::from_seed(17).stream("dataset"));
        std::vector<lewis::Adam> sopt(pop.speakers.size(), lewis::Adam{lewis::AdamConfig{}});
        std::vector<lewis::Adam> lopt(pop.listeners.size(), lewis::Adam{lewis::AdamConfig{}});
        Rng pairing = Rng::from_seed(17).stream("pairing");
        Rng batch = Rng::from_seed(17).stream("batch");
        Rng tokens = Rng::from_seed(17).stream("tokens");
        Rng gate_s = Rng::from_seed(17).stream("gate_speaker");
        Rng gate_l = Rng::from_seed(17).stream("gate_listener");
        lewis::TrainHyper hyper;
        hyper.batch_size = 4;
        for (int step = 0; step < 50; ++step) {
            auto [si, li] = lewis::sample_pair(pop, pairing);
            lewis::TrainStreams streams{&batch, &tokens, &gate_s, &gate_l};
            lewis::train_step(pop.speakers[static_cast<std::size_t>(si)],
                              sopt[static_cast<std::size_t>(si)],
                              pop.listeners[static_cast<std::size_t>(li)],
                              lopt[static_cast<std::size_t>(li)], split.train, game, hyper,
                              streams);
        }
        return serialize_population(pop);
    };
    CHECK(run(homo) == run(asym));
}

TEST_CASE("per-agent update probabilities stay frozen through training") {
    GameConfig game = tiny_game();
    PopulationConfig cfg = heterogeneous_config(3, -1.0, 1.0);
    Population pop = lewis::build_population(cfg, game, 23);
    std::vector<double> at_build;
    for (const auto& s : pop.speakers) at_build.push_back(s.update_prob);
    for (const auto& l : pop.listeners) at_build.push_back(l.update_prob);

    lewis::DatasetSplit split = lewis::enumerate_and_split(game, Rng::from_seed(23).stream("dataset"));
    std::vector<lewis::Adam> sopt(pop.speakers.size(), lewis::Adam{lewis::AdamConfig{}});
    std::vector<lewis::Adam> lopt(pop.listeners.size(), lewis::Adam{lewis::AdamConfig{}});
    Rng pairing = Rng::from_seed(23).stream("pairing");
    Rng batch = Rng::from_seed(23).stream("batch");
    Rng tokens = Rng::from_seed(23).stream("tokens");
    Rng gate_s = Rng::from_seed(23).stream("gate_speaker");
    Rng gate_l = Rng::from_seed(23).stream("gate_listener");
    lewis::TrainHyper hyper;
    hyper.batch_size = 4;
    for (int step = 0; step < 100; ++step) {
        auto [si, li] = lewis::sample_pair(pop, pairing);
        lewis::TrainStreams streams{&batch, &tokens, &gate_s, &gate_l};
        lewis::train_step(pop.speakers[static_cast<std::size_t>(si)],
                          sopt[static_cast<std::size_t>(si)],
                          pop.listeners[static_cast<std::size_t>(li)],
                          lopt[static_cast<std::size_t>(li)], split.train, game, hyper, streams);
    }
    std::vector<double> after;
    for (const auto& s : pop.speakers) after.push_back(s.update_prob);
    for (const auto& l : pop.listeners) after.push_back(l.update_prob);
    CHECK(after == at_build);
    for (std::size_t i = 0; i < pop.manifest_rows.size(); ++i)
        CHECK(pop.manifest_rows[i].p == after[i]);
}

TEST_CASE("each agent is sampled at rate 1/N under uniform pairing") {
    PopulationConfig cfg;
    cfg.n_speakers = 4;
    cfg.n_listeners = 4;
    cfg.capacity.h = 4;
    cfg.listener_embed = 4;
    Population pop = lewis::build_population(cfg, tiny_game(), 29);
    Rng pairing = Rng::from_seed(29).stream("pairing");
    std::vector<long> s_counts(4, 0), l_counts(4, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto [s, l] = lewis::sample_pair(pop, pairing);
        ++s_counts[static_cast<std::size_t>(s)];
        ++l_counts[static_cast<std::size_t>(l)];
    }
    const double expect = n / 4.0;
    for (long c : s_counts) CHECK(std::abs(c - expect) / expect < 0.05);
    for (long c : l_counts) CHECK(std::abs(c - expect) / expect < 0.05);
}

TEST_CASE("manifest records every agent") {
    PopulationConfig cfg;
    cfg.n_speakers = 2;
    cfg.n_listeners = 2;
    cfg.speed.mode = SpeedMode::kAsymmetric;
    cfg.speed.p_speaker = 0.5;
    cfg.speed.p_listener = 0.25;
    cfg.capacity.h = 6;
    cfg.listener_embed = 4;
    Population pop = lewis::build_population(cfg, tiny_game(), 31);
    nlohmann::json manifest = lewis::population_manifest(pop, 31);
    CHECK(manifest["master_seed"] == 31);
    REQUIRE(manifest["agents"].size() == 4);
    int speakers_seen = 0, listeners_seen = 0;
    for (const auto& row : manifest["agents"]) {
        REQUIRE(row.contains("role"));
        REQUIRE(row.contains("index"));
        REQUIRE(row.contains("p"));
        REQUIRE(row.contains("h"));
        REQUIRE(row.contains("seed"));
        CHECK(row["h"] == 6);
        if (row["role"] == "speaker") {
            ++speakers_seen;
            CHECK(row["p"] == 0.5);
        } else {
            ++listeners_seen;
            CHECK(row["p"] == 0.25);
        }
    }
    CHECK(speakers_seen == 2);
    CHECK(listeners_seen == 2);
    // Distinct agents get distinct init streams.
    CHECK(manifest["agents"][0]["seed"] != manifest["agents"][1]["seed"]);
}

TEST_CASE("asymmetric capacities reach the agents") {
    PopulationConfig cfg;
    cfg.capacity.mode = CapacityMode::kAsymmetric;
    cfg.capacity.h_speaker = 8;
    cfg.capacity.h_listener = 5;
    cfg.listener_embed = 4;
    Population pop = lewis::build_population(cfg, tiny_game(), 37);
    CHECK(pop.speakers[0].hidden_size == 8);
    CHECK(pop.listeners[0].hidden_size == 5);
}
