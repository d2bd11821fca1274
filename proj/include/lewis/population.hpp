#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lewis/agents.hpp"

namespace lewis {

// Update-probability sweep values shared by the speed experiments.
inline constexpr double kUpdateProbSet[] = {0.01, 0.02, 0.04, 0.1, 0.2, 0.5, 1.0};
// Hidden-size sweep values shared by the capacity experiments.
inline constexpr int kCapacitySet[] = {64, 128, 256, 512, 1024};

// Law for per-agent update probabilities, drawn once when the population is
// built and clamped into [clamp_min, clamp_max].
struct HeterogeneityDistribution {
    enum class Kind { kLogNormal, kBeta, kDegenerate };
    Kind kind = Kind::kLogNormal;
    double eta = -1.0;   // log-normal location
    double sigma = 1.0;  // log-normal scale
    double alpha = 1.0;  // beta shape a
    double beta = 2.0;   // beta shape b
    double value = std::exp(-1.0);  // degenerate point mass
    double clamp_min = 1e-3;
    double clamp_max = 1.0;

    void validate() const;
    double sample_raw(Rng& rng) const;  // before clamping
    double sample(Rng& rng) const;
};

enum class SpeedMode { kHomogeneous, kAsymmetric, kHeterogeneous };
enum class CapacityMode { kHomogeneous, kAsymmetric };

struct SpeedSpec {
    SpeedMode mode = SpeedMode::kHomogeneous;
    double p = 1.0;           // homogeneous
    double p_speaker = 1.0;   // asymmetric
    double p_listener = 1.0;  // asymmetric
    HeterogeneityDistribution dist;  // heterogeneous
};

struct CapacitySpec {
    CapacityMode mode = CapacityMode::kHomogeneous;
    int h = 128;           // homogeneous
    int h_speaker = 128;   // asymmetric
    int h_listener = 128;  // asymmetric
};

struct PopulationConfig {
    int n_speakers = 1;
    int n_listeners = 1;
    SpeedSpec speed;
    CapacitySpec capacity;
    int listener_embed = 128;

    // Speed and capacity are never both non-homogeneous.
    void validate() const;
};

struct AgentRecord {
    std::string role;  // "speaker" or "listener"
    int index = 0;
    double p = 1.0;
    int h = 0;
    std::uint64_t seed = 0;  // derived init-stream key
};

struct Population {
    std::vector<SpeakerAgent> speakers;
    std::vector<ListenerAgent> listeners;
    std::vector<AgentRecord> manifest_rows;  // speakers first, then listeners
};

// Instantiates every agent from per-agent init streams derived from `seed`.
// Heterogeneous update probabilities are drawn once here, speakers first.
Population build_population(const PopulationConfig& cfg, const GameConfig& game,
                            std::uint64_t seed);

// Independent uniform draws over speakers and over listeners, in that order.
std::pair<int, int> sample_pair(const Population& pop, Rng& rng);

// (p^S * n_listeners) / (p^L * n_speakers): the implied ratio of per-agent
// update rates under uniform pairing. Contract error for heterogeneous mode.
double effective_speed_ratio(const PopulationConfig& cfg);

// p^S / p^L. Contract error for heterogeneous mode or a zero denominator.
double rho_speed(const PopulationConfig& cfg);

// h^S / h^L.
double rho_capacity(const PopulationConfig& cfg);

// Per-agent role, index, p, h, seed — persisted alongside run results.
nlohmann::json population_manifest(const Population& pop, std::uint64_t master_seed);

}  // namespace lewis
