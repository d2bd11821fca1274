#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

namespace lewis {

// Counter-based generator: output i is a strong 64-bit mix of (key, i).
// Streams are derived, not split: child keys hash the parent key with a label
// and optional index, so adding an agent or an axis value never shifts the
// draws of an unrelated stream. State is two u64s, trivially serializable.
class Rng {
public:
    Rng() = default;
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    static Rng from_seed(std::uint64_t seed) { return Rng(mix64(seed + kGolden), 0); }

    Rng stream(std::string_view label) const {
        return Rng(mix64(key_ ^ mix64(hash_label(label))), 0);
    }
    Rng stream(std::string_view label, std::uint64_t index) const {
        return Rng(mix64((key_ ^ mix64(hash_label(label))) + (index + 1) * kGolden), 0);
    }

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

    // [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller, cosine branch only: two uniforms per draw, no cached state.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double log_normal(double log_mean, double log_std) {
        return std::exp(log_mean + log_std * normal());
    }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 boosted through the
    // Gamma(shape+1) identity. Used for Beta sampling.
    double gamma(double shape) {
        if (shape < 1.0) {
            double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double vol = t * t * t;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * vol;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - vol + std::log(vol))) return d * vol;
        }
    }

    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        return x / (x + y);
    }

    // Uniform in [0, n). Modulo bias is < 2^-40 for any n used here.
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    bool bernoulli(double p) { return uniform() < p; }

    // One draw, CDF walk. probs must be nonnegative and sum to ~1.
    int categorical(std::span<const double> probs) {
        double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix64(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    static std::uint64_t hash_label(std::string_view label) {
        std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace lewis
