#include "lewis/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "lewis/errors.hpp"

namespace lewis {

namespace fs = std::filesystem;

namespace {

void check_keys(const nlohmann::json& j, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(std::string(where) + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

std::string fmt_opt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

constexpr const char* kMetricNames[] = {"sync", "neg_entropy", "topsim", "generalization",
                                        "train_accuracy"};

std::optional<double> metric_value(const MetricsReport& r, std::string_view name) {
    if (name == "sync") return r.sync;
    if (name == "neg_entropy") return r.neg_entropy;
    if (name == "topsim") return r.topsim;
    if (name == "generalization") return r.generalization;
    if (name == "train_accuracy") return r.train_accuracy;
    throw ContractError("unknown metric name");
}

std::optional<double> stability_value(const StabilityReport& s, std::string_view name) {
    if (name == "sync") return s.sync;
    if (name == "neg_entropy") return s.neg_entropy;
    if (name == "topsim") return s.topsim;
    if (name == "generalization") return s.generalization;
    if (name == "train_accuracy") return s.train_accuracy;
    throw ContractError("unknown metric name");
}

std::optional<double> mean_of_present(const std::vector<MetricsReport>& reports,
                                      std::string_view name) {
    double total = 0.0;
    int n = 0;
    for (const MetricsReport& r : reports) {
        if (const auto v = metric_value(r, name)) {
            total += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

// Per-seed rows followed by cross-seed mean and sample-std rows; absent
// values stay empty.
std::string metrics_table_csv(const std::vector<std::string>& labels,
                              const std::vector<MetricsReport>& reports) {
    std::ostringstream out;
    out << "seed";
    for (const char* m : kMetricNames) out << ',' << m;
    out << '\n';
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << labels[i];
        for (const char* m : kMetricNames) out << ',' << fmt_opt(metric_value(reports[i], m));
        out << '\n';
    }
    out << "mean";
    for (const char* m : kMetricNames) out << ',' << fmt_opt(mean_of_present(reports, m));
    out << '\n';
    out << "std";
    if (reports.size() >= 2) {
        const StabilityReport s = stability(reports);
        for (const char* m : kMetricNames) out << ',' << fmt_opt(stability_value(s, m));
    } else {
        for (std::size_t i = 0; i < std::size(kMetricNames); ++i) out << ',';
    }
    out << '\n';
    return out.str();
}

std::string sanitize_csv(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n') c = ';';
    return s;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

nlohmann::json rng_state(const Rng& rng) {
    return {{"key", rng.key()}, {"counter", rng.counter()}};
}

Rng rng_from_state(const nlohmann::json& j) {
    return Rng(j.at("key").get<std::uint64_t>(), j.at("counter").get<std::uint64_t>());
}

}  // namespace

void to_json(nlohmann::json& j, const GameConfig& c) {
    j = {{"K", c.K},
         {"V", c.V},
         {"W", c.W},
         {"T", c.T},
         {"split_fraction", c.split_fraction},
         {"enumeration_cap", c.enumeration_cap}};
}

void from_json(const nlohmann::json& j, GameConfig& c) {
    check_keys(j, "game", {"K", "V", "W", "T", "split_fraction", "enumeration_cap"});
    read_field(j, "K", c.K);
    read_field(j, "V", c.V);
    read_field(j, "W", c.W);
    read_field(j, "T", c.T);
    read_field(j, "split_fraction", c.split_fraction);
    read_field(j, "enumeration_cap", c.enumeration_cap);
}

void to_json(nlohmann::json& j, const TrainHyper& c) {
    j = {{"entropy_coefficient", c.entropy_coefficient}, {"batch_size", c.batch_size}};
}

void from_json(const nlohmann::json& j, TrainHyper& c) {
    check_keys(j, "hyper", {"entropy_coefficient", "batch_size"});
    read_field(j, "entropy_coefficient", c.entropy_coefficient);
    read_field(j, "batch_size", c.batch_size);
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
    j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
    check_keys(j, "adam", {"lr", "beta1", "beta2", "eps"});
    read_field(j, "lr", c.lr);
    read_field(j, "beta1", c.beta1);
    read_field(j, "beta2", c.beta2);
    read_field(j, "eps", c.eps);
}

namespace {

std::string kind_name(HeterogeneityDistribution::Kind k) {
    switch (k) {
        case HeterogeneityDistribution::Kind::kLogNormal: return "log_normal";
        case HeterogeneityDistribution::Kind::kBeta: return "beta";
        case HeterogeneityDistribution::Kind::kDegenerate: return "degenerate";
    }
    throw ContractError("unknown distribution kind");
}

HeterogeneityDistribution::Kind kind_from_name(const std::string& s) {
    if (s == "log_normal") return HeterogeneityDistribution::Kind::kLogNormal;
    if (s == "beta") return HeterogeneityDistribution::Kind::kBeta;
    if (s == "degenerate") return HeterogeneityDistribution::Kind::kDegenerate;
    throw ConfigError("dist.kind: unknown value \"" + s + "\"");
}

std::string speed_mode_name(SpeedMode m) {
    switch (m) {
        case SpeedMode::kHomogeneous: return "homogeneous";
        case SpeedMode::kAsymmetric: return "asymmetric";
        case SpeedMode::kHeterogeneous: return "heterogeneous";
    }
    throw ContractError("unknown speed mode");
}

SpeedMode speed_mode_from_name(const std::string& s) {
    if (s == "homogeneous") return SpeedMode::kHomogeneous;
    if (s == "asymmetric") return SpeedMode::kAsymmetric;
    if (s == "heterogeneous") return SpeedMode::kHeterogeneous;
    throw ConfigError("speed.mode: unknown value \"" + s + "\"");
}

std::string capacity_mode_name(CapacityMode m) {
    switch (m) {
        case CapacityMode::kHomogeneous: return "homogeneous";
        case CapacityMode::kAsymmetric: return "asymmetric";
    }
    throw ContractError("unknown capacity mode");
}

CapacityMode capacity_mode_from_name(const std::string& s) {
    if (s == "homogeneous") return CapacityMode::kHomogeneous;
    if (s == "asymmetric") return CapacityMode::kAsymmetric;
    throw ConfigError("capacity.mode: unknown value \"" + s + "\"");
}

}  // namespace

void to_json(nlohmann::json& j, const HeterogeneityDistribution& c) {
    j = {{"kind", kind_name(c.kind)}, {"eta", c.eta},
         {"sigma", c.sigma},          {"alpha", c.alpha},
         {"beta", c.beta},            {"value", c.value},
         {"clamp_min", c.clamp_min},  {"clamp_max", c.clamp_max}};
}

void from_json(const nlohmann::json& j, HeterogeneityDistribution& c) {
    check_keys(j, "dist",
               {"kind", "eta", "sigma", "alpha", "beta", "value", "clamp_min", "clamp_max"});
    if (j.contains("kind")) c.kind = kind_from_name(j.at("kind").get<std::string>());
    read_field(j, "eta", c.eta);
    read_field(j, "sigma", c.sigma);
    read_field(j, "alpha", c.alpha);
    read_field(j, "beta", c.beta);
    read_field(j, "value", c.value);
    read_field(j, "clamp_min", c.clamp_min);
    read_field(j, "clamp_max", c.clamp_max);
}

void to_json(nlohmann::json& j, const SpeedSpec& c) {
    j = {{"mode", speed_mode_name(c.mode)},
         {"p", c.p},
         {"p_speaker", c.p_speaker},
         {"p_listener", c.p_listener},
         {"dist", c.dist}};
}

void from_json(const nlohmann::json& j, SpeedSpec& c) {
    check_keys(j, "speed", {"mode", "p", "p_speaker", "p_listener", "dist"});
    if (j.contains("mode")) c.mode = speed_mode_from_name(j.at("mode").get<std::string>());
    read_field(j, "p", c.p);
    read_field(j, "p_speaker", c.p_speaker);
    read_field(j, "p_listener", c.p_listener);
    if (j.contains("dist")) from_json(j.at("dist"), c.dist);
}

void to_json(nlohmann::json& j, const CapacitySpec& c) {
    j = {{"mode", capacity_mode_name(c.mode)},
         {"h", c.h},
         {"h_speaker", c.h_speaker},
         {"h_listener", c.h_listener}};
}

void from_json(const nlohmann::json& j, CapacitySpec& c) {
    check_keys(j, "capacity", {"mode", "h", "h_speaker", "h_listener"});
    if (j.contains("mode")) c.mode = capacity_mode_from_name(j.at("mode").get<std::string>());
    read_field(j, "h", c.h);
    read_field(j, "h_speaker", c.h_speaker);
    read_field(j, "h_listener", c.h_listener);
}

void to_json(nlohmann::json& j, const PopulationConfig& c) {
    j = {{"n_speakers", c.n_speakers},
         {"n_listeners", c.n_listeners},
         {"speed", c.speed},
         {"capacity", c.capacity},
         {"listener_embed", c.listener_embed}};
}

void from_json(const nlohmann::json& j, PopulationConfig& c) {
    check_keys(j, "population",
               {"n_speakers", "n_listeners", "speed", "capacity", "listener_embed"});
    read_field(j, "n_speakers", c.n_speakers);
    read_field(j, "n_listeners", c.n_listeners);
    if (j.contains("speed")) from_json(j.at("speed"), c.speed);
    if (j.contains("capacity")) from_json(j.at("capacity"), c.capacity);
    read_field(j, "listener_embed", c.listener_embed);
}

void ExperimentConfig::validate() const {
    game.validate();
    population.validate();
    if (hyper.batch_size < 2) throw ConfigError("hyper.batch_size must be >= 2");
    if (!(hyper.entropy_coefficient >= 0.0))
        throw ConfigError("hyper.entropy_coefficient must be >= 0");
    if (!(adam.lr > 0.0)) throw ConfigError("adam.lr must be > 0");
    if (total_steps <= 0) throw ConfigError("total_steps must be > 0");
    if (eval_every <= 0 || eval_every > total_steps)
        throw ConfigError("eval_every must be in [1, total_steps]");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("seeds must be distinct");
}

nlohmann::json ExperimentConfig::to_json() const {
    return {{"game", game},           {"population", population}, {"hyper", hyper},
            {"adam", adam},           {"total_steps", total_steps},
            {"eval_every", eval_every}, {"seeds", seeds}};
}

ExperimentConfig ExperimentConfig::desk_profile() {
    ExperimentConfig c;
    c.hyper.batch_size = 256;
    c.population.capacity.h = 32;
    c.population.capacity.h_speaker = 32;
    c.population.capacity.h_listener = 32;
    c.population.listener_embed = 32;
    c.total_steps = 4000;
    c.eval_every = 200;
    return c;
}

ExperimentConfig ExperimentConfig::paper_profile() {
    ExperimentConfig c;
    c.game.W = 20;
    c.game.T = 10;
    c.hyper.batch_size = 1024;
    c.total_steps = 20000;
    c.eval_every = 1000;
    return c;
}

ExperimentConfig ExperimentConfig::parse(const nlohmann::json& j) {
    return parse(j, desk_profile());
}

ExperimentConfig ExperimentConfig::parse(const nlohmann::json& j, const ExperimentConfig& base) {
    check_keys(j, "config",
               {"game", "population", "hyper", "adam", "total_steps", "eval_every", "seeds"});
    ExperimentConfig c = base;
    if (j.contains("game")) from_json(j.at("game"), c.game);
    if (j.contains("population")) from_json(j.at("population"), c.population);
    if (j.contains("hyper")) from_json(j.at("hyper"), c.hyper);
    if (j.contains("adam")) from_json(j.at("adam"), c.adam);
    read_field(j, "total_steps", c.total_steps);
    read_field(j, "eval_every", c.eval_every);
    read_field(j, "seeds", c.seeds);
    c.validate();
    return c;
}

std::string ExperimentConfig::hash() const {
    nlohmann::json j = to_json();
    j.erase("seeds");
    const std::string dump = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Trainer Trainer::make(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Trainer t;
    t.cfg = cfg;
    t.seed = seed;
    const Rng master = Rng::from_seed(seed);
    Rng dataset_rng = master.stream("dataset");
    t.data = enumerate_and_split(cfg.game, dataset_rng);
    t.pop = build_population(cfg.population, cfg.game, seed);
    t.speaker_opts.assign(t.pop.speakers.size(), Adam(cfg.adam));
    t.listener_opts.assign(t.pop.listeners.size(), Adam(cfg.adam));
    t.pairing = master.stream("pairing");
    t.batch = master.stream("batch");
    t.tokens = master.stream("tokens");
    t.gate_speaker = master.stream("gate_speaker");
    t.gate_listener = master.stream("gate_listener");
    return t;
}

StepMetrics Trainer::step_once() {
    const auto [si, li] = sample_pair(pop, pairing);
    TrainStreams streams{&batch, &tokens, &gate_speaker, &gate_listener};
    StepMetrics m = train_step(pop.speakers[si], speaker_opts[si], pop.listeners[li],
                               listener_opts[li], data.train, cfg.game, cfg.hyper, streams);
    ++step;
    return m;
}

MetricsReport Trainer::evaluate() const {
    const EvalOptions opts;
    return evaluate_population(pop, data, cfg.game, opts, Rng::from_seed(seed).stream("eval"),
                               step);
}

nlohmann::json Trainer::state_json() {
    nlohmann::json speakers = nlohmann::json::array();
    for (SpeakerAgent& s : pop.speakers) speakers.push_back(params_to_json(s.params()));
    nlohmann::json listeners = nlohmann::json::array();
    for (ListenerAgent& l : pop.listeners) listeners.push_back(params_to_json(l.params()));
    nlohmann::json sopts = nlohmann::json::array();
    for (const Adam& a : speaker_opts) sopts.push_back(a.to_json());
    nlohmann::json lopts = nlohmann::json::array();
    for (const Adam& a : listener_opts) lopts.push_back(a.to_json());
    return {{"step", step},
            {"speakers", std::move(speakers)},
            {"listeners", std::move(listeners)},
            {"speaker_opts", std::move(sopts)},
            {"listener_opts", std::move(lopts)},
            {"streams",
             {{"pairing", rng_state(pairing)},
              {"batch", rng_state(batch)},
              {"tokens", rng_state(tokens)},
              {"gate_speaker", rng_state(gate_speaker)},
              {"gate_listener", rng_state(gate_listener)}}}};
}

void Trainer::restore(const nlohmann::json& j) {
    if (j.at("speakers").size() != pop.speakers.size() ||
        j.at("listeners").size() != pop.listeners.size())
        throw ConfigError("checkpoint population size does not match the config");
    step = j.at("step").get<std::int64_t>();
    for (std::size_t i = 0; i < pop.speakers.size(); ++i)
        params_from_json(j.at("speakers")[i], pop.speakers[i].params());
    for (std::size_t i = 0; i < pop.listeners.size(); ++i)
        params_from_json(j.at("listeners")[i], pop.listeners[i].params());
    speaker_opts.clear();
    for (const auto& a : j.at("speaker_opts")) speaker_opts.push_back(Adam::from_json(a));
    listener_opts.clear();
    for (const auto& a : j.at("listener_opts")) listener_opts.push_back(Adam::from_json(a));
    const nlohmann::json& s = j.at("streams");
    pairing = rng_from_state(s.at("pairing"));
    batch = rng_from_state(s.at("batch"));
    tokens = rng_from_state(s.at("tokens"));
    gate_speaker = rng_from_state(s.at("gate_speaker"));
    gate_listener = rng_from_state(s.at("gate_listener"));
}

RunRecord run(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opts) {
    cfg.validate();
    const std::string hash = cfg.hash();
    const bool persist = !opts.out_root.empty();
    fs::path dir;
    if (persist) dir = fs::path(opts.out_root) / "runs" / hash / std::to_string(seed);
    const fs::path ckpt_path = dir / "checkpoint.json";

    const auto t0 = std::chrono::steady_clock::now();
    Trainer t = Trainer::make(cfg, seed);
    std::vector<MetricsReport> series;
    bool restored = false;
    if (persist && opts.resume && fs::exists(ckpt_path)) {
        std::ifstream in(ckpt_path);
        nlohmann::json j = nlohmann::json::parse(in);
        if (j.at("config_hash").get<std::string>() != hash)
            throw ConfigError("checkpoint at " + ckpt_path.string() +
                              " belongs to a different config");
        t.restore(j.at("trainer"));
        for (const auto& r : j.at("series")) series.push_back(MetricsReport::from_json(r));
        restored = true;
    }

    std::ofstream jsonl;
    if (persist) {
        fs::create_directories(dir);
        write_file_atomic(dir / "manifest.json", population_manifest(t.pop, seed).dump(2) + "\n");
        jsonl.open(dir / "metrics.jsonl", std::ios::trunc);
        if (!jsonl) throw ConfigError("cannot write " + (dir / "metrics.jsonl").string());
        for (const MetricsReport& r : series) jsonl << r.to_json().dump() << '\n';
        jsonl.flush();
    }

    auto write_ckpt = [&] {
        if (!persist) return;
        nlohmann::json j{{"config_hash", hash}, {"seed", seed}};
        j["trainer"] = t.state_json();
        nlohmann::json arr = nlohmann::json::array();
        for (const MetricsReport& r : series) arr.push_back(r.to_json());
        j["series"] = std::move(arr);
        write_file_atomic(ckpt_path, j.dump());
    };
    auto push_eval = [&] {
        series.push_back(t.evaluate());
        if (persist) {
            jsonl << series.back().to_json().dump() << '\n';
            jsonl.flush();
        }
    };
    auto is_eval_point = [&](std::int64_t s) {
        return s == cfg.total_steps || s % cfg.eval_every == 0;
    };

    if (!restored) {
        push_eval();  // step-0 snapshot
        write_ckpt();
    }
    try {
        while (t.step < cfg.total_steps) {
            if (opts.halt_after_step && t.step >= *opts.halt_after_step) break;
            t.step_once();
            if (is_eval_point(t.step)) {
                push_eval();
                write_ckpt();
            }
        }
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + "; last-good checkpoint: " +
                           (persist ? ckpt_path.string() : "(none: in-memory run)"));
    }
    if (t.step < cfg.total_steps) write_ckpt();  // halted between eval points

    RunRecord rec;
    rec.config_hash = hash;
    rec.seed = seed;
    rec.series = std::move(series);
    rec.final_report = rec.series.back();
    rec.completed = t.step == cfg.total_steps;
    rec.manifest = population_manifest(t.pop, seed);
    rec.run_dir = persist ? dir.string() : std::string();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<RunRecord> run_all_seeds(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    std::vector<RunRecord> records;
    for (std::uint64_t seed : cfg.seeds) records.push_back(run(cfg, seed, opts));
    if (!opts.out_root.empty()) {
        const fs::path dir = fs::path(opts.out_root) / "runs" / cfg.hash();
        fs::create_directories(dir);
        write_file_atomic(dir / "summary.csv", summary_csv(records));
    }
    return records;
}

std::string summary_csv(const std::vector<RunRecord>& records) {
    std::vector<std::string> labels;
    std::vector<MetricsReport> finals;
    for (const RunRecord& r : records) {
        labels.push_back(std::to_string(r.seed));
        finals.push_back(r.final_report);
    }
    return metrics_table_csv(labels, finals);
}

const char* axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::kPopulationSize: return "population_size";
        case SweepAxis::kRhoSpeed: return "rho_speed";
        case SweepAxis::kRhoCapacity: return "rho_capacity";
        case SweepAxis::kRhoAgents: return "rho_agents";
        case SweepAxis::kSigmaP: return "sigma_p";
    }
    throw ContractError("unknown sweep axis");
}

ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, double value) {
    ExperimentConfig c = base;
    switch (axis) {
        case SweepAxis::kPopulationSize: {
            const int n = static_cast<int>(std::llround(value));
            if (n < 1 || static_cast<double>(n) != value)
                throw ConfigError("population_size values must be positive integers");
            c.population.n_speakers = n;
            c.population.n_listeners = n;
            break;
        }
        case SweepAxis::kRhoSpeed: {
            if (!(value > 0.0)) throw ConfigError("rho_speed values must be > 0");
            c.population.speed.mode = SpeedMode::kAsymmetric;
            c.population.speed.p_speaker = std::min(1.0, value);
            c.population.speed.p_listener = std::min(1.0, 1.0 / value);
            break;
        }
        case SweepAxis::kRhoCapacity: {
            if (!(value > 0.0)) throw ConfigError("rho_capacity values must be > 0");
            const int h = base.population.capacity.h;
            c.population.capacity.mode = CapacityMode::kAsymmetric;
            c.population.capacity.h_speaker =
                std::max(1, static_cast<int>(std::llround(value * h)));
            c.population.capacity.h_listener = h;
            break;
        }
        case SweepAxis::kRhoAgents: {
            if (!(value > 0.0)) throw ConfigError("rho_agents values must be > 0");
            if (value >= 1.0) {
                c.population.n_speakers = static_cast<int>(std::llround(value));
                c.population.n_listeners = 1;
            } else {
                c.population.n_speakers = 1;
                c.population.n_listeners = static_cast<int>(std::llround(1.0 / value));
            }
            break;
        }
        case SweepAxis::kSigmaP: {
            if (!(value >= 0.0)) throw ConfigError("sigma_p values must be >= 0");
            c.population.speed.mode = SpeedMode::kHeterogeneous;
            c.population.speed.dist.kind = HeterogeneityDistribution::Kind::kLogNormal;
            c.population.speed.dist.sigma = value;
            break;
        }
    }
    c.validate();
    return c;
}

std::vector<CorrelationRow> correlation_table(const std::vector<SweepCell>& cells) {
    std::vector<CorrelationRow> table;
    for (const char* name : kMetricNames) {
        CorrelationRow row;
        row.metric = name;
        std::vector<double> xs, ys;
        for (const SweepCell& cell : cells) {
            if (!cell.final_report) continue;
            if (const auto v = metric_value(*cell.final_report, name)) {
                xs.push_back(cell.axis_value);
                ys.push_back(*v);
            }
        }
        row.pairs = static_cast<int>(xs.size());
        if (xs.size() >= 2) row.rho = spearman(xs, ys);
        table.push_back(std::move(row));
    }
    return table;
}

SweepResult sweep_configs(const std::string& axis_label,
                          const std::vector<std::pair<double, ExperimentConfig>>& cells,
                          const RunOptions& opts) {
    SweepResult result;
    result.axis_label = axis_label;
    for (const auto& [value, cfg] : cells) {
        for (std::uint64_t seed : cfg.seeds) {
            SweepCell cell;
            cell.axis_value = value;
            cell.seed = seed;
            try {
                cell.final_report = run(cfg, seed, opts).final_report;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }
    result.table = correlation_table(result.cells);
    return result;
}

SweepResult sweep(SweepAxis axis, const std::vector<double>& values,
                  const ExperimentConfig& base, const RunOptions& opts) {
    if (values.size() < 3) throw ContractError("sweep: need >= 3 axis values");
    std::vector<std::pair<double, ExperimentConfig>> cells;
    for (double v : values) cells.emplace_back(v, apply_axis(base, axis, v));
    return sweep_configs(axis_name(axis), cells, opts);
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream out;
    out << "axis," << result.axis_label << '\n';
    out << "axis_value,seed,status";
    for (const char* m : kMetricNames) out << ',' << m;
    out << '\n';
    for (const SweepCell& cell : result.cells) {
        out << fmt(cell.axis_value) << ',' << cell.seed << ','
            << (cell.final_report ? "ok" : sanitize_csv(cell.error));
        for (const char* m : kMetricNames) {
            out << ',';
            if (cell.final_report) out << fmt_opt(metric_value(*cell.final_report, m));
        }
        out << '\n';
    }
    out << "correlation,metric,rho,pairs\n";
    for (const CorrelationRow& row : result.table)
        out << "correlation," << row.metric << ',' << fmt_opt(row.rho) << ',' << row.pairs << '\n';
    return out.str();
}

std::vector<Fig4Row> fig4_report(const std::vector<SigmaEnsemble>& small_n,
                                 const std::vector<SigmaEnsemble>& large_n) {
    std::vector<SigmaEnsemble> small_sorted = small_n, large_sorted = large_n;
    auto by_sigma = [](const SigmaEnsemble& a, const SigmaEnsemble& b) {
        return a.sigma_p < b.sigma_p;
    };
    std::sort(small_sorted.begin(), small_sorted.end(), by_sigma);
    std::sort(large_sorted.begin(), large_sorted.end(), by_sigma);
    if (small_sorted.size() != large_sorted.size())
        throw ContractError("fig4_report: sigma_p grids differ in size");
    for (std::size_t i = 0; i < small_sorted.size(); ++i)
        if (small_sorted[i].sigma_p != large_sorted[i].sigma_p)
            throw ContractError("fig4_report: sigma_p grids differ");

    std::vector<Fig4Row> rows;
    for (std::size_t i = 0; i < small_sorted.size(); ++i) {
        const std::vector<MetricsReport>& small = small_sorted[i].finals;
        const std::vector<MetricsReport>& large = large_sorted[i].finals;
        const std::optional<StabilityReport> small_std =
            small.size() >= 2 ? std::optional<StabilityReport>(stability(small)) : std::nullopt;
        const std::optional<StabilityReport> large_std =
            large.size() >= 2 ? std::optional<StabilityReport>(stability(large)) : std::nullopt;
        for (const char* m : kMetricNames) {
            Fig4Row row;
            row.sigma_p = small_sorted[i].sigma_p;
            row.metric = m;
            const auto mean_small = mean_of_present(small, m);
            const auto mean_large = mean_of_present(large, m);
            if (mean_small && mean_large)
                row.mean_variation = relative_variation(*mean_small, *mean_large);
            const auto std_small = small_std ? stability_value(*small_std, m) : std::nullopt;
            const auto std_large = large_std ? stability_value(*large_std, m) : std::nullopt;
            if (std_small && std_large)
                row.std_variation = relative_variation(*std_small, *std_large);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string fig4_csv(const std::vector<Fig4Row>& rows) {
    std::ostringstream out;
    out << "sigma_p,metric,mean_variation_pct,std_variation_pct\n";
    for (const Fig4Row& row : rows)
        out << fmt(row.sigma_p) << ',' << row.metric << ',' << fmt_opt(row.mean_variation) << ','
            << fmt_opt(row.std_variation) << '\n';
    return out.str();
}

std::optional<std::int64_t> steps_to_accuracy(SpeakerAgent speaker, ListenerAgent listener,
                                              const DatasetSplit& data, const GameConfig& game,
                                              const TrainHyper& hyper, const AdamConfig& adam,
                                              std::int64_t step_cap, std::int64_t check_every,
                                              double target, Rng master) {
    if (step_cap < 0 || check_every <= 0)
        throw ContractError("steps_to_accuracy: need step_cap >= 0 and check_every > 0");
    listener.update_prob = 0.0;  // the freeze: the gate never passes
    speaker.update_prob = 1.0;
    Adam speaker_opt(adam), listener_opt(adam);
    Rng batch = master.stream("batch");
    Rng tokens = master.stream("tokens");
    Rng gate_speaker = master.stream("gate_speaker");
    Rng gate_listener = master.stream("gate_listener");
    auto accuracy = [&] {
        const std::vector<Message> msgs = greedy_messages(speaker, data.train, game);
        const std::vector<ObjectInstance> decoded = listener_decode(listener, msgs, game);
        std::size_t exact = 0;
        for (std::size_t i = 0; i < data.train.size(); ++i)
            exact += decoded[i] == data.train[i] ? 1 : 0;
        return static_cast<double>(exact) / static_cast<double>(data.train.size());
    };
    std::int64_t step = 0;
    while (true) {
        if (accuracy() >= target) return step;
        if (step >= step_cap) return std::nullopt;
        const std::int64_t next = std::min(step_cap, step + check_every);
        TrainStreams streams{&batch, &tokens, &gate_speaker, &gate_listener};
        for (; step < next; ++step)
            train_step(speaker, speaker_opt, listener, listener_opt, data.train, game, hyper,
                       streams);
    }
}

std::vector<ProbeRow> pretrain_freeze_probe(const ListenerAgent& pretrained,
                                            const DatasetSplit& data, const GameConfig& game,
                                            const TrainHyper& hyper, const AdamConfig& adam,
                                            const std::vector<int>& fresh_hidden,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::int64_t step_cap, std::int64_t check_every,
                                            double target) {
    std::vector<ProbeRow> rows;
    for (int h : fresh_hidden) {
        for (std::uint64_t seed : seeds) {
            const Rng master = Rng::from_seed(seed).stream("probe");
            SpeakerAgent fresh(game, h, 1.0, master.stream("speaker_init"));
            ProbeRow row;
            row.fresh_hidden = h;
            row.seed = seed;
            row.steps = steps_to_accuracy(std::move(fresh), pretrained, data, game, hyper, adam,
                                          step_cap, check_every, target, master);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string probe_csv(const std::vector<ProbeRow>& rows) {
    std::ostringstream out;
    out << "fresh_hidden,seed,steps_to_target\n";
    for (const ProbeRow& row : rows) {
        out << row.fresh_hidden << ',' << row.seed << ',';
        if (row.steps)
            out << *row.steps;
        else
            out << "timeout";
        out << '\n';
    }
    return out.str();
}

std::vector<BaselineRow> random_baseline(const ExperimentConfig& cfg,
                                         const std::vector<std::uint64_t>& seeds) {
    std::vector<BaselineRow> rows;
    for (std::uint64_t seed : seeds) {
        const Trainer t = Trainer::make(cfg, seed);
        rows.push_back({seed, t.evaluate()});
    }
    return rows;
}

std::string baseline_csv(const std::vector<BaselineRow>& rows) {
    std::vector<std::string> labels;
    std::vector<MetricsReport> reports;
    for (const BaselineRow& row : rows) {
        labels.push_back(std::to_string(row.seed));
        reports.push_back(row.report);
    }
    return metrics_table_csv(labels, reports);
}

std::string default_out_root() {
    const char* env = std::getenv("LEWISPOP_OUT");
    return env && *env ? env : "out";
}

}  // namespace lewis
