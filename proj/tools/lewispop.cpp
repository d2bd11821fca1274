#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lewis/experiments.hpp"

namespace fs = std::filesystem;

namespace {

struct BaseOptions {
    std::string profile = "desk";
    std::string config_path;
    std::string out_root = lewis::default_out_root();
    std::vector<std::uint64_t> seeds;
    std::int64_t steps = 0;       // 0: keep the profile/config value
    std::int64_t eval_every = 0;  // 0: keep
    bool no_resume = false;
};

void add_base_options(CLI::App* cmd, BaseOptions& opts) {
    cmd->add_option("--profile", opts.profile, "Base profile: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--config", opts.config_path,
                    "JSON config file; fields override the profile");
    cmd->add_option("--out", opts.out_root, "Output root (default $LEWISPOP_OUT or ./out)");
    cmd->add_option("--seeds", opts.seeds, "Seed list override")->delimiter(',');
    cmd->add_option("--steps", opts.steps, "total_steps override");
    cmd->add_option("--eval-every", opts.eval_every, "eval_every override");
    cmd->add_flag("--no-resume", opts.no_resume, "Ignore existing checkpoints");
}

lewis::ExperimentConfig build_config(const BaseOptions& opts) {
    lewis::ExperimentConfig cfg = opts.profile == "paper"
                                      ? lewis::ExperimentConfig::paper_profile()
                                      : lewis::ExperimentConfig::desk_profile();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw lewis::ConfigError("cannot read config file " + opts.config_path);
        cfg = lewis::ExperimentConfig::parse(nlohmann::json::parse(in), cfg);
    }
    if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
    if (opts.steps > 0) cfg.total_steps = opts.steps;
    if (opts.eval_every > 0) cfg.eval_every = opts.eval_every;
    cfg.validate();
    return cfg;
}

lewis::RunOptions run_options(const BaseOptions& opts) {
    lewis::RunOptions ro;
    ro.out_root = opts.out_root;
    ro.resume = !opts.no_resume;
    return ro;
}

void write_report(const std::string& out_root, const std::string& name,
                  const std::string& content) {
    const fs::path dir = fs::path(out_root) / "reports";
    fs::create_directories(dir);
    std::ofstream out(dir / name, std::ios::trunc);
    out << content;
    std::printf("wrote %s\n", (dir / name).string().c_str());
}

std::vector<double> default_axis_values(lewis::SweepAxis axis) {
    switch (axis) {
        case lewis::SweepAxis::kPopulationSize:
            return {1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
        case lewis::SweepAxis::kRhoSpeed:
            return {0.02, 0.04, 0.1, 0.2, 0.5, 1, 2, 5, 10, 25, 50};
        case lewis::SweepAxis::kRhoCapacity:
            return {0.25, 0.5, 1, 2, 4};
        case lewis::SweepAxis::kRhoAgents:
            return {0.1, 0.2, 0.5, 1, 2, 5, 10};
        case lewis::SweepAxis::kSigmaP:
            return {0, 0.1, 0.5, 1, 2, 3, 4, 5};
    }
    return {};
}

lewis::SweepAxis axis_from_name(const std::string& s) {
    if (s == "population_size") return lewis::SweepAxis::kPopulationSize;
    if (s == "rho_speed") return lewis::SweepAxis::kRhoSpeed;
    if (s == "rho_capacity") return lewis::SweepAxis::kRhoCapacity;
    if (s == "rho_agents") return lewis::SweepAxis::kRhoAgents;
    if (s == "sigma_p") return lewis::SweepAxis::kSigmaP;
    throw lewis::ConfigError("unknown sweep axis " + s);
}

int cmd_run(const BaseOptions& base, bool print_config) {
    const lewis::ExperimentConfig cfg = build_config(base);
    if (print_config) {
        std::cout << cfg.to_json().dump(2) << "\n";
        std::printf("hash: %s\n", cfg.hash().c_str());
        return 0;
    }
    const auto records = lewis::run_all_seeds(cfg, run_options(base));
    std::cout << lewis::summary_csv(records);
    std::printf("run dir: %s\n",
                (fs::path(base.out_root) / "runs" / cfg.hash()).string().c_str());
    return 0;
}

int cmd_sweep(const BaseOptions& base, const std::string& axis_name,
              std::vector<double> values) {
    const lewis::SweepAxis axis = axis_from_name(axis_name);
    if (values.empty()) values = default_axis_values(axis);
    const lewis::ExperimentConfig cfg = build_config(base);
    const auto result = lewis::sweep(axis, values, cfg, run_options(base));
    const std::string csv = lewis::sweep_csv(result);
    std::cout << csv;
    write_report(base.out_root, "sweep_" + axis_name + ".csv", csv);
    return 0;
}

int cmd_baseline(const BaseOptions& base, int n_agents) {
    lewis::ExperimentConfig cfg = build_config(base);
    cfg.population.n_speakers = n_agents;
    cfg.population.n_listeners = n_agents;
    const auto rows = lewis::random_baseline(cfg, cfg.seeds);
    const std::string csv = lewis::baseline_csv(rows);
    std::cout << csv;
    write_report(base.out_root, "baseline.csv", csv);
    return 0;
}

int cmd_report_table1(const BaseOptions& base, std::vector<double> p_values) {
    if (p_values.empty())
        p_values.assign(std::begin(lewis::kUpdateProbSet), std::end(lewis::kUpdateProbSet));
    const lewis::ExperimentConfig cfg = build_config(base);
    std::vector<std::pair<double, lewis::ExperimentConfig>> cells;
    for (double p : p_values) {
        lewis::ExperimentConfig c = cfg;
        c.population.speed.mode = lewis::SpeedMode::kHomogeneous;
        c.population.speed.p = p;
        cells.emplace_back(p, c);
    }
    const auto result = lewis::sweep_configs("update_probability", cells, run_options(base));
    const std::string csv = lewis::sweep_csv(result);
    std::cout << csv;
    write_report(base.out_root, "table1.csv", csv);
    return 0;
}

int cmd_report_correlations(const BaseOptions& base) {
    const lewis::ExperimentConfig cfg = build_config(base);
    std::string combined;
    for (const auto axis : {lewis::SweepAxis::kRhoSpeed, lewis::SweepAxis::kRhoCapacity,
                            lewis::SweepAxis::kRhoAgents}) {
        const auto result =
            lewis::sweep(axis, default_axis_values(axis), cfg, run_options(base));
        combined += lewis::sweep_csv(result);
        combined += "\n";
    }
    std::cout << combined;
    write_report(base.out_root, "correlations.csv", combined);
    return 0;
}

int cmd_report_fig4(const BaseOptions& base, int n_small, int n_large,
                    std::vector<double> sigmas) {
    if (sigmas.empty()) sigmas = default_axis_values(lewis::SweepAxis::kSigmaP);
    const lewis::ExperimentConfig cfg = build_config(base);
    auto ensembles = [&](int n) {
        std::vector<lewis::SigmaEnsemble> out;
        for (double sigma : sigmas) {
            lewis::ExperimentConfig c = lewis::apply_axis(
                lewis::apply_axis(cfg, lewis::SweepAxis::kPopulationSize, n),
                lewis::SweepAxis::kSigmaP, sigma);
            lewis::SigmaEnsemble e;
            e.sigma_p = sigma;
            for (const auto& rec : lewis::run_all_seeds(c, run_options(base)))
                e.finals.push_back(rec.final_report);
            out.push_back(std::move(e));
        }
        return out;
    };
    const auto rows = lewis::fig4_report(ensembles(n_small), ensembles(n_large));
    const std::string csv = lewis::fig4_csv(rows);
    std::cout << csv;
    write_report(base.out_root, "fig4.csv", csv);
    return 0;
}

int cmd_probe(const BaseOptions& base, std::vector<int> hidden, std::int64_t pretrain_steps,
              std::uint64_t pretrain_seed, std::int64_t cap, std::int64_t check_every) {
    lewis::ExperimentConfig cfg = build_config(base);
    if (hidden.empty()) hidden = {8, 16, 32, 64};
    if (pretrain_steps <= 0) pretrain_steps = cfg.total_steps;
    cfg.population.n_speakers = 1;
    cfg.population.n_listeners = 1;
    lewis::Trainer trainer = lewis::Trainer::make(cfg, pretrain_seed);
    for (std::int64_t s = 0; s < pretrain_steps; ++s) trainer.step_once();
    const double acc = trainer.evaluate().train_accuracy;
    std::printf("pretrained pair train accuracy after %lld steps: %.4f\n",
                static_cast<long long>(pretrain_steps), acc);
    const auto rows =
        lewis::pretrain_freeze_probe(trainer.pop.listeners[0], trainer.data, cfg.game, cfg.hyper,
                                     cfg.adam, hidden, cfg.seeds, cap, check_every);
    const std::string csv = lewis::probe_csv(rows);
    std::cout << csv;
    write_report(base.out_root, "probe.csv", csv);
    return 0;
}

int cmd_dataset(const BaseOptions& base, const std::string& out_file) {
    const lewis::ExperimentConfig cfg = build_config(base);
    const std::uint64_t seed = cfg.seeds.front();
    lewis::Rng dataset_rng = lewis::Rng::from_seed(seed).stream("dataset");
    const lewis::DatasetSplit split = lewis::enumerate_and_split(cfg.game, dataset_rng);
    if (out_file.empty()) {
        lewis::dump_dataset_csv(split, cfg.game, std::cout);
    } else {
        std::ofstream out(out_file, std::ios::trunc);
        lewis::dump_dataset_csv(split, cfg.game, out);
        std::printf("wrote %s\n", out_file.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Population-based Lewis reconstruction game simulator"};
    app.require_subcommand(1);

    BaseOptions base;
    bool print_config = false;
    auto* run_cmd = app.add_subcommand("run", "Train one configuration over its seeds");
    add_base_options(run_cmd, base);
    run_cmd->add_flag("--print-config", print_config,
                      "Print the effective config JSON and hash, then exit");

    BaseOptions sweep_base;
    std::string sweep_axis = "rho_speed";
    std::vector<double> sweep_values;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run an axis sweep and correlate metrics");
    add_base_options(sweep_cmd, sweep_base);
    sweep_cmd
        ->add_option("--axis", sweep_axis,
                     "population_size, rho_speed, rho_capacity, rho_agents, or sigma_p")
        ->check(CLI::IsMember(
            {"population_size", "rho_speed", "rho_capacity", "rho_agents", "sigma_p"}));
    sweep_cmd->add_option("--values", sweep_values, "Axis values (default: the built-in grid)")
        ->delimiter(',');

    BaseOptions baseline_base;
    baseline_base.profile = "paper";
    int baseline_agents = 2;
    auto* baseline_cmd =
        app.add_subcommand("baseline", "Evaluate untrained populations (random baselines)");
    add_base_options(baseline_cmd, baseline_base);
    baseline_cmd->add_option("--agents", baseline_agents,
                             "Speakers and listeners per population");

    BaseOptions report_base;
    std::string report_kind = "table1";
    std::vector<double> report_p_values;
    std::vector<double> report_sigmas;
    int n_small = 2, n_large = 10;
    auto* report_cmd = app.add_subcommand("report", "Reproduce a result table");
    add_base_options(report_cmd, report_base);
    report_cmd->add_option("--kind", report_kind, "table1, correlations, or fig4")
        ->check(CLI::IsMember({"table1", "correlations", "fig4"}));
    report_cmd->add_option("--p-values", report_p_values, "table1 update probabilities")
        ->delimiter(',');
    report_cmd->add_option("--sigmas", report_sigmas, "fig4 sigma_p grid")->delimiter(',');
    report_cmd->add_option("--n-small", n_small, "fig4 small population size");
    report_cmd->add_option("--n-large", n_large, "fig4 large population size");

    BaseOptions probe_base;
    std::vector<int> probe_hidden;
    std::int64_t pretrain_steps = 0;
    std::uint64_t pretrain_seed = 1;
    std::int64_t probe_cap = 6000;
    std::int64_t probe_check = 100;
    auto* probe_cmd = app.add_subcommand(
        "probe", "Pretrain a pair, freeze the listener, time fresh speakers");
    add_base_options(probe_cmd, probe_base);
    probe_cmd->add_option("--hidden", probe_hidden, "Fresh speaker hidden sizes")
        ->delimiter(',');
    probe_cmd->add_option("--pretrain-steps", pretrain_steps,
                          "Pretraining steps (default: total_steps)");
    probe_cmd->add_option("--pretrain-seed", pretrain_seed, "Pretraining seed");
    probe_cmd->add_option("--cap", probe_cap, "Probe step budget per fresh speaker");
    probe_cmd->add_option("--check-every", probe_check, "Accuracy check cadence");

    BaseOptions dataset_base;
    std::string dataset_out;
    auto* dataset_cmd = app.add_subcommand("dataset", "Dump the train/test object split");
    add_base_options(dataset_cmd, dataset_base);
    dataset_cmd->add_option("--out-file", dataset_out, "Write CSV here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(base, print_config);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_base, sweep_axis, sweep_values);
        if (baseline_cmd->parsed()) return cmd_baseline(baseline_base, baseline_agents);
        if (report_cmd->parsed()) {
            if (report_kind == "table1") return cmd_report_table1(report_base, report_p_values);
            if (report_kind == "correlations") return cmd_report_correlations(report_base);
            return cmd_report_fig4(report_base, n_small, n_large, report_sigmas);
        }
        if (probe_cmd->parsed())
            return cmd_probe(probe_base, probe_hidden, pretrain_steps, pretrain_seed, probe_cap,
                             probe_check);
        if (dataset_cmd->parsed()) return cmd_dataset(dataset_base, dataset_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
