#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "velest/common.hpp"
#include "velest/csv.hpp"
#include "velest/gru.hpp"
#include "velest/metrics.hpp"
#include "velest/mkf.hpp"
#include "velest/pipeline.hpp"
#include "velest/scenario.hpp"
#include "velest/suite.hpp"

namespace fs = std::filesystem;
using namespace velest;

namespace {

std::string stem_of(const ScenarioSpec& spec) {
    return scenario_name(spec.kind) + "_" + spec.surface + "_" +
           std::to_string(spec.seed % 100000);
}

// stems are identified by their *_manifest.cfg files
std::vector<std::string> stems_in(const std::string& dir, const std::string& suffix) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            out.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(out.begin(), out.end());
    return out;
}

int run_simulate(const std::string& scenario, const std::string& surface,
                 double duration, uint64_t seed, const std::string& out_dir,
                 const std::string& suite) {
    std::vector<ScenarioSpec> specs;
    if (!suite.empty()) {
        if (suite == "default")
            specs = default_suite(seed);
        else if (suite == "smoke")
            specs = smoke_suite(seed);
        else
            throw std::invalid_argument("suite must be default or smoke");
    } else {
        ScenarioSpec s;
        s.kind = scenario_from_name(scenario);
        s.surface = surface;
        s.seed = seed;
        s.duration = duration > 0 ? duration : 60.0;
        specs.push_back(s);
    }
    VehicleParams params;
    for (const ScenarioSpec& s : specs) {
        ScenarioResult r = run_scenario(s, params);
        std::string stem = stem_of(s);
        write_scenario_outputs(r, out_dir, stem);
        std::printf("%s: %.1f s, max |slip| %.3f, max rear sideslip %.1f deg\n",
                    stem.c_str(), s.duration, r.max_abs_slip_ratio,
                    r.max_rear_sideslip * 180.0 / M_PI);
    }
    return 0;
}

Dataset load_prepared(const std::string& dir, const std::string& stem,
                      bool need_targets) {
    auto base = (fs::path(dir) / stem).string();
    std::string targets = base + "_targets.csv";
    Dataset ds = read_dataset_csv(base + "_frames.csv",
                                  fs::exists(targets) && need_targets ? targets : "");
    ds.name = stem;
    if (fs::exists(base + "_manifest.cfg")) {
        KeyValueConfig m = KeyValueConfig::load(base + "_manifest.cfg");
        ds.surface = m.get_string("surface", "flat");
        ds.seed = static_cast<uint64_t>(m.get_int("seed", 0));
    }
    std::string truth = base + "_truth.csv";
    if (fs::exists(truth)) {
        ds.ground_truth = read_truth_csv(truth);
        if (ds.ground_truth.size() > ds.frames.size())
            ds.ground_truth.resize(ds.frames.size());
    }
    return ds;
}

int run_prepare(const std::string& raw, const std::string& out_dir, bool with_targets,
                const std::string& mkf_config) {
    MkfConfig cfg;
    if (!mkf_config.empty()) cfg = MkfConfig::load(mkf_config);

    std::vector<std::pair<std::string, std::string>> jobs;  // dir, stem
    if (fs::is_directory(raw)) {
        for (const std::string& stem : stems_in(raw, "_manifest.cfg"))
            jobs.emplace_back(raw, stem);
    } else {
        fs::path p(raw);
        jobs.emplace_back(p.parent_path().string(), p.filename().string());
    }
    if (jobs.empty()) throw std::runtime_error("no scenario outputs under " + raw);

    fs::create_directories(out_dir);
    for (const auto& [dir, stem] : jobs) {
        RawSensorStream stream = read_stream_csvs(dir, stem);
        Dataset ds;
        ds.name = stem;
        ds.frames = zero_order_hold_sync(stream);
        auto out_base = (fs::path(out_dir) / stem).string();

        if (with_targets) {
            auto targets = generate_target(ds.frames, cfg);
            ds.targets = std::move(targets);
            write_target_csv(ds, out_base + "_targets.csv");
        }
        write_dataset_csv(ds, out_base + "_frames.csv");

        std::string manifest = (fs::path(dir) / (stem + "_manifest.cfg")).string();
        KeyValueConfig m =
            fs::exists(manifest) ? KeyValueConfig::load(manifest) : KeyValueConfig{};
        m.set("frames", static_cast<long>(ds.frames.size()));
        m.set("rate_hz", 200.0);
        m.save(out_base + "_manifest.cfg");

        std::string truth_in = (fs::path(dir) / (stem + "_truth.csv")).string();
        if (fs::exists(truth_in)) {
            auto truth = read_truth_csv(truth_in);
            if (truth.size() > ds.frames.size()) truth.resize(ds.frames.size());
            std::vector<std::vector<double>> rows;
            for (const auto& s : truth)
                rows.push_back({s.time, s.vx, s.vy, s.yaw_rate, s.ax, s.ay, s.x, s.y,
                                s.heading, s.wheel_omega[0], s.wheel_omega[1],
                                s.wheel_omega[2], s.wheel_omega[3]});
            write_csv(out_base + "_truth.csv",
                      {"t", "vx", "vy", "yawrate", "ax", "ay", "x", "y", "heading",
                       "w_fl", "w_fr", "w_rl", "w_rr"},
                      rows);
        }
        std::printf("%s: %zu frames%s\n", stem.c_str(), ds.frames.size(),
                    with_targets ? " + targets" : "");
    }
    return 0;
}

int run_train(const std::string& config, const std::string& data,
              const std::string& checkpoint) {
    TrainConfig cfg = config.empty() ? TrainConfig{} : TrainConfig::load(config);

    std::vector<Dataset> sets;
    for (const std::string& stem : stems_in(data, "_manifest.cfg"))
        sets.push_back(load_prepared(data, stem, true));
    if (sets.empty()) throw std::runtime_error("no prepared datasets under " + data);
    for (const Dataset& ds : sets)
        if (ds.targets.empty())
            throw std::runtime_error(ds.name + " has no targets; rerun prepare --with-targets");

    SplitAssignment split = build_splits(sets);
    auto in = [](const std::vector<std::string>& v, const std::string& n) {
        return std::find(v.begin(), v.end(), n) != v.end();
    };
    std::vector<Dataset> train_sets, val_sets;
    for (Dataset& ds : sets) {
        if (in(split.train, ds.name)) train_sets.push_back(std::move(ds));
        else if (in(split.validation, ds.name)) val_sets.push_back(std::move(ds));
    }
    std::printf("split: %zu train / %zu test / %zu validation\n", split.train.size(),
                split.test.size(), split.validation.size());

    TrainResult res = train_network(train_sets, val_sets, cfg, &std::cout);
    save_checkpoint(res.net, checkpoint);
    save_history_csv(res.history, checkpoint + ".history.csv");

    KeyValueConfig sp;
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    };
    sp.set("train", join(split.train));
    sp.set("test", join(split.test));
    sp.set("validation", join(split.validation));
    sp.save(checkpoint + ".splits.cfg");
    std::printf("best epoch %d, val loss %.6f\n", res.history.best_epoch,
                res.history.val_loss.empty()
                    ? 0.0
                    : res.history.val_loss[static_cast<std::size_t>(res.history.best_epoch - 1)]);
    return 0;
}

int run_estimate(const std::string& checkpoint, const std::string& mkf_mode,
                 const std::string& mkf_config, const std::string& data,
                 const std::string& out) {
    Dataset ds = read_dataset_csv(data);
    if (ds.frames.empty()) throw std::runtime_error(data + " holds no frames");
    if (!checkpoint.empty()) {
        GruNetwork net = load_checkpoint(checkpoint);
        auto est = predict_stream(net, ds.frames);
        std::vector<std::vector<double>> rows;
        rows.reserve(est.size());
        for (std::size_t i = 0; i < est.size(); ++i)
            rows.push_back({ds.frames[i].t, est[i].vx, est[i].vy, est[i].yaw_rate,
                            est[i].ax, est[i].ay});
        write_csv(out, {"t", "vx", "vy", "yawrate", "ax", "ay"}, rows);
    } else {
        MkfConfig cfg;
        if (!mkf_config.empty()) cfg = MkfConfig::load(mkf_config);
        FilterMode mode;
        if (mkf_mode == "baseline")
            mode = FilterMode::baseline;
        else if (mkf_mode == "reference")
            mode = FilterMode::reference;
        else
            throw std::invalid_argument("--mkf-mode must be baseline or reference");
        if (mode == FilterMode::reference && !ds.frames.front().has_ext)
            throw std::runtime_error("reference mode needs ext_vx/ext_vy columns");
        auto states = run_filter(ds.frames, mode, cfg);
        write_estimates_csv(states, out);
    }
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int run_evaluate(const std::string& data, const std::string& estimators,
                 const std::string& checkpoint, const std::string& mkf_config,
                 const std::string& split_name, const std::string& report) {
    std::vector<Dataset> sets;
    for (const std::string& stem : stems_in(data, "_manifest.cfg"))
        sets.push_back(load_prepared(data, stem, false));
    if (sets.empty()) throw std::runtime_error("no prepared datasets under " + data);

    std::vector<Dataset> chosen;
    if (split_name == "all") {
        chosen = std::move(sets);
    } else {
        SplitAssignment split = build_splits(sets);
        const std::vector<std::string>* pick = nullptr;
        if (split_name == "train") pick = &split.train;
        else if (split_name == "test") pick = &split.test;
        else if (split_name == "validation") pick = &split.validation;
        else throw std::invalid_argument("--split must be train|test|validation|all");
        for (Dataset& ds : sets)
            if (std::find(pick->begin(), pick->end(), ds.name) != pick->end())
                chosen.push_back(std::move(ds));
    }
    for (const Dataset& ds : chosen)
        if (ds.ground_truth.size() != ds.frames.size())
            throw std::runtime_error(ds.name + " lacks aligned ground truth");

    MkfConfig cfg;
    if (!mkf_config.empty()) cfg = MkfConfig::load(mkf_config);

    std::map<std::string, std::vector<std::vector<StateEstimate>>> tracks;
    std::istringstream es(estimators);
    std::string name;
    while (std::getline(es, name, ',')) {
        std::vector<std::vector<StateEstimate>> per_set;
        for (const Dataset& ds : chosen) {
            if (name == "baseline" || name == "reference") {
                FilterMode mode =
                    name == "baseline" ? FilterMode::baseline : FilterMode::reference;
                auto states = run_filter(ds.frames, mode, cfg);
                std::vector<StateEstimate> est;
                est.reserve(states.size());
                for (const auto& s : states) est.push_back(s.estimate());
                per_set.push_back(std::move(est));
            } else if (name == "rnn") {
                if (checkpoint.empty())
                    throw std::invalid_argument("estimator rnn needs --checkpoint");
                GruNetwork net = load_checkpoint(checkpoint);
                per_set.push_back(predict_stream(net, ds.frames));
            } else {
                throw std::invalid_argument("unknown estimator: " + name);
            }
        }
        tracks[name] = std::move(per_set);
    }

    MetricReport rep = compare_estimators(chosen, tracks);
    std::cout << rep.to_text();
    if (!report.empty()) write_report_csv(rep, report);
    return 0;
}

int run_casestudy(const std::string& case_id, const std::string& checkpoint,
                  const std::string& mkf_config, uint64_t seed,
                  const std::string& report) {
    GruNetwork net = load_checkpoint(checkpoint);
    MkfConfig cfg;
    if (!mkf_config.empty()) cfg = MkfConfig::load(mkf_config);
    VehicleParams vehicle;

    CaseStudyResult res = run_case_study(case_from_name(case_id), net, cfg, vehicle, seed);
    std::cout << res.to_text();
    if (!report.empty()) {
        std::FILE* f = std::fopen(report.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot write " + report);
        std::string text = res.to_text();
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);

        std::vector<std::string> cols = {"t"};
        for (const auto& [k, v] : res.series) cols.push_back(k);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < res.t.size(); ++i) {
            std::vector<double> r = {res.t[i]};
            for (const auto& [k, v] : res.series) r.push_back(v[i]);
            rows.push_back(std::move(r));
        }
        write_csv(report + ".series.csv", cols, rows);
    }
    return res.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"velocity estimation toolkit"};
    app.require_subcommand(1);

    std::string scenario = "track_lap", surface = "flat", out_dir = ".", suite;
    double duration = -1.0;
    uint64_t seed = 1;
    auto* sim = app.add_subcommand("simulate", "run a scenario and write raw sensor CSVs");
    sim->add_option("--scenario", scenario, "scenario name");
    sim->add_option("--surface", surface, "flat|gravel|wet");
    sim->add_option("--duration", duration, "seconds");
    sim->add_option("--seed", seed, "RNG seed");
    sim->add_option("--suite", suite, "run a whole campaign: default|smoke");
    sim->add_option("--out", out_dir, "output directory")->required();

    std::string raw, prep_out, mkf_config;
    bool with_targets = false;
    auto* prep = app.add_subcommand("prepare", "synchronize raw streams to 200 Hz");
    prep->add_option("--raw", raw, "simulate output dir or one stem prefix")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_flag("--with-targets", with_targets, "generate smoothed reference targets");
    prep->add_option("--mkf-config", mkf_config, "filter config for target generation");

    std::string train_config, train_data, checkpoint;
    auto* tr = app.add_subcommand("train", "train the recurrent estimator");
    tr->add_option("--config", train_config, "training config (key=value)");
    tr->add_option("--data", train_data, "prepared dataset directory")->required();
    tr->add_option("--checkpoint", checkpoint, "output checkpoint path")->required();

    std::string est_checkpoint, mkf_mode, est_data, est_out, est_mkf_config;
    auto* est = app.add_subcommand("estimate", "run an estimator over a dataset");
    est->add_option("--checkpoint", est_checkpoint, "network checkpoint");
    est->add_option("--mkf-mode", mkf_mode, "baseline|reference");
    est->add_option("--mkf-config", est_mkf_config, "filter config");
    est->add_option("--data", est_data, "frames CSV")->required();
    est->add_option("--out", est_out, "output CSV")->required();

    std::string ev_data, ev_estimators = "baseline,reference", ev_checkpoint,
                ev_mkf_config, ev_split = "test", ev_report;
    auto* ev = app.add_subcommand("evaluate", "score estimators against ground truth");
    ev->add_option("--data", ev_data, "prepared dataset directory")->required();
    ev->add_option("--estimators", ev_estimators, "comma list: baseline,reference,rnn");
    ev->add_option("--checkpoint", ev_checkpoint, "network checkpoint for rnn");
    ev->add_option("--mkf-config", ev_mkf_config, "filter config");
    ev->add_option("--split", ev_split, "train|test|validation|all");
    ev->add_option("--report", ev_report, "report CSV path");

    std::string case_id, cs_checkpoint, cs_mkf_config, cs_report;
    uint64_t cs_seed = 77;
    auto* cs = app.add_subcommand("casestudy", "run one published case study");
    cs->add_option("--case", case_id, "bias_calibration|launch|high_slip|outlier")
        ->required();
    cs->add_option("--checkpoint", cs_checkpoint, "network checkpoint")->required();
    cs->add_option("--mkf-config", cs_mkf_config, "filter config");
    cs->add_option("--seed", cs_seed, "scenario seed");
    cs->add_option("--report", cs_report, "report path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return run_simulate(scenario, surface, duration, seed, out_dir, suite);
        if (prep->parsed()) return run_prepare(raw, prep_out, with_targets, mkf_config);
        if (tr->parsed()) return run_train(train_config, train_data, checkpoint);
        if (est->parsed())
            return run_estimate(est_checkpoint, mkf_mode, est_mkf_config, est_data, est_out);
        if (ev->parsed())
            return run_evaluate(ev_data, ev_estimators, ev_checkpoint, ev_mkf_config,
                                ev_split, ev_report);
        if (cs->parsed())
            return run_casestudy(case_id, cs_checkpoint, cs_mkf_config, cs_seed, cs_report);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
