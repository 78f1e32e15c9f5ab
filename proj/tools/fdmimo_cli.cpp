// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation and import, GAN training,
// single-link estimation, Monte-Carlo sweeps and model diagnostics. All
// numeric behavior lives in the headers; this file only wires configuration
// files and flags to library calls.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdmimo/config.hpp"
#include "fdmimo/estimators.hpp"
#include "fdmimo/gan.hpp"
#include "fdmimo/metrics.hpp"
#include "fdmimo/sweep.hpp"

namespace {

fdmimo::ConfigMap load_config(const std::string& path) {
    if (path.empty())
        return {};
    return fdmimo::ConfigMap::from_file(path);
}

nlohmann::json report_to_json(const fdmimo::EstimateReport& rep) {
    nlohmann::json j{{"alpha", rep.alpha},
                     {"tau", rep.tau},
                     {"theta", rep.theta},
                     {"phi_up", rep.phi_up},
                     {"phi_dl", rep.phi_dl},
                     {"iterations", rep.iterations},
                     {"seconds", rep.seconds},
                     {"restart_index", rep.restart_index},
                     {"unidentifiable", rep.unidentifiable},
                     {"warning", rep.warning}};
    if (!rep.objective_trace.empty())
        j["final_objective"] = rep.objective_trace.back();
    return j;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FDD massive MIMO channel estimation with a generative channel prior"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "flat key = value configuration file")
        ->check(CLI::ExistingFile);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic parameter dataset (JSONL)");
    std::string gen_out = "dataset.jsonl";
    std::string gen_import;
    std::optional<int> gen_users;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--out", gen_out, "output JSONL path");
    gen->add_option("--import-csv", gen_import, "import an external parameter table instead of generating");
    gen->add_option("--users", gen_users, "override scenario.user_count");
    gen->add_option("--seed", gen_seed, "override scenario.seed");

    // train-gan
    auto* train = app.add_subcommand("train-gan", "train the regularized GAN on a dataset");
    std::string train_data = "dataset.jsonl";
    std::string train_out = "model.json";
    std::string train_history;
    train->add_option("--data", train_data, "dataset JSONL path")->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "checkpoint JSON path");
    train->add_option("--history", train_history, "training-history CSV path");

    // estimate
    auto* est = app.add_subcommand("estimate", "run one estimation scenario on one test user");
    std::string est_data = "dataset.jsonl";
    std::string est_model;
    std::string est_scenario = "dl_gan";
    int est_user = 0;
    double est_snr_db = 20.0;
    std::string est_out;
    est->add_option("--data", est_data, "dataset JSONL path")->check(CLI::ExistingFile);
    est->add_option("--model", est_model, "GAN checkpoint path");
    est->add_option("--scenario", est_scenario, "one of the sweep scenario names");
    est->add_option("--user", est_user, "index into the test split");
    est->add_option("--snr-db", est_snr_db, "operating SNR");
    est->add_option("--out", est_out, "write the JSON report here instead of stdout");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run a Monte-Carlo metric sweep and emit CSV");
    std::string sw_data = "dataset.jsonl";
    std::string sw_model;
    std::string sw_out;
    bool sw_timing = false;
    sw->add_option("--data", sw_data, "dataset JSONL path")->check(CLI::ExistingFile);
    sw->add_option("--model", sw_model, "GAN checkpoint path");
    sw->add_option("--out", sw_out, "results CSV path (overrides sweep.output_path)");
    sw->add_flag("--timing", sw_timing, "fill the seconds column with wall time "
                                        "(reruns stop being byte-identical)");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "mode-coverage diagnostics of a trained model");
    std::string diag_data = "dataset.jsonl";
    std::string diag_model = "model.json";
    std::string diag_out;
    int diag_samples = 1000;
    int diag_bins = 20;
    diag->add_option("--data", diag_data, "dataset JSONL path")->check(CLI::ExistingFile);
    diag->add_option("--model", diag_model, "GAN checkpoint path")->check(CLI::ExistingFile);
    diag->add_option("--out", diag_out, "write the JSON report here instead of stdout");
    diag->add_option("--samples", diag_samples, "generated sample count");
    diag->add_option("--bins", diag_bins, "histogram bins per feature");

    CLI11_PARSE(app, argc, argv);

    try {
        const fdmimo::ConfigMap cfg = load_config(config_path);

        if (gen->parsed()) {
            fdmimo::Dataset ds;
            if (!gen_import.empty()) {
                const double bw = cfg.get_double("scenario.bandwidth_hz", 20e6);
                ds = fdmimo::import_csv(gen_import, bw, gen_seed.value_or(1));
            } else {
                fdmimo::ScenarioSpec spec = fdmimo::load_scenario_spec(cfg);
                if (gen_users)
                    spec.user_count = *gen_users;
                if (gen_seed)
                    spec.seed = *gen_seed;
                ds = fdmimo::generate(spec);
            }
            fdmimo::save(ds, gen_out);
            std::printf("wrote %zu records (%zu train / %zu test) to %s\n", ds.records.size(),
                        ds.train_indices.size(), ds.test_indices.size(), gen_out.c_str());
        } else if (train->parsed()) {
            const fdmimo::Dataset ds = fdmimo::load(train_data);
            fdmimo::GanConfig gan_cfg = fdmimo::load_gan_config(cfg);
            if (!cfg.has("gan.feature_dim"))
                gan_cfg.feature_dim = 3 * ds.spec.path_count;
            const fdmimo::GanModel model = fdmimo::train_gan(ds, gan_cfg);
            fdmimo::save_gan(model, train_out);
            if (!train_history.empty())
                fdmimo::write_history_csv(model.history, train_history);
            std::printf("trained %d epochs; final T_D %.4f T_G %.4f T_E %.4f acc %.3f; wrote %s\n",
                        gan_cfg.epochs, model.history.back().loss_d, model.history.back().loss_g,
                        model.history.back().loss_e, model.history.back().d_accuracy,
                        train_out.c_str());
        } else if (est->parsed()) {
            const fdmimo::Dataset ds = fdmimo::load(est_data);
            fdmimo::SystemConfig sys = fdmimo::load_system_config(cfg);
            const fdmimo::DescentConfig dcfg = fdmimo::load_descent_config(cfg);
            const fdmimo::Scenario scenario = fdmimo::parse_scenario(est_scenario);
            if (est_user < 0 || est_user >= static_cast<int>(ds.test_indices.size()))
                throw std::runtime_error("estimate: --user outside the test split");

            fdmimo::GanModel model;
            if (fdmimo::scenario_needs_gan(scenario)) {
                if (est_model.empty())
                    throw std::runtime_error("estimate: scenario needs --model");
                model = fdmimo::load_gan(est_model);
            }

            // Same draw discipline as one sweep trial: labeled child streams
            // off one root, SNR calibrated against the train-split energy.
            sys.pilot_power = std::pow(10.0, est_snr_db / 10.0) * sys.antenna_count *
                              sys.noise_var / fdmimo::mean_channel_energy(ds, sys);
            const fdmimo::Rng troot =
                fdmimo::Rng(dcfg.seed).child("estimate", static_cast<std::uint64_t>(est_user));
            const fdmimo::PathParams& x =
                ds.records[static_cast<std::size_t>(ds.test_indices[static_cast<std::size_t>(est_user)])];
            fdmimo::PathParams x_dl = x;
            {
                fdmimo::Rng gain_rng = troot.child("dl-gain");
                x_dl.alpha = fdmimo::downlink_gains(x.alpha, ds.spec.alpha_dl_rel_err, gain_rng);
            }
            fdmimo::Rng up_noise = troot.child("up-noise");
            const fdmimo::UplinkObservation obs_up = fdmimo::synth_uplink(x, sys, up_noise);
            fdmimo::Rng pilot_rng = troot.child("pilot");
            const auto pilots = fdmimo::make_downlink_pilots(sys, pilot_rng);
            fdmimo::Rng dl_noise = troot.child("dl-noise");
            const fdmimo::DownlinkObservation obs_dl = fdmimo::synth_downlink(x_dl, sys, pilots, dl_noise);

            std::vector<fdmimo::CMat> cov;
            if (scenario == fdmimo::Scenario::up_lmmse)
                cov = fdmimo::channel_covariance(ds, sys);
            fdmimo::EstimateReport up_rep;
            const bool needs_up = fdmimo::scenario_needs_gan(scenario);
            if (needs_up)
                up_rep = fdmimo::run_scenario(fdmimo::Scenario::up_gan, obs_up, obs_dl, nullptr,
                                              &model, sys, dcfg, nullptr, troot);
            const fdmimo::EstimateReport rep =
                (scenario == fdmimo::Scenario::up_gan)
                    ? up_rep
                    : fdmimo::run_scenario(scenario, obs_up, obs_dl, &cov, &model, sys, dcfg,
                                           needs_up ? &up_rep : nullptr, troot);

            const bool downlink = fdmimo::scenario_is_downlink(scenario);
            std::vector<fdmimo::CVec> truth;
            for (int k : rep.channel_subcarriers)
                truth.push_back(downlink
                                    ? fdmimo::downlink_channel(x_dl, sys, k, sys.all_antennas())
                                    : fdmimo::uplink_channel(x, sys, k));
            fdmimo::Rng ser_rng = troot.child("ser", 0);
            nlohmann::json j = report_to_json(rep);
            j["scenario"] = est_scenario;
            j["snr_db"] = est_snr_db;
            j["nmse_db"] = fdmimo::to_db(fdmimo::nmse(truth, rep.channels));
            j["rate_bps_hz"] = fdmimo::rate_bps_hz(truth, rep.channels, sys.pilot_power, sys.noise_var);
            j["ser"] = fdmimo::ser_qpsk(truth, rep.channels, sys.pilot_power, sys.noise_var, 1000, ser_rng);
            if (est_out.empty())
                std::cout << j.dump(2) << '\n';
            else {
                std::ofstream out(est_out);
                out << j.dump(2) << '\n';
            }
        } else if (sw->parsed()) {
            const fdmimo::Dataset ds = fdmimo::load(sw_data);
            const fdmimo::SystemConfig sys = fdmimo::load_system_config(cfg);
            const fdmimo::DescentConfig dcfg = fdmimo::load_descent_config(cfg);
            fdmimo::SweepSpec spec = fdmimo::load_sweep_spec(cfg);
            if (!sw_out.empty())
                spec.output_path = sw_out;
            if (sw_timing)
                spec.timing = true;
            if (spec.output_path.empty())
                throw std::runtime_error("sweep: no output path (--out or sweep.output_path)");

            bool needs_gan = false;
            for (fdmimo::Scenario s : spec.scenarios)
                needs_gan = needs_gan || fdmimo::scenario_needs_gan(s);
            fdmimo::GanModel model;
            if (needs_gan) {
                if (sw_model.empty())
                    throw std::runtime_error("sweep: scenario list needs --model");
                model = fdmimo::load_gan(sw_model);
            }
            const auto rows = fdmimo::run_sweep(spec, sys, ds, &model, dcfg);
            fdmimo::write_rows_csv(rows, spec.output_path);
            std::printf("wrote %zu rows to %s\n", rows.size(), spec.output_path.c_str());
        } else if (diag->parsed()) {
            const fdmimo::Dataset ds = fdmimo::load(diag_data);
            const fdmimo::GanModel model = fdmimo::load_gan(diag_model);
            if (!model.scaler_valid)
                throw std::runtime_error("diagnose: checkpoint has no scaler");

            fdmimo::Mat heldout(static_cast<std::size_t>(model.config.feature_dim),
                                ds.test_indices.size());
            for (std::size_t c = 0; c < ds.test_indices.size(); ++c) {
                const fdmimo::Vec f = fdmimo::to_features(
                    ds.records[static_cast<std::size_t>(ds.test_indices[c])], ds.scaler);
                for (std::size_t r = 0; r < f.size(); ++r)
                    heldout(r, c) = f[r];
            }
            const fdmimo::GanDiagnostics d = fdmimo::diagnose_gan(
                model, heldout, diag_samples, diag_bins, fdmimo::Rng(model.config.seed).child("diag"));
            nlohmann::json j{{"d_accuracy", d.d_accuracy},
                             {"mean_pairwise_distance", d.mean_pairwise_distance},
                             {"sample_count", d.sample_count},
                             {"hist_lo", d.hist_lo},
                             {"hist_hi", d.hist_hi},
                             {"histograms", d.histograms}};
            if (diag_out.empty())
                std::cout << j.dump(2) << '\n';
            else {
                std::ofstream out(diag_out);
                out << j.dump(2) << '\n';
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
