// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmimo/channel.hpp"
#include "fdmimo/dataset.hpp"
#include "fdmimo/gan.hpp"
#include "fdmimo/sweep.hpp"

namespace fdmimo {

/// Every key the flat configuration format understands; the loaders below
/// read exactly these. Presence of anything else is an error so typos never
/// pass silently.
inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "system.antenna_count", "system.subcarrier_count", "system.bandwidth_hz",
        "system.uplink_freq_hz", "system.downlink_freq_hz", "system.antenna_spacing_m",
        "system.pilot_power", "system.noise_var", "system.downlink_slots", "system.path_count",
        "system.uplink_subcarriers", "system.downlink_subcarriers", "system.downlink_antennas",
        "scenario.path_count", "scenario.user_count", "scenario.bandwidth_hz",
        "scenario.delay_spread_max_s", "scenario.cluster_count", "scenario.cluster_angle_spread_rad",
        "scenario.cluster_delay_spread_s", "scenario.gain_decay_s", "scenario.gain_shadow_db",
        "scenario.alpha_dl_rel_err", "scenario.seed",
        "gan.latent_dim", "gan.feature_dim", "gan.generator_hidden", "gan.encoder_hidden",
        "gan.discriminator_hidden", "gan.batch_size", "gan.epochs", "gan.lr", "gan.beta1",
        "gan.beta2", "gan.lambda1", "gan.lambda2", "gan.dropout", "gan.seed",
        "gan.checkpoint_every", "gan.checkpoint_path",
        "descent.optimizer", "descent.lr", "descent.max_iters", "descent.epsilon",
        "descent.restarts", "descent.presamples", "descent.seed",
        "sweep.axis", "sweep.values", "sweep.scenarios", "sweep.trials", "sweep.ser_trials",
        "sweep.snr_db", "sweep.sigma_phi_deg", "sweep.master_seed", "sweep.output_path",
        "sweep.timing"};
    return keys;
}

/// Flat "key = value" configuration file: '#' comments, blank lines ignored,
/// dotted keys namespace the sections. Keys are checked against
/// known_config_keys() at load time.
class ConfigMap {
  public:
    ConfigMap() = default;

    static ConfigMap from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("config: cannot open " + path);
        ConfigMap cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string stripped = strip(line.substr(0, line.find('#')));
            if (stripped.empty())
                continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                         ": expected key = value");
            const std::string key = strip(stripped.substr(0, eq));
            const std::string value = strip(stripped.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": empty key");
            if (known_config_keys().count(key) == 0)
                throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                         ": unknown key '" + key + "'");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }

    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    [[nodiscard]] double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : parse_double(it->second, key);
    }

    [[nodiscard]] int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : static_cast<int>(parse_ll(it->second, key));
    }

    [[nodiscard]] std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : static_cast<std::uint64_t>(parse_ll(it->second, key));
    }

    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "on")
            return true;
        if (it->second == "false" || it->second == "0" || it->second == "off")
            return false;
        throw std::runtime_error("config: key " + key + ": expected a boolean, got '" + it->second + "'");
    }

    /// Comma list of numbers; integer lists also accept "a-b" ranges.
    [[nodiscard]] Vec get_double_list(const std::string& key, const Vec& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        Vec out;
        for (const std::string& tok : split_list(it->second))
            out.push_back(parse_double(tok, key));
        return out;
    }

    [[nodiscard]] std::vector<int> get_int_list(const std::string& key,
                                                const std::vector<int>& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        std::vector<int> out;
        for (const std::string& tok : split_list(it->second)) {
            const auto dash = tok.find('-', tok.front() == '-' ? 1 : 0);
            if (dash != std::string::npos) {
                const int lo = static_cast<int>(parse_ll(tok.substr(0, dash), key));
                const int hi = static_cast<int>(parse_ll(tok.substr(dash + 1), key));
                if (hi < lo)
                    throw std::runtime_error("config: key " + key + ": bad range '" + tok + "'");
                for (int v = lo; v <= hi; ++v)
                    out.push_back(v);
            } else {
                out.push_back(static_cast<int>(parse_ll(tok, key)));
            }
        }
        return out;
    }

  private:
    static std::string strip(std::string s) {
        const auto from = s.find_first_not_of(" \t\r\n");
        const auto to = s.find_last_not_of(" \t\r\n");
        if (from == std::string::npos)
            return "";
        return s.substr(from, to - from + 1);
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ','))
            out.push_back(strip(tok));
        return out;
    }

    static double parse_double(const std::string& s, const std::string& key) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size())
                throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config: key " + key + ": bad number '" + s + "'");
        }
    }

    static long long parse_ll(const std::string& s, const std::string& key) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(s, &pos);
            if (pos != s.size())
                throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config: key " + key + ": bad integer '" + s + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

inline SystemConfig load_system_config(const ConfigMap& cfg) {
    SystemConfig sys;
    sys.antenna_count = cfg.get_int("system.antenna_count", sys.antenna_count);
    sys.subcarrier_count = cfg.get_int("system.subcarrier_count", sys.subcarrier_count);
    sys.bandwidth_hz = cfg.get_double("system.bandwidth_hz", sys.bandwidth_hz);
    sys.uplink_freq_hz = cfg.get_double("system.uplink_freq_hz", sys.uplink_freq_hz);
    sys.downlink_freq_hz = cfg.get_double("system.downlink_freq_hz", sys.downlink_freq_hz);
    sys.antenna_spacing_m = cfg.get_double("system.antenna_spacing_m",
                                           0.5 * kSpeedOfLight / sys.downlink_freq_hz);
    sys.pilot_power = cfg.get_double("system.pilot_power", sys.pilot_power);
    sys.noise_var = cfg.get_double("system.noise_var", sys.noise_var);
    sys.downlink_slots = cfg.get_int("system.downlink_slots", sys.downlink_slots);
    sys.path_count = cfg.get_int("system.path_count", sys.path_count);
    sys.uplink_subcarriers =
        cfg.get_int_list("system.uplink_subcarriers", index_range(1, sys.subcarrier_count));
    sys.downlink_subcarriers =
        cfg.get_int_list("system.downlink_subcarriers", index_range(1, sys.subcarrier_count));
    sys.downlink_antennas =
        cfg.get_int_list("system.downlink_antennas", index_range(1, sys.antenna_count));
    sys.validate();
    return sys;
}

inline ScenarioSpec load_scenario_spec(const ConfigMap& cfg) {
    ScenarioSpec spec;
    spec.path_count = cfg.get_int("scenario.path_count", spec.path_count);
    spec.user_count = cfg.get_int("scenario.user_count", spec.user_count);
    spec.bandwidth_hz = cfg.get_double("scenario.bandwidth_hz", spec.bandwidth_hz);
    spec.delay_spread_max_s = cfg.get_double("scenario.delay_spread_max_s", spec.delay_spread_max_s);
    spec.cluster_count = cfg.get_int("scenario.cluster_count", spec.cluster_count);
    spec.cluster_angle_spread_rad =
        cfg.get_double("scenario.cluster_angle_spread_rad", spec.cluster_angle_spread_rad);
    spec.cluster_delay_spread_s =
        cfg.get_double("scenario.cluster_delay_spread_s", spec.cluster_delay_spread_s);
    spec.gain_decay_s = cfg.get_double("scenario.gain_decay_s", spec.gain_decay_s);
    spec.gain_shadow_db = cfg.get_double("scenario.gain_shadow_db", spec.gain_shadow_db);
    spec.alpha_dl_rel_err = cfg.get_double("scenario.alpha_dl_rel_err", spec.alpha_dl_rel_err);
    spec.seed = cfg.get_u64("scenario.seed", spec.seed);
    spec.validate();
    return spec;
}

inline GanConfig load_gan_config(const ConfigMap& cfg) {
    GanConfig gan;
    gan.latent_dim = cfg.get_int("gan.latent_dim", gan.latent_dim);
    gan.feature_dim = cfg.get_int("gan.feature_dim", gan.feature_dim);
    gan.generator_hidden = cfg.get_int_list("gan.generator_hidden", gan.generator_hidden);
    gan.encoder_hidden = cfg.get_int_list("gan.encoder_hidden", gan.encoder_hidden);
    gan.discriminator_hidden = cfg.get_int_list("gan.discriminator_hidden", gan.discriminator_hidden);
    gan.batch_size = cfg.get_int("gan.batch_size", gan.batch_size);
    gan.epochs = cfg.get_int("gan.epochs", gan.epochs);
    gan.lr = cfg.get_double("gan.lr", gan.lr);
    gan.beta1 = cfg.get_double("gan.beta1", gan.beta1);
    gan.beta2 = cfg.get_double("gan.beta2", gan.beta2);
    gan.lambda1 = cfg.get_double("gan.lambda1", gan.lambda1);
    gan.lambda2 = cfg.get_double("gan.lambda2", gan.lambda2);
    gan.dropout = cfg.get_double("gan.dropout", gan.dropout);
    gan.seed = cfg.get_u64("gan.seed", gan.seed);
    gan.checkpoint_every = cfg.get_int("gan.checkpoint_every", gan.checkpoint_every);
    gan.checkpoint_path = cfg.get_string("gan.checkpoint_path", gan.checkpoint_path);
    gan.validate();
    return gan;
}

inline DescentConfig load_descent_config(const ConfigMap& cfg) {
    DescentConfig d;
    const std::string opt = cfg.get_string("descent.optimizer", "adam");
    if (opt == "adam")
        d.optimizer = DescentOptimizer::adam;
    else if (opt == "fixed_step")
        d.optimizer = DescentOptimizer::fixed_step;
    else
        throw std::runtime_error("config: descent.optimizer must be adam or fixed_step");
    d.lr = cfg.get_double("descent.lr", d.lr);
    d.max_iters = cfg.get_int("descent.max_iters", d.max_iters);
    d.epsilon = cfg.get_double("descent.epsilon", d.epsilon);
    d.restarts = cfg.get_int("descent.restarts", d.restarts);
    d.presamples = cfg.get_int("descent.presamples", d.presamples);
    d.seed = cfg.get_u64("descent.seed", d.seed);
    d.validate();
    return d;
}

inline SweepSpec load_sweep_spec(const ConfigMap& cfg) {
    SweepSpec spec;
    spec.axis = cfg.get_string("sweep.axis", spec.axis);
    spec.values = cfg.get_double_list("sweep.values", spec.values);
    const std::string names = cfg.get_string("sweep.scenarios", "");
    if (!names.empty()) {
        spec.scenarios.clear();
        std::stringstream ss(names);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const auto from = tok.find_first_not_of(" \t");
            const auto to = tok.find_last_not_of(" \t");
            spec.scenarios.push_back(parse_scenario(tok.substr(from, to - from + 1)));
        }
    }
    spec.trials = cfg.get_int("sweep.trials", spec.trials);
    spec.ser_trials = cfg.get_int("sweep.ser_trials", spec.ser_trials);
    spec.snr_db = cfg.get_double("sweep.snr_db", spec.snr_db);
    spec.sigma_phi_deg = cfg.get_double("sweep.sigma_phi_deg", spec.sigma_phi_deg);
    spec.master_seed = cfg.get_u64("sweep.master_seed", spec.master_seed);
    spec.output_path = cfg.get_string("sweep.output_path", spec.output_path);
    spec.timing = cfg.get_bool("sweep.timing", spec.timing);
    spec.validate();
    return spec;
}

} // namespace fdmimo
