// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdmimo/dataset.hpp"
#include "fdmimo/nn.hpp"

namespace fdmimo {

/// Training configuration for the encoder-regularized GAN. The architecture
/// defaults (latent 8, feature 15, the three hidden stacks, Adam 1e-3 with
/// betas (0.9, 0.999), lambda = 1e-2, 20% dropout) are the reference design;
/// batch and epoch counts default to desk-scale values that train in seconds.
struct GanConfig {
    int latent_dim = 8;
    int feature_dim = 15;
    std::vector<int> generator_hidden = {10, 12, 14};
    std::vector<int> encoder_hidden = {14, 12, 10};
    std::vector<int> discriminator_hidden = {12, 8, 4, 2};
    int batch_size = 256;
    int epochs = 3000;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double lambda1 = 1e-2;
    double lambda2 = 1e-2;
    double dropout = 0.2;
    std::uint64_t seed = 1;
    int checkpoint_every = 0;
    std::string checkpoint_path;

    void validate() const {
        if (latent_dim < 1 || feature_dim < 1)
            throw std::invalid_argument("GanConfig: dims must be positive");
        if (latent_dim > feature_dim)
            throw std::invalid_argument("GanConfig: latent_dim must not exceed feature_dim");
        if (batch_size < 1 || epochs < 0)
            throw std::invalid_argument("GanConfig: batch/epochs out of range");
        if (lambda1 < 0.0 || lambda2 < 0.0)
            throw std::invalid_argument("GanConfig: regularizer weights must be nonnegative");
        if (lr <= 0.0 || dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("GanConfig: lr/dropout out of range");
        if (checkpoint_every > 0 && checkpoint_path.empty())
            throw std::invalid_argument("GanConfig: checkpoint cadence needs a path");
    }
};

struct GanHistoryRow {
    int epoch = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    double loss_e = 0.0;
    double d_accuracy = 0.0;
};

struct GanModel {
    Mlp generator;
    Mlp discriminator;
    Mlp encoder;
    GanConfig config;
    FeatureScaler scaler;
    bool scaler_valid = false;
    std::vector<GanHistoryRow> history;
};

inline void save_gan(const GanModel& model, const std::string& path);

/// Discriminator outputs are clamped away from {0, 1} inside every log.
inline double clamp_prob(double p) { return std::min(std::max(p, 1e-7), 1.0 - 1e-7); }

namespace detail {

inline Mat sample_columns(const Mat& features, int batch, Rng& rng) {
    Mat out(features.rows(), static_cast<std::size_t>(batch));
    for (int c = 0; c < batch; ++c) {
        const int pick = rng.uniform_int(static_cast<int>(features.cols()));
        for (std::size_t r = 0; r < features.rows(); ++r)
            out(r, static_cast<std::size_t>(c)) = features(r, static_cast<std::size_t>(pick));
    }
    return out;
}

inline Mat sample_latent(int dim, int batch, Rng& rng) {
    Mat z(static_cast<std::size_t>(dim), static_cast<std::size_t>(batch));
    for (auto& v : z.data())
        v = rng.normal();
    return z;
}

inline double mean_log(const Mat& probs, bool one_minus) {
    double acc = 0.0;
    for (double p : probs.data())
        acc += std::log(one_minus ? 1.0 - clamp_prob(p) : clamp_prob(p));
    return acc / static_cast<double>(probs.size());
}

inline double mean_sq_diff(const Mat& a, const Mat& b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        double col = 0.0;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            const double d = a(r, c) - b(r, c);
            col += d * d;
        }
        acc += col;
    }
    return acc / static_cast<double>(a.cols());
}

} // namespace detail

/// T_D = E[log D(x)] + E[log(1 - D(G(z)))], sample means, eval mode.
inline double disc_loss(const Mlp& gen, const Mlp& disc, const Mat& real, const Mat& latent) {
    if (real.cols() == 0 || latent.cols() == 0)
        throw std::invalid_argument("disc_loss: empty batch");
    const Mat fake = forward(gen, latent, RunMode::eval);
    const Mat d_real = forward(disc, real, RunMode::eval);
    const Mat d_fake = forward(disc, fake, RunMode::eval);
    return detail::mean_log(d_real, false) + detail::mean_log(d_fake, true);
}

/// T_G = -E[log D(G(z))] + E[lambda1 ||x - G(E(x))||^2 + lambda2 log D(G(E(x)))].
inline double gen_loss(const Mlp& gen, const Mlp& disc, const Mlp& enc, const Mat& real,
                       const Mat& latent, double lambda1, double lambda2) {
    const Mat fake = forward(gen, latent, RunMode::eval);
    const Mat d_fake = forward(disc, fake, RunMode::eval);
    const Mat recon = forward(gen, forward(enc, real, RunMode::eval), RunMode::eval);
    const Mat d_recon = forward(disc, recon, RunMode::eval);
    return -detail::mean_log(d_fake, false) + lambda1 * detail::mean_sq_diff(real, recon) +
           lambda2 * detail::mean_log(d_recon, false);
}

/// T_E: the two regularizer terms of T_G only.
inline double enc_loss(const Mlp& gen, const Mlp& disc, const Mlp& enc, const Mat& real,
                       double lambda1, double lambda2) {
    const Mat recon = forward(gen, forward(enc, real, RunMode::eval), RunMode::eval);
    const Mat d_recon = forward(disc, recon, RunMode::eval);
    return lambda1 * detail::mean_sq_diff(real, recon) + lambda2 * detail::mean_log(d_recon, false);
}

/// Three-player training: per epoch, ascend T_D on one minibatch, descend T_G
/// on a fresh one, then descend T_E on a third. All updates are Adam;
/// discriminator gradients are negated so the shared optimizer maximizes.
inline GanModel train_gan_features(const Mat& features, const GanConfig& cfg) {
    cfg.validate();
    if (features.rows() != static_cast<std::size_t>(cfg.feature_dim))
        throw std::invalid_argument("train_gan_features: feature dim mismatch");
    if (features.cols() == 0)
        throw std::invalid_argument("train_gan_features: empty training set");

    GanModel model;
    model.config = cfg;
    Rng rng = Rng(cfg.seed).child("gan");
    model.generator = make_mlp(cfg.latent_dim, cfg.generator_hidden, cfg.feature_dim,
                               Activation::leaky_relu, Activation::tanh, cfg.dropout, rng);
    model.encoder = make_mlp(cfg.feature_dim, cfg.encoder_hidden, cfg.latent_dim,
                             Activation::leaky_relu, Activation::identity, cfg.dropout, rng);
    model.discriminator = make_mlp(cfg.feature_dim, cfg.discriminator_hidden, 1,
                                   Activation::leaky_relu, Activation::sigmoid, cfg.dropout, rng);

    AdamState opt_g = make_adam(model.generator, cfg.lr, cfg.beta1, cfg.beta2);
    AdamState opt_d = make_adam(model.discriminator, cfg.lr, cfg.beta1, cfg.beta2);
    AdamState opt_e = make_adam(model.encoder, cfg.lr, cfg.beta1, cfg.beta2);

    const int m = cfg.batch_size;
    const double inv_m = 1.0 / static_cast<double>(m);
    model.history.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        GanHistoryRow row;
        row.epoch = epoch;

        // Discriminator ascent on T_D.
        {
            const Mat x = detail::sample_columns(features, m, rng);
            const Mat z = detail::sample_latent(cfg.latent_dim, m, rng);
            ForwardCache cache_fake_g;
            const Mat fake = forward(model.generator, z, RunMode::train, &rng, &cache_fake_g);
            ForwardCache cache_real, cache_fake;
            const Mat d_real = forward(model.discriminator, x, RunMode::train, &rng, &cache_real);
            const Mat d_fake = forward(model.discriminator, fake, RunMode::train, &rng, &cache_fake);

            row.loss_d = detail::mean_log(d_real, false) + detail::mean_log(d_fake, true);
            int correct = 0;
            for (double p : d_real.data())
                correct += p > 0.5;
            for (double p : d_fake.data())
                correct += p <= 0.5;
            row.d_accuracy = correct / (2.0 * m);

            // Ascend: feed the negated dT_D gradients to the minimizer.
            Mat g_real(1, static_cast<std::size_t>(m));
            Mat g_fake(1, static_cast<std::size_t>(m));
            for (int c = 0; c < m; ++c) {
                g_real(0, c) = -inv_m / clamp_prob(d_real(0, c));
                g_fake(0, c) = inv_m / (1.0 - clamp_prob(d_fake(0, c)));
            }
            MlpGrads grads = zero_grads(model.discriminator);
            backward(model.discriminator, cache_real, g_real, &grads);
            backward(model.discriminator, cache_fake, g_fake, &grads);
            adam_step(model.discriminator, grads, opt_d);
        }

        // Generator descent on T_G.
        {
            const Mat x = detail::sample_columns(features, m, rng);
            const Mat z = detail::sample_latent(cfg.latent_dim, m, rng);

            ForwardCache cache_g1;
            const Mat fake = forward(model.generator, z, RunMode::train, &rng, &cache_g1);
            ForwardCache cache_d1;
            const Mat d_fake = forward(model.discriminator, fake, RunMode::train, &rng, &cache_d1);

            const Mat code = forward(model.encoder, x, RunMode::train, &rng);
            ForwardCache cache_g2;
            const Mat recon = forward(model.generator, code, RunMode::train, &rng, &cache_g2);
            ForwardCache cache_d2;
            const Mat d_recon = forward(model.discriminator, recon, RunMode::train, &rng, &cache_d2);

            row.loss_g = -detail::mean_log(d_fake, false) +
                         cfg.lambda1 * detail::mean_sq_diff(x, recon) +
                         cfg.lambda2 * detail::mean_log(d_recon, false);

            MlpGrads grads = zero_grads(model.generator);
            {
                Mat gd(1, static_cast<std::size_t>(m));
                for (int c = 0; c < m; ++c)
                    gd(0, c) = -inv_m / clamp_prob(d_fake(0, c));
                const Mat gx = backward(model.discriminator, cache_d1, gd, nullptr);
                backward(model.generator, cache_g1, gx, &grads);
            }
            {
                Mat gd(1, static_cast<std::size_t>(m));
                for (int c = 0; c < m; ++c)
                    gd(0, c) = cfg.lambda2 * inv_m / clamp_prob(d_recon(0, c));
                Mat gxr = backward(model.discriminator, cache_d2, gd, nullptr);
                for (std::size_t i = 0; i < gxr.size(); ++i)
                    gxr.data()[i] += 2.0 * cfg.lambda1 * inv_m * (recon.data()[i] - x.data()[i]);
                backward(model.generator, cache_g2, gxr, &grads);
            }
            adam_step(model.generator, grads, opt_g);
        }

        // Encoder descent on T_E.
        {
            const Mat x = detail::sample_columns(features, m, rng);
            ForwardCache cache_e;
            const Mat code = forward(model.encoder, x, RunMode::train, &rng, &cache_e);
            ForwardCache cache_g;
            const Mat recon = forward(model.generator, code, RunMode::train, &rng, &cache_g);
            ForwardCache cache_d;
            const Mat d_recon = forward(model.discriminator, recon, RunMode::train, &rng, &cache_d);

            row.loss_e = cfg.lambda1 * detail::mean_sq_diff(x, recon) +
                         cfg.lambda2 * detail::mean_log(d_recon, false);

            Mat gd(1, static_cast<std::size_t>(m));
            for (int c = 0; c < m; ++c)
                gd(0, c) = cfg.lambda2 * inv_m / clamp_prob(d_recon(0, c));
            Mat gxr = backward(model.discriminator, cache_d, gd, nullptr);
            for (std::size_t i = 0; i < gxr.size(); ++i)
                gxr.data()[i] += 2.0 * cfg.lambda1 * inv_m * (recon.data()[i] - x.data()[i]);
            const Mat gcode = backward(model.generator, cache_g, gxr, nullptr);
            MlpGrads grads = zero_grads(model.encoder);
            backward(model.encoder, cache_e, gcode, &grads);
            adam_step(model.encoder, grads, opt_e);
        }

        if (!std::isfinite(row.loss_d) || !std::isfinite(row.loss_g) || !std::isfinite(row.loss_e))
            throw std::runtime_error("train_gan: non-finite loss at epoch " + std::to_string(epoch));
        model.history.push_back(row);

        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            save_gan(model, cfg.checkpoint_path);
    }
    return model;
}

/// Train on a dataset's train split; the model keeps the fitted scaler so
/// generated features can be mapped back to channel parameters.
inline GanModel train_gan(const Dataset& ds, const GanConfig& cfg) {
    if (ds.train_indices.empty())
        throw std::invalid_argument("train_gan: empty train split");
    const int n_path = ds.records.front().paths();
    if (cfg.feature_dim != 3 * n_path)
        throw std::invalid_argument("train_gan: feature_dim must equal 3 * path count");
    Mat features(static_cast<std::size_t>(cfg.feature_dim), ds.train_indices.size());
    for (std::size_t c = 0; c < ds.train_indices.size(); ++c) {
        const Vec f = to_features(ds.records[static_cast<std::size_t>(ds.train_indices[c])], ds.scaler);
        for (std::size_t r = 0; r < f.size(); ++r)
            features(r, c) = f[r];
    }
    GanModel model = train_gan_features(features, cfg);
    model.scaler = ds.scaler;
    model.scaler_valid = true;
    return model;
}

struct GanDiagnostics {
    double d_accuracy = 0.0;          // held-out real vs fresh fake, eval mode
    double mean_pairwise_distance = 0.0;
    int sample_count = 0;
    double hist_lo = -1.25;
    double hist_hi = 1.25;
    std::vector<std::vector<int>> histograms; // one per feature dimension
};

/// Mode-collapse diagnostics: discriminator accuracy on held-out data vs
/// fresh samples, mean pairwise distance between generated samples, and
/// per-feature marginal histograms.
inline GanDiagnostics diagnose_gan(const GanModel& model, const Mat& heldout, int n_samples,
                                   int bins, Rng rng) {
    if (n_samples < 2 || bins < 1)
        throw std::invalid_argument("diagnose_gan: need n_samples >= 2 and bins >= 1");
    GanDiagnostics diag;
    diag.sample_count = n_samples;

    const Mat z = detail::sample_latent(model.config.latent_dim, n_samples, rng);
    const Mat fake = forward(model.generator, z, RunMode::eval);
    const Mat d_fake = forward(model.discriminator, fake, RunMode::eval);
    const Mat d_real = forward(model.discriminator, heldout, RunMode::eval);
    int correct = 0;
    for (double p : d_real.data())
        correct += p > 0.5;
    for (double p : d_fake.data())
        correct += p <= 0.5;
    diag.d_accuracy = static_cast<double>(correct) /
                      static_cast<double>(d_real.size() + d_fake.size());

    double acc = 0.0;
    std::size_t pairs = 0;
    for (int i = 0; i < n_samples; ++i)
        for (int j = i + 1; j < n_samples; ++j) {
            double d2 = 0.0;
            for (std::size_t r = 0; r < fake.rows(); ++r) {
                const double d = fake(r, i) - fake(r, j);
                d2 += d * d;
            }
            acc += std::sqrt(d2);
            ++pairs;
        }
    diag.mean_pairwise_distance = acc / static_cast<double>(pairs);

    diag.histograms.assign(fake.rows(), std::vector<int>(static_cast<std::size_t>(bins), 0));
    const double width = (diag.hist_hi - diag.hist_lo) / bins;
    for (std::size_t r = 0; r < fake.rows(); ++r)
        for (int c = 0; c < n_samples; ++c) {
            int b = static_cast<int>((fake(r, c) - diag.hist_lo) / width);
            b = std::clamp(b, 0, bins - 1);
            ++diag.histograms[r][static_cast<std::size_t>(b)];
        }
    return diag;
}

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : net.layers) {
        layers.push_back({{"rows", layer.weights.rows()},
                          {"cols", layer.weights.cols()},
                          {"weights", layer.weights.data()},
                          {"bias", layer.bias},
                          {"activation", activation_name(layer.act)}});
    }
    return {{"dropout", net.dropout_rate}, {"layers", layers}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net;
    net.dropout_rate = j.at("dropout").get<double>();
    for (const auto& lj : j.at("layers")) {
        Layer layer;
        const auto rows = lj.at("rows").get<std::size_t>();
        const auto cols = lj.at("cols").get<std::size_t>();
        layer.weights = Mat(rows, cols);
        layer.weights.data() = lj.at("weights").get<std::vector<double>>();
        if (layer.weights.data().size() != rows * cols)
            throw std::runtime_error("checkpoint: weight count mismatch");
        layer.bias = lj.at("bias").get<Vec>();
        layer.act = activation_from_name(lj.at("activation").get<std::string>());
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

inline nlohmann::json gan_config_to_json(const GanConfig& c) {
    return {{"latent_dim", c.latent_dim},
            {"feature_dim", c.feature_dim},
            {"generator_hidden", c.generator_hidden},
            {"encoder_hidden", c.encoder_hidden},
            {"discriminator_hidden", c.discriminator_hidden},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"lambda1", c.lambda1},
            {"lambda2", c.lambda2},
            {"dropout", c.dropout},
            {"seed", c.seed}};
}

inline GanConfig gan_config_from_json(const nlohmann::json& j) {
    GanConfig c;
    c.latent_dim = j.at("latent_dim").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.generator_hidden = j.at("generator_hidden").get<std::vector<int>>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    c.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<int>>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.lambda1 = j.at("lambda1").get<double>();
    c.lambda2 = j.at("lambda2").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace detail

inline std::uint64_t config_hash(const GanConfig& cfg) {
    return detail::fnv1a64(detail::gan_config_to_json(cfg).dump());
}

inline void save_gan(const GanModel& model, const std::string& path) {
    nlohmann::json j{{"version", 1},
                     {"config", detail::gan_config_to_json(model.config)},
                     {"config_hash", config_hash(model.config)},
                     {"generator", detail::mlp_to_json(model.generator)},
                     {"discriminator", detail::mlp_to_json(model.discriminator)},
                     {"encoder", detail::mlp_to_json(model.encoder)},
                     {"scaler_valid", model.scaler_valid}};
    if (model.scaler_valid)
        j["scaler"] = detail::scaler_to_json(model.scaler);
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("save_gan: cannot open " + path);
    out << j.dump(2) << '\n';
}

inline GanModel load_gan(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("load_gan: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    GanModel model;
    model.config = detail::gan_config_from_json(j.at("config"));
    model.generator = detail::mlp_from_json(j.at("generator"));
    model.discriminator = detail::mlp_from_json(j.at("discriminator"));
    model.encoder = detail::mlp_from_json(j.at("encoder"));
    model.scaler_valid = j.at("scaler_valid").get<bool>();
    if (model.scaler_valid)
        model.scaler = detail::scaler_from_json(j.at("scaler"));
    return model;
}

inline void write_history_csv(const std::vector<GanHistoryRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "epoch,t_d,t_g,t_e,d_accuracy\n";
    char buf[160];
    for (const GanHistoryRow& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.loss_d, r.loss_g,
                      r.loss_e, r.d_accuracy);
        out << buf;
    }
}

} // namespace fdmimo
