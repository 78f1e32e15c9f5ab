// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fdmimo/dataset.hpp"
#include "fdmimo/gan.hpp"

using namespace fdmimo;

namespace {

// Two well-separated 2-D Gaussian blobs inside [-1, 1], equal weights.
Mat two_mode_data(int n, Rng& rng, double sigma = 0.08) {
    Mat x(2, static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        const double sign = (rng.uniform() < 0.5) ? 1.0 : -1.0;
        x(0, c) = sign * 0.55 + sigma * rng.normal();
        x(1, c) = sign * 0.55 + sigma * rng.normal();
    }
    return x;
}

GanConfig toy_config() {
    GanConfig cfg;
    cfg.latent_dim = 2;
    cfg.feature_dim = 2;
    cfg.generator_hidden = {16, 16};
    cfg.encoder_hidden = {16, 16};
    cfg.discriminator_hidden = {16, 8};
    cfg.batch_size = 128;
    cfg.epochs = 1500;
    cfg.dropout = 0.0;
    cfg.seed = 3;
    return cfg;
}

// Single-layer net computing act(w * x + b) elementwise.
Mlp scalar_net(double w, double b, Activation act, int dim = 1) {
    Mlp net;
    Layer layer;
    layer.weights = Mat(1, static_cast<std::size_t>(dim));
    for (auto& v : layer.weights.data())
        v = w;
    layer.bias.assign(1, b);
    layer.act = act;
    net.layers.push_back(layer);
    return net;
}

Mlp identity_net(int dim) {
    Mlp net;
    Layer layer;
    layer.weights = Mat::identity(static_cast<std::size_t>(dim));
    layer.bias.assign(static_cast<std::size_t>(dim), 0.0);
    layer.act = Activation::identity;
    net.layers.push_back(layer);
    return net;
}

double minority_share(const Mat& samples) {
    int pos = 0;
    for (std::size_t c = 0; c < samples.cols(); ++c)
        pos += (samples(0, c) + samples(1, c)) > 0.0;
    const double share = static_cast<double>(pos) / static_cast<double>(samples.cols());
    return std::min(share, 1.0 - share);
}

} // namespace

TEST_CASE("a coin-flip discriminator earns log(1/4)") {
    // Zero-weight sigmoid outputs exactly 0.5 everywhere.
    Mlp disc = scalar_net(0.0, 0.0, Activation::sigmoid, 2);
    Mlp gen = identity_net(2);
    Rng rng(1);
    Mat x(2, 8), z(2, 8);
    for (auto& v : x.data())
        v = rng.normal();
    for (auto& v : z.data())
        v = rng.normal();
    REQUIRE(disc_loss(gen, disc, x, z) == Catch::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("a perfect discriminator drives T_D toward zero from below") {
    // D = sigmoid(20 * (x0 + x1)) separates blobs at +-10 sharply.
    Mlp disc = scalar_net(20.0, 0.0, Activation::sigmoid, 1);
    Mlp gen = scalar_net(0.0, -10.0, Activation::identity, 1); // all fakes at -10
    Mat x(1, 4, 10.0);
    Mat z(1, 4, 0.0);
    const double t_d = disc_loss(gen, disc, x, z);
    REQUIRE(t_d < 0.0);
    REQUIRE(t_d > -1e-6);
}

TEST_CASE("losses match a two-sample scalar recomputation") {
    Mlp gen = scalar_net(0.5, 0.1, Activation::tanh, 1);
    Mlp enc = scalar_net(-0.3, 0.2, Activation::identity, 1);
    Mlp disc = scalar_net(0.8, -0.1, Activation::sigmoid, 1);
    Mat x(1, 2);
    x(0, 0) = 0.4;
    x(0, 1) = -0.7;
    Mat z(1, 2);
    z(0, 0) = 1.1;
    z(0, 1) = -0.2;
    const double l1 = 0.01, l2 = 0.01;

    auto dval = [&](double v) { return clamp_prob(1.0 / (1.0 + std::exp(-(0.8 * v - 0.1)))); };
    auto gval = [&](double v) { return std::tanh(0.5 * v + 0.1); };
    auto eval_ = [&](double v) { return -0.3 * v + 0.2; };

    double td = 0.0, tg = 0.0, te = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double xi = x(0, i), zi = z(0, i);
        td += 0.5 * (std::log(dval(xi)) + std::log(1.0 - dval(gval(zi))));
        const double recon = gval(eval_(xi));
        const double reg = l1 * (xi - recon) * (xi - recon) + l2 * std::log(dval(recon));
        tg += 0.5 * (-std::log(dval(gval(zi))) + reg);
        te += 0.5 * reg;
    }
    REQUIRE(disc_loss(gen, disc, x, z) == Catch::Approx(td).epsilon(1e-12));
    REQUIRE(gen_loss(gen, disc, enc, x, z, l1, l2) == Catch::Approx(tg).epsilon(1e-12));
    REQUIRE(enc_loss(gen, disc, enc, x, l1, l2) == Catch::Approx(te).epsilon(1e-12));
}

TEST_CASE("zero regularizers reduce the generator loss to the non-saturating form") {
    Rng rng(5);
    Mlp gen = make_mlp(2, {6}, 2, Activation::leaky_relu, Activation::tanh, 0.0, rng);
    Mlp enc = make_mlp(2, {6}, 2, Activation::leaky_relu, Activation::identity, 0.0, rng);
    Mlp disc = make_mlp(2, {6}, 1, Activation::leaky_relu, Activation::sigmoid, 0.0, rng);
    Mat x(2, 4), z(2, 4);
    for (auto& v : x.data())
        v = rng.normal();
    for (auto& v : z.data())
        v = rng.normal();
    const Mat fake = forward(gen, z, RunMode::eval);
    const Mat d_fake = forward(disc, fake, RunMode::eval);
    double want = 0.0;
    for (double p : d_fake.data())
        want -= std::log(clamp_prob(p)) / 4.0;
    REQUIRE(gen_loss(gen, disc, enc, x, z, 0.0, 0.0) == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("a perfect autoencoder zeroes the reconstruction term") {
    // Identity G and E of matching dims: G(E(x)) == x.
    Mlp gen = identity_net(2);
    Mlp enc = identity_net(2);
    Mlp disc = scalar_net(0.0, 0.0, Activation::sigmoid, 2);
    Rng rng(6);
    Mat x(2, 8);
    for (auto& v : x.data())
        v = rng.normal();
    // With D == 0.5 the lambda2 share is log(0.5); the lambda1 share must vanish.
    const double te = enc_loss(gen, disc, enc, x, 1.0, 0.0);
    REQUIRE(te == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("single tiny-lr steps improve the objectives they target") {
    Rng data_rng(8);
    Mat x = two_mode_data(64, data_rng);
    GanConfig cfg = toy_config();
    cfg.epochs = 40;
    cfg.seed = 11;
    GanModel model = train_gan_features(x, cfg);

    Rng rng(13);
    Mat xb = two_mode_data(64, rng);
    Mat zb(2, 64);
    for (auto& v : zb.data())
        v = rng.normal();

    // Replaying one discriminator ascent step with a tiny lr on a frozen
    // batch must not decrease T_D.
    const double td_before = disc_loss(model.generator, model.discriminator, xb, zb);
    {
        GanModel probe = model;
        const Mat fake = forward(probe.generator, zb, RunMode::eval);
        ForwardCache cache_real, cache_fake;
        const Mat d_real = forward(probe.discriminator, xb, RunMode::eval, nullptr, &cache_real);
        const Mat d_fake = forward(probe.discriminator, fake, RunMode::eval, nullptr, &cache_fake);
        const double inv_m = 1.0 / 64.0;
        Mat g_real(1, 64), g_fake(1, 64);
        for (int c = 0; c < 64; ++c) {
            g_real(0, c) = -inv_m / clamp_prob(d_real(0, c));
            g_fake(0, c) = inv_m / (1.0 - clamp_prob(d_fake(0, c)));
        }
        MlpGrads grads = zero_grads(probe.discriminator);
        backward(probe.discriminator, cache_real, g_real, &grads);
        backward(probe.discriminator, cache_fake, g_fake, &grads);
        // Plain gradient ascent step (grads hold -dT_D).
        for (std::size_t i = 0; i < probe.discriminator.layers.size(); ++i) {
            for (std::size_t k = 0; k < probe.discriminator.layers[i].weights.size(); ++k)
                probe.discriminator.layers[i].weights.data()[k] -= 1e-6 * grads.dweights[i].data()[k];
            for (std::size_t k = 0; k < probe.discriminator.layers[i].bias.size(); ++k)
                probe.discriminator.layers[i].bias[k] -= 1e-6 * grads.dbias[i][k];
        }
        REQUIRE(disc_loss(probe.generator, probe.discriminator, xb, zb) >= td_before - 1e-12);
    }

    // And one generator descent step must not increase T_G.
    const double tg_before =
        gen_loss(model.generator, model.discriminator, model.encoder, xb, zb, cfg.lambda1, cfg.lambda2);
    {
        GanModel probe = model;
        ForwardCache cache_g1;
        const Mat fake = forward(probe.generator, zb, RunMode::eval, nullptr, &cache_g1);
        ForwardCache cache_d1;
        const Mat d_fake = forward(probe.discriminator, fake, RunMode::eval, nullptr, &cache_d1);
        const Mat code = forward(probe.encoder, xb, RunMode::eval);
        ForwardCache cache_g2;
        const Mat recon = forward(probe.generator, code, RunMode::eval, nullptr, &cache_g2);
        ForwardCache cache_d2;
        const Mat d_recon = forward(probe.discriminator, recon, RunMode::eval, nullptr, &cache_d2);
        const double inv_m = 1.0 / 64.0;
        MlpGrads grads = zero_grads(probe.generator);
        Mat gd(1, 64);
        for (int c = 0; c < 64; ++c)
            gd(0, c) = -inv_m / clamp_prob(d_fake(0, c));
        const Mat gx = backward(probe.discriminator, cache_d1, gd, nullptr);
        backward(probe.generator, cache_g1, gx, &grads);
        Mat gd2(1, 64);
        for (int c = 0; c < 64; ++c)
            gd2(0, c) = cfg.lambda2 * inv_m / clamp_prob(d_recon(0, c));
        Mat gxr = backward(probe.discriminator, cache_d2, gd2, nullptr);
        for (std::size_t i = 0; i < gxr.size(); ++i)
            gxr.data()[i] += 2.0 * cfg.lambda1 * inv_m * (recon.data()[i] - xb.data()[i]);
        backward(probe.generator, cache_g2, gxr, &grads);
        for (std::size_t i = 0; i < probe.generator.layers.size(); ++i) {
            for (std::size_t k = 0; k < probe.generator.layers[i].weights.size(); ++k)
                probe.generator.layers[i].weights.data()[k] -= 1e-6 * grads.dweights[i].data()[k];
            for (std::size_t k = 0; k < probe.generator.layers[i].bias.size(); ++k)
                probe.generator.layers[i].bias[k] -= 1e-6 * grads.dbias[i][k];
        }
        REQUIRE(gen_loss(probe.generator, probe.discriminator, probe.encoder, xb, zb, cfg.lambda1,
                         cfg.lambda2) <= tg_before + 1e-12);
    }
}

TEST_CASE("training is deterministic per seed and keeps finite losses") {
    Rng data_rng(20);
    Mat x = two_mode_data(512, data_rng);
    GanConfig cfg = toy_config();
    cfg.epochs = 120;
    GanModel a = train_gan_features(x, cfg);
    GanModel b = train_gan_features(x, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        REQUIRE(a.history[i].loss_d == b.history[i].loss_d);
        REQUIRE(a.history[i].loss_g == b.history[i].loss_g);
        REQUIRE(a.history[i].loss_e == b.history[i].loss_e);
        REQUIRE(std::isfinite(a.history[i].loss_d));
        REQUIRE(std::isfinite(a.history[i].loss_g));
        REQUIRE(std::isfinite(a.history[i].loss_e));
    }
}

TEST_CASE("poisoned inputs trip the divergence guard") {
    Rng data_rng(22);
    Mat x = two_mode_data(64, data_rng);
    x(0, 3) = std::numeric_limits<double>::quiet_NaN();
    GanConfig cfg = toy_config();
    cfg.epochs = 5;
    REQUIRE_THROWS_AS(train_gan_features(x, cfg), std::runtime_error);
}

TEST_CASE("regularized training covers both toy modes") {
    Rng data_rng(30);
    Mat x = two_mode_data(2000, data_rng);
    GanConfig cfg = toy_config();
    cfg.epochs = 2000;
    GanModel model = train_gan_features(x, cfg);

    Rng rng(77);
    Mat z(2, 1000);
    for (auto& v : z.data())
        v = rng.normal();
    const Mat samples = forward(model.generator, z, RunMode::eval);
    REQUIRE(minority_share(samples) >= 0.20);
}

TEST_CASE("generated samples de-normalize into the feasible parameter set") {
    ScenarioSpec spec;
    spec.path_count = 2;
    spec.user_count = 500;
    spec.seed = 31;
    Dataset ds = generate(spec);
    GanConfig cfg;
    cfg.latent_dim = 3;
    cfg.feature_dim = 6;
    cfg.generator_hidden = {8, 8};
    cfg.encoder_hidden = {8, 8};
    cfg.discriminator_hidden = {8, 4};
    cfg.batch_size = 64;
    cfg.epochs = 100;
    cfg.seed = 5;
    GanModel model = train_gan(ds, cfg);
    REQUIRE(model.scaler_valid);

    Rng rng(41);
    for (int draw = 0; draw < 200; ++draw) {
        Vec z = rng.normal_vec(3);
        const Vec feat = forward_vec(model.generator, z);
        const ParamTriple t = from_features(feat, model.scaler);
        for (std::size_t l = 0; l < t.alpha.size(); ++l) {
            REQUIRE(t.alpha[l] > 0.0);
            REQUIRE(t.tau[l] >= 0.0);
            REQUIRE(t.theta[l] >= 0.0);
            REQUIRE(t.theta[l] <= kTwoPi);
        }
    }
}

TEST_CASE("checkpoints are written at the configured cadence") {
    Rng data_rng(51);
    Mat x = two_mode_data(128, data_rng);
    GanConfig cfg = toy_config();
    cfg.epochs = 10;
    cfg.checkpoint_every = 5;
    const auto path = std::filesystem::temp_directory_path() / "fdmimo_gan_cadence.json";
    cfg.checkpoint_path = path.string();
    std::filesystem::remove(path);
    GanModel model = train_gan_features(x, cfg);
    REQUIRE(std::filesystem::exists(path));
    GanModel back = load_gan(path.string());
    REQUIRE(back.generator.layers.size() == model.generator.layers.size());
    std::filesystem::remove(path);

    cfg.checkpoint_path.clear();
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("diagnostics report collapse, chance accuracy and full histograms") {
    // A constant generator has zero pairwise distance.
    GanModel collapsed;
    collapsed.config = toy_config();
    collapsed.generator = scalar_net(0.0, 0.4, Activation::identity, 2);
    {
        // widen generator output to 2 dims
        Layer layer;
        layer.weights = Mat(2, 2, 0.0);
        layer.bias = {0.4, -0.2};
        layer.act = Activation::identity;
        collapsed.generator.layers.clear();
        collapsed.generator.layers.push_back(layer);
    }
    Rng rng(41);
    collapsed.discriminator = make_mlp(2, {4}, 1, Activation::leaky_relu, Activation::sigmoid, 0.0, rng);
    collapsed.encoder = make_mlp(2, {4}, 2, Activation::leaky_relu, Activation::identity, 0.0, rng);

    Rng data_rng(42);
    Mat heldout = two_mode_data(200, data_rng);
    GanDiagnostics diag = diagnose_gan(collapsed, heldout, 50, 10, Rng(1));
    REQUIRE(diag.mean_pairwise_distance == Catch::Approx(0.0).margin(1e-12));
    for (const auto& hist : diag.histograms) {
        int total = 0;
        for (int c : hist)
            total += c;
        REQUIRE(total == diag.sample_count);
    }

    // Untrained discriminators sit near chance on average across seeds.
    double acc_sum = 0.0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Rng init(1000 + s);
        GanModel fresh;
        fresh.config = toy_config();
        fresh.generator = make_mlp(2, {8}, 2, Activation::leaky_relu, Activation::tanh, 0.0, init);
        fresh.encoder = make_mlp(2, {8}, 2, Activation::leaky_relu, Activation::identity, 0.0, init);
        fresh.discriminator = make_mlp(2, {8}, 1, Activation::leaky_relu, Activation::sigmoid, 0.0, init);
        GanDiagnostics d = diagnose_gan(fresh, heldout, 200, 10, Rng(2000 + s));
        acc_sum += d.d_accuracy;
    }
    REQUIRE(acc_sum / seeds == Catch::Approx(0.5).margin(0.1));
}

TEST_CASE("checkpoints round-trip through json") {
    Rng data_rng(50);
    Mat x = two_mode_data(256, data_rng);
    GanConfig cfg = toy_config();
    cfg.epochs = 50;
    GanModel model = train_gan_features(x, cfg);
    model.scaler_valid = true;
    model.scaler.gain_log10 = {-2.5, 0.5};
    model.scaler.sample_time_s = 5e-8;

    const auto path = std::filesystem::temp_directory_path() / "fdmimo_gan_ckpt.json";
    save_gan(model, path.string());
    GanModel back = load_gan(path.string());
    REQUIRE(back.generator.layers.size() == model.generator.layers.size());
    for (std::size_t i = 0; i < model.generator.layers.size(); ++i) {
        REQUIRE(back.generator.layers[i].weights == model.generator.layers[i].weights);
        REQUIRE(back.generator.layers[i].bias == model.generator.layers[i].bias);
    }
    REQUIRE(back.scaler_valid);
    REQUIRE(back.scaler.gain_log10.lo == model.scaler.gain_log10.lo);
    REQUIRE(config_hash(back.config) == config_hash(model.config));

    Rng z(3);
    Vec probe = z.normal_vec(2);
    REQUIRE(forward_vec(back.generator, probe) == forward_vec(model.generator, probe));
    std::filesystem::remove(path);
}

TEST_CASE("history csv has the expected header and row count") {
    std::vector<GanHistoryRow> history = {{0, -1.0, 2.0, 0.5, 0.5}, {1, -0.9, 1.9, 0.4, 0.55}};
    const auto path = std::filesystem::temp_directory_path() / "fdmimo_gan_hist.csv";
    write_history_csv(history, path.string());
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "epoch,t_d,t_g,t_e,d_accuracy");
    int rows = 0;
    while (std::getline(in, line))
        rows += !line.empty();
    REQUIRE(rows == 2);
    std::filesystem::remove(path);
}
