#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "simeck/errors.hpp"
#include "simeck/neural.hpp"

using namespace simeck;

namespace {

nn::Architecture tiny(unsigned pairs)
{
    nn::Architecture a;
    a.pairs = pairs;
    a.filters = 4;
    a.res_blocks = 1;
    a.dense1 = 16;
    a.dense2 = 8;
    return a;
}

Dataset small_data(unsigned rounds, unsigned m, std::uint64_t count, std::uint64_t seed)
{
    DatasetSpec s;
    s.rounds = rounds;
    s.m = m;
    s.count = count;
    s.seed = seed;
    return generate_dataset(s);
}

}  // namespace

TEST_CASE("cyclic learning rate")
{
    CHECK(cyclic_learning_rate(0, 1e-4, 2e-3, 9) == doctest::Approx(2e-3));
    CHECK(cyclic_learning_rate(9, 1e-4, 2e-3, 9) == doctest::Approx(1e-4));
    CHECK(cyclic_learning_rate(10, 1e-4, 2e-3, 9) == doctest::Approx(2e-3));
    CHECK(cyclic_learning_rate(4, 1e-4, 2e-3, 9) == doctest::Approx(1e-4 + 5.0 / 9 * 1.9e-3));
    for (std::uint64_t i = 0; i < 40; ++i) {
        const double l = cyclic_learning_rate(i, 1e-4, 2e-3, 9);
        CHECK(l >= 1e-4 - 1e-15);
        CHECK(l <= 2e-3 + 1e-15);
    }
}

TEST_CASE("gradient check")
{
    nn::Architecture a = tiny(2);
    a.res_blocks = 2;
    nn::Network<double> net(a);
    Rng rng(17);
    net.initialize(rng);
    // nonzero biases so every path carries gradient
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i)
        net.parameters()[i] += 0.05 * (rng.uniform() - 0.5);

    const auto data = small_data(3, 2, 12, 4);
    const auto x = net.encode(data.words, data.size());
    Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
        y[static_cast<Eigen::Index>(i)] = data.labels[i];

    const double l2 = 1e-3;
    Eigen::VectorXd grad;
    net.loss_and_gradient(x, y, l2, grad);
    Eigen::VectorXd scratch;
    int checked = 0, within = 0;
    for (int t = 0; t < 100; ++t) {
        const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(net.parameters().size())));
        const double h = 1e-6, saved = net.parameters()[k];
        net.parameters()[k] = saved + h;
        const double up = net.loss_and_gradient(x, y, l2, scratch);
        net.parameters()[k] = saved - h;
        const double down = net.loss_and_gradient(x, y, l2, scratch);
        net.parameters()[k] = saved;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(grad[k]), 1e-7});
        ++checked;
        within += std::abs(numeric - grad[k]) / denom <= 1e-3;
    }
    CHECK(checked == 100);
    CHECK(within == 100);
}

TEST_CASE("forward pass on zero input is finite")
{
    const auto model = NeuralModel::initialize(tiny(4), 3);
    nn::Network<float> net(model.arch);
    std::copy(model.weights.begin(), model.weights.end(), net.parameters().data());
    std::vector<Word> zeros(3 * 4 * kFeatureWords, 0);
    const auto y = net.forward(net.encode(zeros, 3));
    CHECK(y.allFinite());
    CHECK_THROWS_AS(net.encode(zeros, 2), std::invalid_argument);
}

TEST_CASE("toy training learns a short-round distinguisher")
{
    const auto data = small_data(3, 2, 12000, 21);
    const auto val = small_data(3, 2, 4000, 22);
    TrainConfig cfg;
    cfg.arch = tiny(2);
    cfg.epochs = 4;
    cfg.batch_size = 200;
    cfg.seed = 5;
    int epochs_seen = 0;
    cfg.on_epoch = [&](const EpochReport&) { ++epochs_seen; };
    const auto model = train_basic(data, val, cfg);
    CHECK(epochs_seen == 4);
    CHECK(model.meta.rounds == 3);
    CHECK(model.meta.validation_accuracy > 0.9);
    CHECK(model.meta.better_than_random);

    const NeuralDistinguisher d(model);
    const auto ev = evaluate(d, val);
    CHECK(ev.acc == doctest::Approx(model.meta.validation_accuracy).epsilon(1e-9));

    // label-shuffled control
    auto shuffled = small_data(3, 2, 20000, 23);
    Rng rng(1);
    for (auto& l : shuffled.labels)
        l = static_cast<std::uint8_t>(rng.coin());
    const auto control = evaluate(d, shuffled);
    CHECK(control.acc >= 0.49);
    CHECK(control.acc <= 0.51);

    // persistence
    const auto path = std::filesystem::temp_directory_path() / "simeck_model.sdnm";
    save_model(model, path);
    const auto back = load_model(path);
    CHECK(back == model);
    CHECK(evaluate(NeuralDistinguisher(back), val).acc == ev.acc);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        f.put('\x09');
    }
    CHECK_THROWS_AS(load_model(path), FormatError);
    save_model(model, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(load_model(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("divergence raises a training error")
{
    const auto data = small_data(3, 1, 400, 2);
    TrainConfig cfg;
    cfg.arch = tiny(1);
    cfg.epochs = 2;
    cfg.batch_size = 100;
    cfg.lr_low = cfg.lr_high = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train_basic(data, cfg), TrainingError);
}

TEST_CASE("mismatched shapes are rejected")
{
    const auto data = small_data(3, 2, 100, 2);
    TrainConfig cfg;
    cfg.arch = tiny(4);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_basic(data, cfg), std::invalid_argument);
    CHECK(better_than_random(0.52, 100000));
    CHECK_FALSE(better_than_random(0.502, 100000));
}
