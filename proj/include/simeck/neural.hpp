// Trainable scaled-down scorer: model container, training, persistence.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "simeck/distinguisher.hpp"
#include "simeck/network.hpp"

namespace simeck {

/// l_i = alpha + ((n - i) mod (n + 1)) / n * (beta - alpha).
double cyclic_learning_rate(std::uint64_t epoch, double alpha, double beta, unsigned n);

struct TrainingMeta {
    std::string scheme = "basic";
    unsigned rounds = 0;
    unsigned m = 0;
    StateDiff input_diff{0x0000, 0x0040};
    unsigned epochs = 0;
    std::uint64_t seed = 0;
    double validation_loss = 0;
    double validation_accuracy = 0;
    bool better_than_random = true;

    friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct NeuralModel {
    nn::Architecture arch;
    std::vector<float> weights;
    TrainingMeta meta;

    /// Randomly initialised weights for `arch`.
    static NeuralModel initialize(const nn::Architecture& arch, std::uint64_t seed);

    friend bool operator==(const NeuralModel&, const NeuralModel&) = default;
};

class NeuralDistinguisher final : public Distinguisher {
public:
    explicit NeuralDistinguisher(NeuralModel model);

    unsigned rounds() const noexcept override { return model_.meta.rounds; }
    std::string id() const override;
    unsigned native_pairs() const noexcept override { return model_.arch.pairs; }
    double score(std::span<const CipherPair> sample) const override;
    void score_batch(std::span<const CipherPair> pairs, unsigned m, std::span<double> out) const override;

    const NeuralModel& model() const noexcept { return model_; }

private:
    NeuralModel model_;
    nn::Network<float> net_;
};

struct EpochReport {
    unsigned epoch = 0;
    double learning_rate = 0;
    double train_loss = 0;
    double validation_loss = 0;
    double validation_accuracy = 0;
};

struct TrainConfig {
    nn::Architecture arch;
    unsigned epochs = 10;
    std::size_t batch_size = 5000;
    double lr_low = 1e-4;
    double lr_high = 2e-3;
    unsigned lr_cycle = 9;
    double l2 = 1e-5;
    /// Fraction of the dataset held out when no validation set is given.
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    std::function<void(const EpochReport&)> on_epoch;
};

/// Adam on MSE + L2 with the cyclic schedule; returns the epoch with the best
/// validation loss. Throws TrainingError when the loss becomes non-finite.
NeuralModel train_basic(const Dataset& train, const Dataset& validation, const TrainConfig& cfg,
                        std::optional<NeuralModel> start = std::nullopt);
NeuralModel train_basic(const Dataset& data, const TrainConfig& cfg);

struct StagedConfig {
    TrainConfig stage;  // architecture is taken from the base model
    unsigned rounds = 0;
    std::uint64_t samples = 1'000'000;
    std::uint64_t validation_samples = 100'000;
    /// Stage 1 input difference: the 3-round argmax from the base difference.
    StateDiff stage1_diff{0x0140, 0x0080};
    unsigned epochs_stage1 = 10;
    unsigned epochs_stage2 = 10;
    unsigned epochs_stage3 = 10;
    unsigned threads = default_thread_count();
};

/// Three-stage retraining of a (rounds-1)-round model into a rounds-round one.
/// Stage 1: (rounds-3)-round data at stage1_diff, lr 2e-3 -> 1e-4.
/// Stage 2: rounds-round data, lr 1e-4 -> 1e-5.  Stage 3: constant 1e-5.
NeuralModel train_staged(const NeuralModel& base, const StagedConfig& cfg);

/// acc > 0.5 + 3 sigma of a fair coin over n samples.
bool better_than_random(double accuracy, std::size_t n);

void save_model(const NeuralModel& model, const std::filesystem::path& path);
NeuralModel load_model(const std::filesystem::path& path);

}  // namespace simeck
