#include "simeck/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "simeck/binary_io.hpp"
#include "simeck/errors.hpp"

namespace simeck {

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::size_t kScoreBatch = 1024;

using Net = nn::Network<float>;

Net make_network(const NeuralModel& model)
{
    Net net(model.arch);
    if (model.weights.size() != static_cast<std::size_t>(net.parameters().size()))
        throw std::invalid_argument("NeuralModel: weight count does not match architecture");
    std::copy(model.weights.begin(), model.weights.end(), net.parameters().data());
    return net;
}

std::vector<float> weights_of(const Net& net)
{
    return {net.parameters().data(), net.parameters().data() + net.parameters().size()};
}

// Gathers the feature words of samples idx[b, e) into one contiguous buffer.
std::vector<Word> gather(const Dataset& data, std::span<const std::size_t> idx)
{
    const std::size_t stride = std::size_t{data.m} * kFeatureWords;
    std::vector<Word> out(idx.size() * stride);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto s = data.sample_words(idx[i]);
        std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

struct ValidationResult {
    double loss = 0;
    double accuracy = 0;
};

ValidationResult validate(const Net& net, const Dataset& data)
{
    double loss = 0;
    std::size_t correct = 0;
    const std::size_t stride = std::size_t{data.m} * kFeatureWords;
    for (std::size_t b = 0; b < data.size(); b += kScoreBatch) {
        const std::size_t n = std::min(kScoreBatch, data.size() - b);
        const auto x = net.encode(std::span<const Word>(data.words.data() + b * stride, n * stride), n);
        const auto y = net.forward(x);
        for (std::size_t i = 0; i < n; ++i) {
            const double label = data.labels[b + i];
            const double d = y[static_cast<Eigen::Index>(i)] - label;
            loss += d * d;
            correct += (y[static_cast<Eigen::Index>(i)] > 0.5f) == (label > 0.5);
        }
    }
    const double n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(correct) / n};
}

void check_dataset(const Dataset& data, const nn::Architecture& arch, const char* what)
{
    if (data.size() == 0)
        throw std::invalid_argument(std::string("training: empty ") + what + " set");
    if (data.m != arch.pairs || arch.words != kFeatureWords)
        throw std::invalid_argument(std::string("training: ") + what + " set m=" + std::to_string(data.m) +
                                    " does not match network pairs=" + std::to_string(arch.pairs));
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end)
{
    Dataset out;
    out.rounds = data.rounds;
    out.m = data.m;
    out.input_diff = data.input_diff;
    out.seed = data.seed;
    const std::size_t stride = std::size_t{data.m} * kFeatureWords;
    out.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      data.labels.begin() + static_cast<std::ptrdiff_t>(end));
    out.words.assign(data.words.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                     data.words.begin() + static_cast<std::ptrdiff_t>(end * stride));
    return out;
}

}  // namespace

double cyclic_learning_rate(std::uint64_t epoch, double alpha, double beta, unsigned n)
{
    if (n == 0)
        return beta;
    // (n - i) mod (n + 1), taken non-negative
    const std::uint64_t period = std::uint64_t{n} + 1;
    const std::uint64_t k = (n + period - epoch % period) % period;
    return alpha + static_cast<double>(k) / n * (beta - alpha);
}

bool better_than_random(double accuracy, std::size_t n)
{
    if (n == 0)
        return false;
    return accuracy > 0.5 + 3.0 * std::sqrt(0.25 / static_cast<double>(n));
}

NeuralModel NeuralModel::initialize(const nn::Architecture& arch, std::uint64_t seed)
{
    Net net(arch);
    Rng rng(seed);
    net.initialize(rng);
    NeuralModel model;
    model.arch = arch;
    model.weights = weights_of(net);
    model.meta.m = arch.pairs;
    model.meta.seed = seed;
    return model;
}

NeuralDistinguisher::NeuralDistinguisher(NeuralModel model) : model_(std::move(model)), net_(make_network(model_)) {}

std::string NeuralDistinguisher::id() const
{
    return "nn:" + model_.meta.scheme + ":r" + std::to_string(model_.meta.rounds) + ":m" +
           std::to_string(model_.arch.pairs);
}

double NeuralDistinguisher::score(std::span<const CipherPair> sample) const
{
    double out = 0;
    score_batch(sample, static_cast<unsigned>(sample.size()), std::span<double>(&out, 1));
    return out;
}

void NeuralDistinguisher::score_batch(std::span<const CipherPair> pairs, unsigned m, std::span<double> out) const
{
    if (m != model_.arch.pairs || pairs.size() != out.size() * m)
        throw std::invalid_argument("NeuralDistinguisher: sample size does not match the network");
    std::vector<Word> words;
    for (std::size_t b = 0; b < out.size(); b += kScoreBatch) {
        const std::size_t n = std::min(kScoreBatch, out.size() - b);
        words.clear();
        for (std::size_t j = b * m; j < (b + n) * m; ++j) {
            const auto f = derive_features(pairs[j]);
            words.insert(words.end(), f.begin(), f.end());
        }
        const auto y = net_.forward(net_.encode(words, n));
        for (std::size_t i = 0; i < n; ++i)
            out[b + i] = std::clamp(static_cast<double>(y[static_cast<Eigen::Index>(i)]), 0.0, 1.0);
    }
}

NeuralModel train_basic(const Dataset& train, const Dataset& validation, const TrainConfig& cfg,
                        std::optional<NeuralModel> start)
{
    const nn::Architecture arch = start ? start->arch : cfg.arch;
    check_dataset(train, arch, "training");
    check_dataset(validation, arch, "validation");
    if (cfg.batch_size == 0 || cfg.epochs == 0)
        throw std::invalid_argument("training: batch size and epochs must be positive");

    Net net = start ? make_network(*start) : make_network(NeuralModel::initialize(arch, cfg.seed));
    auto& theta = net.parameters();
    const Eigen::Index n_params = theta.size();
    Net::Vec m1 = Net::Vec::Zero(n_params), m2 = Net::Vec::Zero(n_params), grad;
    constexpr float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-7f;
    std::uint64_t step = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    NeuralModel best;
    best.arch = arch;
    double best_loss = std::numeric_limits<double>::infinity();

    for (unsigned epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = static_cast<float>(cyclic_learning_rate(epoch, cfg.lr_low, cfg.lr_high, cfg.lr_cycle));
        Rng shuffle = Rng::substream(cfg.seed, 0x5eed0000ULL + epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - b);
            const std::span<const std::size_t> idx(order.data() + b, n);
            const auto x = net.encode(gather(train, idx), n);
            Net::Vec y(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i)
                y[static_cast<Eigen::Index>(i)] = static_cast<float>(train.labels[idx[i]]);
            const float loss = net.loss_and_gradient(x, y, static_cast<float>(cfg.l2), grad);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches) + " (loss " + std::to_string(loss) + ", lr " +
                                    std::to_string(lr) + ")");
            ++step;
            m1 = beta1 * m1 + (1 - beta1) * grad;
            m2 = beta2 * m2 + (1 - beta2) * grad.cwiseProduct(grad);
            const float c1 = 1 - std::pow(beta1, static_cast<float>(step));
            const float c2 = 1 - std::pow(beta2, static_cast<float>(step));
            theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
            loss_sum += loss;
            ++batches;
        }

        const auto v = validate(net, validation);
        if (!std::isfinite(v.loss))
            throw TrainingError("validation loss is not finite after epoch " + std::to_string(epoch));
        if (cfg.on_epoch)
            cfg.on_epoch({epoch, lr, loss_sum / static_cast<double>(batches), v.loss, v.accuracy});
        if (v.loss < best_loss) {
            best_loss = v.loss;
            best.weights = weights_of(net);
            best.meta.validation_loss = v.loss;
            best.meta.validation_accuracy = v.accuracy;
        }
    }

    best.meta.scheme = start ? start->meta.scheme : "basic";
    best.meta.rounds = train.rounds;
    best.meta.m = train.m;
    best.meta.input_diff = train.input_diff;
    best.meta.epochs = (start ? start->meta.epochs : 0) + cfg.epochs;
    best.meta.seed = cfg.seed;
    best.meta.better_than_random = better_than_random(best.meta.validation_accuracy, validation.size());
    return best;
}

NeuralModel train_basic(const Dataset& data, const TrainConfig& cfg)
{
    if (data.size() < 2)
        throw std::invalid_argument("training: need at least two samples");
    if (!(cfg.validation_fraction > 0 && cfg.validation_fraction < 1))
        throw std::invalid_argument("training: validation fraction must lie in (0, 1)");
    auto held = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(data.size())));
    held = std::clamp<std::size_t>(held, 1, data.size() - 1);
    // Samples are already shuffled at generation, so a tail split is unbiased.
    const std::size_t cut = data.size() - held;
    return train_basic(slice(data, 0, cut), slice(data, cut, data.size()), cfg);
}

NeuralModel train_staged(const NeuralModel& base, const StagedConfig& cfg)
{
    if (cfg.rounds < 4)
        throw std::invalid_argument("train_staged: need at least 4 target rounds");
    if (base.meta.rounds + 1 != cfg.rounds)
        throw std::invalid_argument("train_staged: base model must target rounds - 1");

    auto data = [&](unsigned rounds, StateDiff diff, std::uint64_t count, std::uint64_t stream) {
        DatasetSpec s;
        s.rounds = rounds;
        s.m = base.arch.pairs;
        s.count = count;
        s.input_diff = diff;
        s.seed = Rng::substream(cfg.stage.seed, stream)();
        return generate_dataset(s, cfg.threads);
    };

    TrainConfig c = cfg.stage;
    c.arch = base.arch;
    NeuralModel model = base;

    c.epochs = cfg.epochs_stage1;
    c.lr_high = 2e-3;
    c.lr_low = 1e-4;
    model = train_basic(data(cfg.rounds - 3, cfg.stage1_diff, cfg.samples, 1),
                        data(cfg.rounds - 3, cfg.stage1_diff, cfg.validation_samples, 2), c, model);

    const Dataset train = data(cfg.rounds, base.meta.input_diff, cfg.samples, 3);
    const Dataset val = data(cfg.rounds, base.meta.input_diff, cfg.validation_samples, 4);
    c.epochs = cfg.epochs_stage2;
    c.lr_high = 1e-4;
    c.lr_low = 1e-5;
    model = train_basic(train, val, c, model);

    c.epochs = cfg.epochs_stage3;
    c.lr_high = c.lr_low = 1e-5;
    model = train_basic(train, val, c, model);

    model.meta.scheme = "staged";
    model.meta.epochs = base.meta.epochs + cfg.epochs_stage1 + cfg.epochs_stage2 + cfg.epochs_stage3;
    return model;
}

void save_model(const NeuralModel& model, const std::filesystem::path& path)
{
    const nn::ParameterLayout layout(model.arch);
    if (model.weights.size() != layout.total)
        throw std::invalid_argument("save_model: weight count does not match architecture");
    io::ChecksumWriter w(path);
    w.magic("SDNM");
    w.u32(kModelVersion);
    const auto& a = model.arch;
    // layer list: stem widths, residual blocks, dense head
    w.u32(a.pairs);
    w.u32(a.words);
    w.u32(a.filters);
    w.u32(a.res_blocks);
    w.u32(a.res_kernel);
    w.u32(a.dense1);
    w.u32(a.dense2);
    const auto& m = model.meta;
    w.string(m.scheme);
    w.u32(m.rounds);
    w.u32(m.m);
    w.u32(m.input_diff.packed());
    w.u32(m.epochs);
    w.u64(m.seed);
    w.f64(m.validation_loss);
    w.f64(m.validation_accuracy);
    w.u8(m.better_than_random ? 1 : 0);
    w.u64(model.weights.size());
    for (float v : model.weights)
        w.f32(v);
    w.commit();
}

NeuralModel load_model(const std::filesystem::path& path)
{
    io::ChecksumReader r(path);
    r.expect_magic("SDNM");
    const auto version = r.u32();
    if (version != kModelVersion)
        throw FormatError(path.string() + ": unsupported model version " + std::to_string(version));
    NeuralModel model;
    auto& a = model.arch;
    a.pairs = r.u32();
    a.words = r.u32();
    a.filters = r.u32();
    a.res_blocks = r.u32();
    a.res_kernel = r.u32();
    a.dense1 = r.u32();
    a.dense2 = r.u32();
    if (a.pairs == 0 || a.pairs > 1024 || a.words != kFeatureWords || a.filters == 0 || a.filters > 1024 ||
        a.res_blocks > 64 || a.res_kernel == 0 || a.res_kernel % 2 == 0 || a.res_kernel > 15 || a.dense1 == 0 ||
        a.dense1 > 65536 || a.dense2 == 0 || a.dense2 > 65536)
        throw FormatError(path.string() + ": implausible architecture");
    auto& m = model.meta;
    m.scheme = r.string(64);
    m.rounds = r.u32();
    m.m = r.u32();
    m.input_diff = StateDiff::unpack(r.u32());
    m.epochs = r.u32();
    m.seed = r.u64();
    m.validation_loss = r.f64();
    m.validation_accuracy = r.f64();
    m.better_than_random = r.u8() != 0;
    const auto count = r.u64();
    if (count != nn::ParameterLayout(a).total || count * 4 + 4 != r.remaining())
        throw FormatError(path.string() + ": weight blob size does not match architecture");
    model.weights.resize(count);
    for (auto& v : model.weights)
        v = r.f32();
    r.verify_trailer();
    return model;
}

}  // namespace simeck
