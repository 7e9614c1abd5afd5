// Scaled-down convolutional scorer over per-pair bit planes.
//
// Input rows are (sample, pair, bit position) with one channel per feature
// word; convolutions run circularly over the 16 bit positions of each pair.
// Layout: parallel kernel-1 and kernel-5 stems, residual blocks of two
// kernel-k convolutions, then dense d1 -> d2 -> 1 with a sigmoid output.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "simeck/cipher.hpp"
#include "simeck/rng.hpp"

namespace simeck::nn {

inline constexpr unsigned kPositions = 16;

struct Architecture {
    unsigned pairs = 8;
    unsigned words = 8;
    unsigned filters = 8;
    unsigned res_blocks = 2;
    unsigned res_kernel = 3;
    unsigned dense1 = 64;
    unsigned dense2 = 16;

    unsigned channels() const noexcept { return 2 * filters; }
    unsigned flat_width() const noexcept { return pairs * kPositions * channels(); }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Offsets of every weight and bias block inside the flat parameter vector.
struct ParameterLayout {
    struct Block {
        std::size_t weight = 0;
        std::size_t bias = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
    };
    Block stem1, stem5;
    std::vector<Block> res_a, res_b;
    Block dense1, dense2, out;
    std::size_t total = 0;

    explicit ParameterLayout(const Architecture& a)
    {
        auto add = [&](Eigen::Index rows, Eigen::Index cols) {
            Block b;
            b.rows = rows;
            b.cols = cols;
            b.weight = total;
            total += static_cast<std::size_t>(rows * cols);
            b.bias = total;
            total += static_cast<std::size_t>(cols);
            return b;
        };
        const Eigen::Index c = a.channels();
        stem1 = add(a.words, a.filters);
        stem5 = add(5 * a.words, a.filters);
        for (unsigned i = 0; i < a.res_blocks; ++i) {
            res_a.push_back(add(a.res_kernel * c, c));
            res_b.push_back(add(a.res_kernel * c, c));
        }
        dense1 = add(a.flat_width(), a.dense1);
        dense2 = add(a.dense1, a.dense2);
        out = add(a.dense2, 1);
    }

    std::vector<Block> weight_blocks() const
    {
        std::vector<Block> all{stem1, stem5};
        for (std::size_t i = 0; i < res_a.size(); ++i) {
            all.push_back(res_a[i]);
            all.push_back(res_b[i]);
        }
        all.insert(all.end(), {dense1, dense2, out});
        return all;
    }
};

template <class Scalar>
class Network {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    explicit Network(const Architecture& arch) : arch_(arch), layout_(arch), params_(Vec::Zero(layout_.total))
    {
        if (arch.pairs == 0 || arch.words == 0 || arch.filters == 0 || arch.res_kernel % 2 == 0 || arch.dense1 == 0 ||
            arch.dense2 == 0)
            throw std::invalid_argument("Network: invalid architecture");
    }

    const Architecture& architecture() const noexcept { return arch_; }
    const ParameterLayout& layout() const noexcept { return layout_; }
    Vec& parameters() noexcept { return params_; }
    const Vec& parameters() const noexcept { return params_; }

    /// Glorot-uniform weights, zero biases.
    void initialize(Rng& rng)
    {
        params_.setZero();
        for (const auto& b : layout_.weight_blocks()) {
            const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
            for (Eigen::Index i = 0; i < b.rows * b.cols; ++i)
                params_[static_cast<Eigen::Index>(b.weight) + i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * limit);
        }
    }

    /// Bit-plane encoding of `count` samples, each pairs * words feature words.
    /// Row (sample, pair, i) holds bit 15 - i of every word.
    Mat encode(std::span<const Word> words, std::size_t count) const
    {
        const std::size_t per_sample = std::size_t{arch_.pairs} * arch_.words;
        if (words.size() != count * per_sample)
            throw std::invalid_argument("Network::encode: word count does not match architecture");
        Mat x(static_cast<Eigen::Index>(count * arch_.pairs * kPositions), arch_.words);
        for (std::size_t g = 0; g < count * arch_.pairs; ++g)
            for (unsigned w = 0; w < arch_.words; ++w) {
                const Word v = words[g * arch_.words + w];
                for (unsigned i = 0; i < kPositions; ++i)
                    x(static_cast<Eigen::Index>(g * kPositions + i), w) = static_cast<Scalar>((v >> (15 - i)) & 1U);
            }
        return x;
    }

    Vec forward(const Mat& input) const
    {
        Cache cache;
        return run_forward(input, cache);
    }

    /// Mean squared error plus l2 * sum of squared kernel weights; fills grad.
    Scalar loss_and_gradient(const Mat& input, const Vec& targets, Scalar l2, Vec& grad) const
    {
        Cache cache;
        const Vec y = run_forward(input, cache);
        const auto batch = y.size();
        grad = Vec::Zero(params_.size());

        Scalar loss = (y - targets).squaredNorm() / static_cast<Scalar>(batch);
        for (const auto& b : layout_.weight_blocks()) {
            const auto w = params_.segment(static_cast<Eigen::Index>(b.weight), b.rows * b.cols);
            loss += l2 * w.squaredNorm();
            grad.segment(static_cast<Eigen::Index>(b.weight), b.rows * b.cols) = Scalar(2) * l2 * w;
        }

        // Output sigmoid and MSE.
        Mat d_out = ((y - targets).array() * Scalar(2) / static_cast<Scalar>(batch) * y.array() *
                     (Scalar(1) - y.array()))
                        .matrix();
        Mat d_d2 = dense_backward(layout_.out, cache.d2, d_out, grad);
        d_d2 = (cache.d2.array() > Scalar(0)).select(d_d2, Scalar(0));
        Mat d_d1 = dense_backward(layout_.dense2, cache.d1, d_d2, grad);
        d_d1 = (cache.d1.array() > Scalar(0)).select(d_d1, Scalar(0));
        Mat d_flat = dense_backward(layout_.dense1, cache.flat(), d_d1, grad);

        Mat d_h = Eigen::Map<const Mat>(d_flat.data(), cache.h.back().rows(), cache.h.back().cols());
        for (std::size_t blk = arch_.res_blocks; blk-- > 0;) {
            const Mat& h_in = cache.h[blk];
            // h_out = relu(zb) + h_in
            Mat d_zb = (cache.rb[blk].array() > Scalar(0)).select(d_h, Scalar(0));
            Mat d_ra = conv_backward(layout_.res_b[blk], cache.ra[blk], arch_.res_kernel, d_zb, grad);
            Mat d_za = (cache.ra[blk].array() > Scalar(0)).select(d_ra, Scalar(0));
            d_h += conv_backward(layout_.res_a[blk], h_in, arch_.res_kernel, d_za, grad);
        }
        const Mat d_stem = (cache.h.front().array() > Scalar(0)).select(d_h, Scalar(0));
        const Eigen::Index f = arch_.filters;
        conv_backward(layout_.stem1, input, 1, d_stem.leftCols(f), grad, false);
        conv_backward(layout_.stem5, input, 5, d_stem.rightCols(f), grad, false);
        return loss;
    }

private:
    struct Cache {
        std::vector<Mat> h;   // block inputs; h.back() is the flattened activation
        std::vector<Mat> ra;  // relu(za)
        std::vector<Mat> rb;  // relu(zb)
        Mat d1, d2;
        Eigen::Map<const Mat> flat() const
        {
            const Mat& last = h.back();
            return Eigen::Map<const Mat>(last.data(), last.rows() / groups_per_flat_row, last.cols() * groups_per_flat_row);
        }
        Eigen::Index groups_per_flat_row = 1;
    };

    auto weight(const ParameterLayout::Block& b) const
    {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>(
            params_.data() + b.weight, b.rows, b.cols);
    }
    auto bias(const ParameterLayout::Block& b) const
    {
        return Eigen::Map<const RowVec>(params_.data() + b.bias, b.cols);
    }

    /// Circular im2col over each group of 16 positions.
    static Mat im2col(const Mat& h, unsigned kernel)
    {
        if (kernel == 1)
            return h;
        const Eigen::Index c = h.cols();
        const int half = static_cast<int>(kernel / 2);
        Mat cols(h.rows(), c * kernel);
        for (Eigen::Index g = 0; g < h.rows(); g += kPositions)
            for (unsigned i = 0; i < kPositions; ++i)
                for (unsigned t = 0; t < kernel; ++t) {
                    const unsigned src = (i + kPositions + t - half) % kPositions;
                    cols.block(g + i, t * c, 1, c) = h.row(g + src);
                }
        return cols;
    }

    static Mat col2im(const Mat& cols, unsigned kernel, Eigen::Index channels)
    {
        if (kernel == 1)
            return cols;
        const int half = static_cast<int>(kernel / 2);
        Mat h = Mat::Zero(cols.rows(), channels);
        for (Eigen::Index g = 0; g < cols.rows(); g += kPositions)
            for (unsigned i = 0; i < kPositions; ++i)
                for (unsigned t = 0; t < kernel; ++t) {
                    const unsigned src = (i + kPositions + t - half) % kPositions;
                    h.row(g + src) += cols.block(g + i, t * channels, 1, channels);
                }
        return h;
    }

    Mat conv(const ParameterLayout::Block& b, const Mat& h, unsigned kernel) const
    {
        Mat z = im2col(h, kernel) * weight(b);
        z.rowwise() += bias(b);
        return z;
    }

    /// Accumulates weight/bias gradients; returns d(input) when wanted.
    template <class Input, class DOut>
    Mat conv_backward(const ParameterLayout::Block& b, const Input& h, unsigned kernel, const DOut& d_out, Vec& grad,
                      bool want_input = true) const
    {
        const Mat cols = im2col(h, kernel);
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> gw(grad.data() + b.weight, b.rows, b.cols);
        gw.noalias() += cols.transpose() * d_out;
        Eigen::Map<RowVec>(grad.data() + b.bias, b.cols) += d_out.colwise().sum();
        if (!want_input)
            return {};
        return col2im(d_out * weight(b).transpose(), kernel, h.cols());
    }

    template <class Input>
    Mat dense_backward(const ParameterLayout::Block& b, const Input& x, const Mat& d_out, Vec& grad) const
    {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> gw(grad.data() + b.weight, b.rows, b.cols);
        gw.noalias() += x.transpose() * d_out;
        Eigen::Map<RowVec>(grad.data() + b.bias, b.cols) += d_out.colwise().sum();
        return d_out * weight(b).transpose();
    }

    Vec run_forward(const Mat& input, Cache& cache) const
    {
        if (input.cols() != static_cast<Eigen::Index>(arch_.words) ||
            input.rows() % static_cast<Eigen::Index>(arch_.pairs * kPositions) != 0)
            throw std::invalid_argument("Network: input shape does not match architecture");
        const Eigen::Index f = arch_.filters;
        Mat h(input.rows(), 2 * f);
        h.leftCols(f) = conv(layout_.stem1, input, 1);
        h.rightCols(f) = conv(layout_.stem5, input, 5);
        h = h.cwiseMax(Scalar(0));
        cache.h.push_back(std::move(h));
        for (unsigned blk = 0; blk < arch_.res_blocks; ++blk) {
            const Mat& h_in = cache.h.back();
            Mat ra = conv(layout_.res_a[blk], h_in, arch_.res_kernel).cwiseMax(Scalar(0));
            Mat rb = conv(layout_.res_b[blk], ra, arch_.res_kernel).cwiseMax(Scalar(0));
            Mat h_out = rb + h_in;
            cache.ra.push_back(std::move(ra));
            cache.rb.push_back(std::move(rb));
            cache.h.push_back(std::move(h_out));
        }
        cache.groups_per_flat_row = static_cast<Eigen::Index>(arch_.pairs * kPositions);
        const auto flat = cache.flat();
        cache.d1 = flat * weight(layout_.dense1);
        cache.d1.rowwise() += bias(layout_.dense1);
        cache.d1 = cache.d1.cwiseMax(Scalar(0));
        cache.d2 = cache.d1 * weight(layout_.dense2);
        cache.d2.rowwise() += bias(layout_.dense2);
        cache.d2 = cache.d2.cwiseMax(Scalar(0));
        Mat z = cache.d2 * weight(layout_.out);
        z.rowwise() += bias(layout_.out);
        return (Scalar(1) / (Scalar(1) + (-z.col(0).array()).exp())).matrix();
    }

    Architecture arch_;
    ParameterLayout layout_;
    Vec params_;
};

}  // namespace simeck::nn
