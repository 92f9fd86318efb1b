#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "udjfl/nn.hpp"
#include "udjfl/rng.hpp"

using namespace udjfl;

namespace {

Batch random_batch(Rng& rng, std::size_t rows, std::size_t cols, int num_classes) {
    Batch b;
    b.rows = rows;
    b.cols = cols;
    b.features.resize(rows * cols);
    b.labels.resize(rows);
    for (double& f : b.features) f = rng.uniform(-2.0, 2.0);
    for (int& y : b.labels) y = static_cast<int>(rng.below(num_classes));
    return b;
}

ModelParams random_params(Rng& rng, int in, int hid, int cls) {
    ModelParams p = init_params(rng.next_u64(), in, hid, cls);
    for (double& v : p.values) v = rng.uniform(-1.0, 1.0);
    return p;
}

// Independent dense forward oracle: plain nested loops over explicit W1/b1/W2/b2
// matrices, written without reference to the layout helpers.
std::vector<double> forward_oracle(const ModelParams& p, const Batch& b) {
    const int in = p.input_dim, hid = p.hidden_dim, cls = p.num_classes;
    std::vector<std::vector<double>> w1(in, std::vector<double>(hid));
    std::vector<double> b1(hid);
    std::vector<std::vector<double>> w2(hid, std::vector<double>(cls));
    std::vector<double> b2(cls);
    std::size_t k = 0;
    for (int i = 0; i < in; ++i)
        for (int h = 0; h < hid; ++h) w1[i][h] = p.values[k++];
    for (int h = 0; h < hid; ++h) b1[h] = p.values[k++];
    for (int h = 0; h < hid; ++h)
        for (int c = 0; c < cls; ++c) w2[h][c] = p.values[k++];
    for (int c = 0; c < cls; ++c) b2[c] = p.values[k++];

    std::vector<double> logits(b.rows * cls);
    for (std::size_t r = 0; r < b.rows; ++r) {
        std::vector<double> hidden(hid);
        for (int h = 0; h < hid; ++h) {
            double z = b1[h];
            for (int i = 0; i < in; ++i) z += b.features[r * b.cols + i] * w1[i][h];
            hidden[h] = std::max(0.0, z);
        }
        for (int c = 0; c < cls; ++c) {
            double z = b2[c];
            for (int h = 0; h < hid; ++h) z += hidden[h] * w2[h][c];
            logits[r * cls + c] = z;
        }
    }
    return logits;
}

}  // namespace

TEST(InitParams, Deterministic) {
    const ModelParams a = init_params(7, 2, 3, 2);
    const ModelParams b = init_params(7, 2, 3, 2);
    EXPECT_EQ(a.values, b.values);
}

TEST(InitParams, BiasesExactlyZero) {
    const ModelParams p = init_params(123, 2, 3, 2);
    for (int h = 0; h < 3; ++h) EXPECT_EQ(p.values[p.b1_offset() + h], 0.0);
    for (int c = 0; c < 2; ++c) EXPECT_EQ(p.values[p.b2_offset() + c], 0.0);
}

TEST(InitParams, DifferentSeedsDiffer) {
    EXPECT_NE(init_params(7, 2, 3, 2).values, init_params(8, 2, 3, 2).values);
}

TEST(InitParams, WeightsWithinGlorotBound) {
    const ModelParams p = init_params(3, 4, 5, 3);
    const double lim1 = std::sqrt(6.0 / (4 + 5));
    for (std::size_t i = 0; i < 20; ++i) ASSERT_LE(std::abs(p.values[i]), lim1);
}

TEST(InitParams, ZeroDimensionRejected) {
    EXPECT_THROW(init_params(1, 0, 3, 2), ConfigError);
    EXPECT_THROW(init_params(1, 2, 3, 0), ConfigError);
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
    ModelParams p = init_params(1, 3, 4, 2);
    std::fill(p.values.begin(), p.values.end(), 0.0);
    Batch b;
    b.rows = 2, b.cols = 3;
    b.features = {1.0, -2.0, 0.5, 0.0, 3.0, -1.0};
    b.labels = {0, 1};
    for (double v : forward(p, b)) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityChainPassesInputThrough) {
    ModelParams p = init_params(1, 1, 1, 1);
    p.values = {1.0, 0.0, 1.0, 0.0};  // W1=1, b1=0, W2=1, b2=0
    Batch b;
    b.rows = 1, b.cols = 1;
    b.features = {2.0};
    b.labels = {0};
    EXPECT_EQ(forward(p, b)[0], 2.0);
}

TEST(Forward, MatchesDenseOracle) {
    Rng rng(2024);
    for (int rep = 0; rep < 10; ++rep) {
        const int in = 2 + static_cast<int>(rng.below(4));
        const int hid = 1 + static_cast<int>(rng.below(6));
        const int cls = 2 + static_cast<int>(rng.below(4));
        ModelParams p = random_params(rng, in, hid, cls);
        Batch b = random_batch(rng, 3 + rng.below(4), in, cls);
        const auto got = forward(p, b);
        const auto want = forward_oracle(p, b);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            ASSERT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(Forward, ShapeMismatchRejected) {
    ModelParams p = init_params(1, 3, 4, 2);
    Batch b;
    b.rows = 1, b.cols = 2;
    b.features = {1.0, 2.0};
    b.labels = {0};
    EXPECT_THROW(forward(p, b), ShapeError);
}

TEST(LossAndGrad, UniformLogitsGiveLogC) {
    for (int cls : {2, 5, 10}) {
        ModelParams p = init_params(1, 3, 4, cls);
        std::fill(p.values.begin(), p.values.end(), 0.0);
        Rng rng(3);
        Batch b = random_batch(rng, 6, 3, cls);
        EXPECT_NEAR(loss_and_grad(p, b).loss, std::log(static_cast<double>(cls)), 1e-12);
    }
}

TEST(LossAndGrad, MatchesCentralFiniteDifferences) {
    Rng rng(99);
    ModelParams p = random_params(rng, 2, 3, 2);
    Batch b = random_batch(rng, 4, 2, 2);
    const LossGrad lg = loss_and_grad(p, b);
    const double eps = 1e-5;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        ModelParams plus = p, minus = p;
        plus.values[i] += eps;
        minus.values[i] -= eps;
        const double fd = (loss_and_grad(plus, b).loss - loss_and_grad(minus, b).loss) / (2 * eps);
        const double denom = std::max({std::abs(fd), std::abs(lg.grad[i]), 1e-3});
        max_rel = std::max(max_rel, std::abs(fd - lg.grad[i]) / denom);
    }
    EXPECT_LT(max_rel, 1e-4);
}

TEST(LossAndGrad, DuplicatingSamplesChangesNothing) {
    Rng rng(5);
    ModelParams p = random_params(rng, 3, 4, 3);
    Batch b = random_batch(rng, 5, 3, 3);
    Batch doubled = b;
    doubled.rows = 2 * b.rows;
    doubled.features.insert(doubled.features.end(), b.features.begin(), b.features.end());
    doubled.labels.insert(doubled.labels.end(), b.labels.begin(), b.labels.end());
    const LossGrad x = loss_and_grad(p, b);
    const LossGrad y = loss_and_grad(p, doubled);
    EXPECT_NEAR(x.loss, y.loss, 1e-12);
    for (std::size_t i = 0; i < x.grad.size(); ++i) ASSERT_NEAR(x.grad[i], y.grad[i], 1e-12);
}

TEST(LossAndGrad, RowOrderInvariant) {
    Rng rng(6);
    ModelParams p = random_params(rng, 3, 4, 3);
    Batch b = random_batch(rng, 6, 3, 3);
    Batch rev = b;
    for (std::size_t r = 0; r < b.rows; ++r) {
        const std::size_t s = b.rows - 1 - r;
        std::copy_n(b.features.data() + s * b.cols, b.cols, rev.features.data() + r * b.cols);
        rev.labels[r] = b.labels[s];
    }
    const LossGrad x = loss_and_grad(p, b);
    const LossGrad y = loss_and_grad(p, rev);
    EXPECT_NEAR(x.loss, y.loss, 1e-12);
    for (std::size_t i = 0; i < x.grad.size(); ++i) ASSERT_NEAR(x.grad[i], y.grad[i], 1e-12);
}

TEST(LossAndGrad, LossNonNegative) {
    Rng rng(77);
    for (int rep = 0; rep < 20; ++rep) {
        ModelParams p = random_params(rng, 2, 3, 3);
        Batch b = random_batch(rng, 4, 2, 3);
        EXPECT_GE(loss_and_grad(p, b).loss, 0.0);
    }
}

TEST(LossAndGrad, LabelOutOfRangeRejected) {
    ModelParams p = init_params(1, 2, 3, 2);
    Batch b;
    b.rows = 1, b.cols = 2;
    b.features = {0.1, 0.2};
    b.labels = {2};
    EXPECT_THROW(loss_and_grad(p, b), DomainError);
}

TEST(SgdEpochs, ZeroEpochsReturnsInputUnchanged) {
    Rng rng(8);
    ModelParams p = random_params(rng, 2, 3, 2);
    Batch b = random_batch(rng, 5, 2, 2);
    const ModelParams out = sgd_epochs(p, b, 0, 0.1, 2, 1);
    EXPECT_EQ(out.values, p.values);
}

TEST(SgdEpochs, FullBatchSingleEpochIsOneGradientStep) {
    Rng rng(9);
    ModelParams p = random_params(rng, 2, 3, 2);
    Batch b = random_batch(rng, 5, 2, 2);
    const double lr = 0.25;
    const ModelParams out = sgd_epochs(p, b, 1, lr, 100, 1);
    const LossGrad lg = loss_and_grad(p, b);
    for (std::size_t i = 0; i < p.values.size(); ++i)
        ASSERT_EQ(out.values[i], p.values[i] - lr * lg.grad[i]);
}

TEST(SgdEpochs, BitIdenticalReruns) {
    Rng rng(10);
    ModelParams p = random_params(rng, 3, 5, 3);
    Batch b = random_batch(rng, 13, 3, 3);
    const ModelParams a = sgd_epochs(p, b, 3, 0.1, 4, 42);
    const ModelParams c = sgd_epochs(p, b, 3, 0.1, 4, 42);
    EXPECT_EQ(a.values, c.values);
}

TEST(SgdEpochs, MatchesManualMinibatchReplay) {
    // Re-derive the documented schedule: one stream seeded with `seed`,
    // reshuffled indices per epoch, minibatches in order, last partial kept.
    Rng data_rng(11);
    ModelParams p = random_params(data_rng, 2, 3, 2);
    Batch b = random_batch(data_rng, 5, 2, 2);
    const double lr = 0.5;
    const int batch_size = 2, epochs = 2;
    const std::uint64_t seed = 77;

    ModelParams manual = p;
    Rng stream(seed);
    std::vector<std::size_t> order(b.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < epochs; ++e) {
        stream.shuffle(order);
        for (std::size_t start = 0; start < b.rows; start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, b.rows);
            Batch mini;
            mini.rows = stop - start;
            mini.cols = b.cols;
            for (std::size_t k = start; k < stop; ++k) {
                mini.features.insert(mini.features.end(), b.features.begin() + order[k] * b.cols,
                                     b.features.begin() + (order[k] + 1) * b.cols);
                mini.labels.push_back(b.labels[order[k]]);
            }
            const LossGrad lg = loss_and_grad(manual, mini);
            for (std::size_t i = 0; i < manual.values.size(); ++i)
                manual.values[i] -= lr * lg.grad[i];
        }
    }
    const ModelParams got = sgd_epochs(p, b, epochs, lr, batch_size, seed);
    EXPECT_EQ(got.values, manual.values);
}

TEST(SgdEpochs, BadHyperparametersRejected) {
    ModelParams p = init_params(1, 2, 3, 2);
    Batch b;
    b.rows = 1, b.cols = 2;
    b.features = {0.0, 0.0};
    b.labels = {0};
    EXPECT_THROW(sgd_epochs(p, b, -1, 0.1, 1, 0), ConfigError);
    EXPECT_THROW(sgd_epochs(p, b, 1, 0.0, 1, 0), ConfigError);
    EXPECT_THROW(sgd_epochs(p, b, 1, 0.1, 0, 0), ConfigError);
}

TEST(Accuracy, PerfectPredictionsScoreOne) {
    ModelParams p = init_params(1, 1, 1, 2);
    p.values = {1.0, 0.0, 1.0, -1.0, 0.0, 0.0};  // logit(class0) = relu(x), class1 = -relu(x)
    Batch b;
    b.rows = 2, b.cols = 1;
    b.features = {3.0, 5.0};
    b.labels = {0, 0};
    EXPECT_EQ(accuracy(p, b), 1.0);
}

TEST(Accuracy, ArgmaxTieBreaksTowardLowestClass) {
    ModelParams p = init_params(1, 2, 3, 4);
    std::fill(p.values.begin(), p.values.end(), 0.0);  // uniform logits, tie -> class 0
    Batch b;
    b.rows = 3, b.cols = 2;
    b.features = {1, 2, 3, 4, 5, 6};
    b.labels = {1, 2, 3};  // no class-0 labels
    EXPECT_EQ(accuracy(p, b), 0.0);
}

TEST(Accuracy, MatchesHandRecount) {
    Rng rng(33);
    ModelParams p = random_params(rng, 2, 4, 3);
    Batch b = random_batch(rng, 10, 2, 3);
    const auto logits = forward(p, b);
    int correct = 0;
    for (std::size_t r = 0; r < b.rows; ++r) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (logits[r * 3 + c] > logits[r * 3 + best]) best = c;
        if (best == b.labels[r]) ++correct;
    }
    EXPECT_EQ(accuracy(p, b), correct / 10.0);
}

TEST(Accuracy, EmptyBatchRejected) {
    ModelParams p = init_params(1, 2, 3, 2);
    Batch b;
    b.cols = 2;
    EXPECT_THROW(accuracy(p, b), DomainError);
}
