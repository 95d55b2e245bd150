#include <cstring>

#include <gtest/gtest.h>

#include "fixture_builders.hpp"
#include "test_util.hpp"
#include "xlcode/projector.hpp"

using namespace xlcode;
using namespace xlcode::projector;
using xlcode::testing::ScratchDir;

namespace {

Dataset one_d_pairs() {
    Dataset d{Eigen::MatrixXd(1, 2), Eigen::MatrixXd(1, 2)};
    d.X << 1, 2;
    d.Y << 2, 4;
    return d;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

} // namespace

TEST(Ols, OneDimensionalHandSolution) {
    auto r = ols_fit(one_d_pairs().X, one_d_pairs().Y, 0.0);
    EXPECT_NEAR(r.W(0, 0), 2.0, 1e-12);
    EXPECT_NEAR(r.b(0), 0.0, 1e-12);
    EXPECT_NEAR(r.mse, 0.0, 1e-20);
    auto ridged = ols_fit(one_d_pairs().X, one_d_pairs().Y);
    EXPECT_NEAR(ridged.W(0, 0), 2.0, 1e-5);
}

TEST(Ols, RecoversExactAffineMap) {
    rnd::Engine rng(3);
    auto W = xlcode::testing::randn(rng, 4, 3);
    Eigen::VectorXd b = xlcode::testing::randn(rng, 4, 1);
    auto X = xlcode::testing::randn(rng, 3, 20);
    Eigen::MatrixXd Y = (W * X).colwise() + b;
    auto r = ols_fit(X, Y, 0.0);
    EXPECT_LT((r.W - W).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.b - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ols, UnderdeterminedNeedsRidge) {
    rnd::Engine rng(4);
    auto X = xlcode::testing::randn(rng, 5, 3);
    auto Y = xlcode::testing::randn(rng, 2, 3);
    EXPECT_THROW(ols_fit(X, Y, 0.0), InvalidArgument);
    EXPECT_NO_THROW(ols_fit(X, Y, 1e-3));
}

TEST(Train, ExactAffineTargetReachesTinyMse) {
    rnd::Engine rng(5);
    auto W = xlcode::testing::randn(rng, 2, 2);
    auto X = xlcode::testing::randn(rng, 2, 40);
    Eigen::MatrixXd Y = (W * X).colwise() + Eigen::Vector2d(0.5, -1.0);
    TrainConfig cfg;
    cfg.hidden = 2;
    cfg.epochs = 3000;
    cfg.batch_size = 40;
    cfg.learning_rate = 0.05;
    auto [p, rep] = train_mse({X, Y}, cfg);
    EXPECT_LT(rep.final_mse, 1e-8);
    EXPECT_EQ(rep.trace.size(), 3000u);
    EXPECT_LT((p.forward(X) - Y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Train, OneDimensionalComposedMap) {
    TrainConfig cfg;
    cfg.hidden = 1;
    cfg.epochs = 5000;
    cfg.learning_rate = 0.02;
    cfg.seed = 3;
    auto [p, rep] = train_mse(one_d_pairs(), cfg);
    auto [W, b] = p.composed();
    EXPECT_NEAR(W(0, 0), 2.0, 1e-4);
    EXPECT_NEAR(b(0), 0.0, 1e-4);
}

TEST(Train, SameSeedSameTrace) {
    auto d = xlcode::testing::rank_limited_problem(6, 3, 5, 50, 1);
    for (auto opt : {Optimizer::sgd, Optimizer::adam}) {
        TrainConfig cfg;
        cfg.hidden = 3;
        cfg.epochs = 30;
        cfg.batch_size = 8;
        cfg.optimizer = opt;
        cfg.seed = 77;
        auto a = train_mse(d, cfg).second.trace;
        auto b = train_mse(d, cfg).second.trace;
        ASSERT_EQ(a.size(), b.size());
        EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
        cfg.seed = 78;
        EXPECT_NE(train_mse(d, cfg).second.trace, a);
    }
}

TEST(Train, DivergenceIsReported) {
    auto d = xlcode::testing::rank_limited_problem(6, 3, 5, 50, 1);
    TrainConfig cfg;
    cfg.hidden = 3;
    cfg.epochs = 200;
    cfg.learning_rate = 50.0;
    try {
        train_mse(d, cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("smaller learning rate"), std::string::npos);
    }
}

TEST(Train, ConfigValidation) {
    auto d = one_d_pairs();
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(train_mse(d, cfg), InvalidArgument);
    cfg.epochs = 1;
    cfg.learning_rate = 0;
    EXPECT_THROW(train_mse(d, cfg), InvalidArgument);
    EXPECT_THROW(train_mse(std::vector<align::TrainingPair>{}, TrainConfig{}), InvalidArgument);
}

TEST(Train, NonIncreasingTraceUnderSmallStep) {
    auto d = xlcode::testing::rank_limited_problem(6, 3, 5, 60, 2);
    TrainConfig cfg;
    cfg.hidden = 3;
    cfg.epochs = 300;
    cfg.batch_size = 60;
    cfg.learning_rate = 1e-3;
    auto rep = train_mse(d, cfg).second;
    for (std::size_t i = 1; i < rep.trace.size(); ++i)
        EXPECT_LE(rep.trace[i], rep.trace[i - 1]) << i;
}

TEST(Train, ApproachesOlsOptimum) {
    auto d = xlcode::testing::rank_limited_problem(16, 8, 32, 256, 5);
    auto ols = ols_fit(d.X, d.Y, 0.0);
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.epochs = 2000;
    cfg.batch_size = 256;
    cfg.learning_rate = 0.01;
    cfg.seed = 1;
    auto [p, rep] = train_mse(d, cfg);
    EXPECT_GT(ols.mse, 0.0);
    EXPECT_GE(rep.final_mse, ols.mse * (1 - 1e-12));
    EXPECT_LE(rep.final_mse, ols.mse * 1.001);
}

TEST(Gradients, MatchCentralDifferences) {
    rnd::Engine rng(21);
    for (auto act : {Activation::identity, Activation::gelu}) {
        for (int trial = 0; trial < 10; ++trial) {
            auto p = Projector<double>::init(3, 2, 4, rng(), act);
            p.b1 = xlcode::testing::randn(rng, 2, 1);
            p.b2 = xlcode::testing::randn(rng, 4, 1);
            auto X = xlcode::testing::randn(rng, 3, 5);
            auto Y = xlcode::testing::randn(rng, 4, 5);
            auto g = mse_gradients(p, X, Y);
            EXPECT_NEAR(g.loss, mse(p, X, Y), 1e-12);
            const double h = 1e-6;
            auto check = [&](auto& param, const auto& grad) {
                for (Eigen::Index i = 0; i < param.size(); ++i) {
                    double orig = param.data()[i];
                    param.data()[i] = orig + h;
                    double up = mse(p, X, Y);
                    param.data()[i] = orig - h;
                    double down = mse(p, X, Y);
                    param.data()[i] = orig;
                    double fd = (up - down) / (2 * h);
                    EXPECT_LE(rel_err(grad.data()[i], fd), 1e-4) << grad.data()[i] << " vs " << fd;
                }
            };
            check(p.W1, g.W1);
            check(p.b1, g.b1);
            check(p.W2, g.W2);
            check(p.b2, g.b2);
        }
    }
}

TEST(Project, ZeroParametersGiveBias) {
    auto p = Projector<double>::zeros(3, 2, 4);
    p.b2 << 1, 2, 3, 4;
    EXPECT_EQ(p.project(Eigen::Vector3d(5, 6, 7)), p.b2);
    EXPECT_THROW(p.project(Eigen::Vector2d(1, 2)), InvalidArgument);
}

TEST(Project, IdentityShapedIsIdentity) {
    auto p = Projector<double>::zeros(16, 16, 16);
    p.W1.setIdentity();
    p.W2.setIdentity();
    rnd::Engine rng(8);
    Eigen::VectorXd x = xlcode::testing::randn(rng, 16, 1);
    EXPECT_EQ(p.project(x), x);
}

TEST(Project, LinearUnderIdentityActivation) {
    rnd::Engine rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = Projector<double>::init(5, 3, 4, rng());
        p.b1 = xlcode::testing::randn(rng, 3, 1);
        p.b2 = xlcode::testing::randn(rng, 4, 1);
        auto [W, bt] = p.composed();
        Eigen::VectorXd x = xlcode::testing::randn(rng, 5, 1), y = xlcode::testing::randn(rng, 5, 1);
        double a = rnd::normal(rng), b = rnd::normal(rng);
        Eigen::VectorXd lhs = p.project(a * x + b * y) - bt;
        Eigen::VectorXd rhs = a * (p.project(x) - bt) + b * (p.project(y) - bt);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Container, RoundTripBitExact) {
    ScratchDir dir;
    auto p = Projector<float>::init(4, 3, 6, 12, Activation::gelu);
    p.b1 << 0.1f, -0.2f, 0.3f;
    save_projector(dir.path() / "p.proj", p);
    auto q = load_projector<float>(dir.path() / "p.proj");
    EXPECT_TRUE(q == p);
    save_projector(dir.path() / "q.proj", q);
    EXPECT_EQ(jsonl::read_text(dir.path() / "p.proj"), jsonl::read_text(dir.path() / "q.proj"));
    auto bytes = jsonl::read_text(dir.path() / "p.proj");
    EXPECT_EQ(bytes.size(), 21u + 4u * (12 + 3 + 18 + 6));
    // double projectors are stored at float32 precision
    auto d = Projector<double>::init(4, 3, 6, 13);
    save_projector(dir.path() / "d.proj", d);
    EXPECT_TRUE(load_projector<double>(dir.path() / "d.proj") == d.cast<float>().cast<double>());
}

TEST(Container, CorruptHeaders) {
    ScratchDir dir;
    save_projector(dir.path() / "p.proj", Projector<float>::init(4, 3, 6, 1));
    auto bytes = jsonl::read_text(dir.path() / "p.proj");
    auto bad = [&](std::string b) {
        dir.write("x.proj", b);
        EXPECT_THROW(load_projector(dir.path() / "x.proj"), FormatError);
    };
    auto m = bytes;
    m[1] = 'X';
    bad(m);
    auto dims = bytes;
    dims[12] = 7; // hidden 3 -> 7
    bad(dims);
    auto act = bytes;
    act[20] = 9;
    bad(act);
    bad(bytes.substr(0, bytes.size() - 3));
    bad(bytes + "zz");
}

TEST(Container, WrongDimPipelineFailsAtProject) {
    ScratchDir dir;
    save_projector(dir.path() / "p.proj", Projector<float>::init(4, 3, 6, 1));
    auto p = load_projector(dir.path() / "p.proj");
    EXPECT_THROW(p.project(Eigen::VectorXd::Zero(1024)), InvalidArgument);
}
