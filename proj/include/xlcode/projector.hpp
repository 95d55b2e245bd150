#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "align.hpp"
#include "binary_io.hpp"
#include "error.hpp"
#include "random.hpp"

namespace xlcode::projector {

using json = nlohmann::json;

enum class Activation : std::uint8_t { identity = 0, gelu = 1 };

inline std::string to_string(Activation a) { return a == Activation::identity ? "identity" : "gelu"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "identity")
        return Activation::identity;
    if (s == "gelu")
        return Activation::gelu;
    throw InvalidArgument("unknown activation \"" + s + "\" (identity|gelu)");
}

inline constexpr std::uint32_t kDefaultHidden = 2048;

// Column-major batches: one sample per column.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

template <typename S>
S gelu_scalar(S z) {
    return S(0.5) * z * (S(1) + std::erf(z * S(std::numbers::sqrt2 / 2)));
}

template <typename S>
S gelu_grad_scalar(S z) {
    S cdf = S(0.5) * (S(1) + std::erf(z * S(std::numbers::sqrt2 / 2)));
    S pdf = std::exp(S(-0.5) * z * z) * S(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + z * pdf;
}

} // namespace detail

// x -> W2 * act(W1 * x + b1) + b2
template <typename Scalar = double>
class Projector {
public:
    Matrix<Scalar> W1, W2;
    Vector<Scalar> b1, b2;
    Activation activation = Activation::identity;

    Projector() = default;

    static Projector zeros(std::uint32_t in, std::uint32_t hidden, std::uint32_t out,
                           Activation act = Activation::identity) {
        if (in == 0 || hidden == 0 || out == 0)
            throw InvalidArgument("projector dims must be positive");
        Projector p;
        p.W1 = Matrix<Scalar>::Zero(hidden, in);
        p.b1 = Vector<Scalar>::Zero(hidden);
        p.W2 = Matrix<Scalar>::Zero(out, hidden);
        p.b2 = Vector<Scalar>::Zero(out);
        p.activation = act;
        return p;
    }

    // Weights uniform in +-1/sqrt(fan_in), biases zero.
    static Projector init(std::uint32_t in, std::uint32_t hidden, std::uint32_t out, std::uint64_t seed,
                          Activation act = Activation::identity) {
        auto p = zeros(in, hidden, out, act);
        rnd::Engine rng(seed);
        auto fill = [&](Matrix<Scalar>& m) {
            double a = 1.0 / std::sqrt(static_cast<double>(m.cols()));
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                for (Eigen::Index r = 0; r < m.rows(); ++r)
                    m(r, c) = static_cast<Scalar>(rnd::uniform(rng, -a, a));
        };
        fill(p.W1);
        fill(p.W2);
        return p;
    }

    std::uint32_t in_dim() const { return static_cast<std::uint32_t>(W1.cols()); }
    std::uint32_t hidden_dim() const { return static_cast<std::uint32_t>(W1.rows()); }
    std::uint32_t out_dim() const { return static_cast<std::uint32_t>(W2.rows()); }

    bool finite() const { return W1.allFinite() && W2.allFinite() && b1.allFinite() && b2.allFinite(); }

    Matrix<Scalar> hidden_pre(const Matrix<Scalar>& X) const { return (W1 * X).colwise() + b1; }

    Matrix<Scalar> activate(const Matrix<Scalar>& Z) const {
        if (activation == Activation::identity)
            return Z;
        return Z.unaryExpr([](Scalar z) { return detail::gelu_scalar(z); });
    }

    Matrix<Scalar> forward(const Matrix<Scalar>& X) const {
        if (X.rows() != W1.cols())
            throw InvalidArgument("projector input dim " + std::to_string(X.rows()) + " != " +
                                  std::to_string(W1.cols()));
        return (W2 * activate(hidden_pre(X))).colwise() + b2;
    }

    Vector<Scalar> project(const Vector<Scalar>& x) const { return forward(x); }

    // Single affine map equivalent to the identity-activation stack.
    std::pair<Matrix<Scalar>, Vector<Scalar>> composed() const {
        if (activation != Activation::identity)
            throw InvalidArgument("composed map only exists for identity activation");
        return {W2 * W1, W2 * b1 + b2};
    }

    template <typename T>
    Projector<T> cast() const {
        Projector<T> p;
        p.W1 = W1.template cast<T>();
        p.b1 = b1.template cast<T>();
        p.W2 = W2.template cast<T>();
        p.b2 = b2.template cast<T>();
        p.activation = activation;
        return p;
    }

    bool operator==(const Projector& o) const {
        return activation == o.activation && W1 == o.W1 && b1 == o.b1 && W2 == o.W2 && b2 == o.b2;
    }
};

// ---- objective ----

// MSE = (1/N) * sum_i ||yhat_i - y_i||^2
template <typename Scalar>
Scalar mse(const Projector<Scalar>& p, const Matrix<Scalar>& X, const Matrix<Scalar>& Y) {
    return (p.forward(X) - Y).squaredNorm() / static_cast<Scalar>(X.cols());
}

template <typename Scalar>
struct Gradients {
    Scalar loss{};
    Matrix<Scalar> W1, W2;
    Vector<Scalar> b1, b2;
};

template <typename Scalar>
Gradients<Scalar> mse_gradients(const Projector<Scalar>& p, const Matrix<Scalar>& X, const Matrix<Scalar>& Y) {
    const auto n = static_cast<Scalar>(X.cols());
    Matrix<Scalar> Z = p.hidden_pre(X);
    Matrix<Scalar> A = p.activate(Z);
    Matrix<Scalar> R = (p.W2 * A).colwise() + p.b2;
    R -= Y;
    Gradients<Scalar> g;
    g.loss = R.squaredNorm() / n;
    Matrix<Scalar> dY = (Scalar(2) / n) * R;
    g.W2 = dY * A.transpose();
    g.b2 = dY.rowwise().sum();
    Matrix<Scalar> dA = p.W2.transpose() * dY;
    if (p.activation == Activation::gelu)
        dA.array() *= Z.unaryExpr([](Scalar z) { return detail::gelu_grad_scalar(z); }).array();
    g.W1 = dA * X.transpose();
    g.b1 = dA.rowwise().sum();
    return g;
}

// ---- closed-form oracle ----

struct OlsResult {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
    double mse = 0.0;
};

// Least squares over augmented inputs [x; 1]. The ridge term does not
// penalize the bias.
inline OlsResult ols_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge = 1e-6) {
    if (X.cols() == 0 || X.cols() != Y.cols())
        throw InvalidArgument("ols_fit needs matching, non-empty input and target columns");
    if (ridge < 0)
        throw InvalidArgument("ridge must be >= 0");
    const Eigen::Index d = X.rows();
    Eigen::MatrixXd Z(d + 1, X.cols());
    Z.topRows(d) = X;
    Z.row(d).setOnes();
    Eigen::MatrixXd G = Z * Z.transpose();
    G.diagonal().head(d).array() += ridge;
    Eigen::MatrixXd rhs = Z * Y.transpose();
    Eigen::MatrixXd theta;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(G);
    qr.setThreshold(1e-12);
    if (qr.rank() < G.rows())
        throw InvalidArgument("normal matrix is singular (rank " + std::to_string(qr.rank()) + " of " +
                              std::to_string(G.rows()) + "); supply a ridge term or more independent inputs");
    theta = qr.solve(rhs);
    OlsResult r;
    r.W = theta.topRows(d).transpose();
    r.b = theta.row(d).transpose();
    r.mse = ((r.W * X).colwise() + r.b - Y).squaredNorm() / static_cast<double>(X.cols());
    return r;
}

// ---- training ----

enum class Optimizer { sgd, adam };

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd")
        return Optimizer::sgd;
    if (s == "adam")
        return Optimizer::adam;
    throw InvalidArgument("unknown optimizer \"" + s + "\" (sgd|adam)");
}

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 1e-2;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::sgd;
    std::uint32_t hidden = kDefaultHidden;
    Activation activation = Activation::identity;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

    void validate() const {
        if (epochs < 1)
            throw InvalidArgument("epochs must be >= 1");
        if (!(learning_rate > 0))
            throw InvalidArgument("learning_rate must be > 0");
        if (batch_size < 1)
            throw InvalidArgument("batch_size must be >= 1");
        if (hidden < 1)
            throw InvalidArgument("hidden must be >= 1");
    }

    json to_json() const {
        return {{"epochs", epochs},
                {"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"seed", seed},
                {"optimizer", optimizer == Optimizer::sgd ? "sgd" : "adam"},
                {"hidden", hidden},
                {"activation", to_string(activation)}};
    }
};

struct TrainReport {
    std::vector<double> trace; // full-data MSE after each epoch
    double final_mse = 0.0;
    double wall_seconds = 0.0;
    TrainConfig config;

    json to_json() const {
        return {{"trace", trace}, {"final_mse", final_mse}, {"wall_seconds", wall_seconds}, {"config", config.to_json()}};
    }
};

struct Dataset {
    Eigen::MatrixXd X; // in x N
    Eigen::MatrixXd Y; // out x N
};

inline Dataset stack_pairs(const std::vector<align::TrainingPair>& pairs) {
    if (pairs.empty())
        throw InvalidArgument("no training pairs");
    const auto din = pairs.front().h_laser.size(), dout = pairs.front().h_llm.size();
    Dataset d{Eigen::MatrixXd(din, pairs.size()), Eigen::MatrixXd(dout, pairs.size())};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].h_laser.size() != din || pairs[i].h_llm.size() != dout)
            throw InvalidArgument("pair \"" + pairs[i].word + "\" has inconsistent dims");
        d.X.col(static_cast<Eigen::Index>(i)) = pairs[i].h_laser;
        d.Y.col(static_cast<Eigen::Index>(i)) = pairs[i].h_llm;
    }
    return d;
}

namespace detail {

struct AdamState {
    Eigen::MatrixXd mW1, vW1, mW2, vW2;
    Eigen::VectorXd mb1, vb1, mb2, vb2;
    long step = 0;
};

template <typename P, typename G>
void adam_update(P& param, const G& grad, P& m, P& v, const TrainConfig& c, long step) {
    m = c.adam_beta1 * m + (1 - c.adam_beta1) * grad;
    v = c.adam_beta2 * v + (1 - c.adam_beta2) * grad.cwiseAbs2();
    double bc1 = 1 - std::pow(c.adam_beta1, static_cast<double>(step));
    double bc2 = 1 - std::pow(c.adam_beta2, static_cast<double>(step));
    param.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps);
}

} // namespace detail

// Mini-batch gradient descent on the MSE. Initialization and the per-epoch
// batch order both derive from cfg.seed.
inline std::pair<Projector<double>, TrainReport> train_mse(const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.X.cols() == 0 || data.X.cols() != data.Y.cols())
        throw InvalidArgument("training data must be non-empty with matching columns");
    auto start = std::chrono::steady_clock::now();
    const auto n = static_cast<std::size_t>(data.X.cols());
    rnd::Engine rng(cfg.seed);
    auto p = Projector<double>::init(static_cast<std::uint32_t>(data.X.rows()), cfg.hidden,
                                     static_cast<std::uint32_t>(data.Y.rows()), rng(), cfg.activation);
    detail::AdamState st;
    if (cfg.optimizer == Optimizer::adam) {
        st.mW1 = st.vW1 = Eigen::MatrixXd::Zero(p.W1.rows(), p.W1.cols());
        st.mW2 = st.vW2 = Eigen::MatrixXd::Zero(p.W2.rows(), p.W2.cols());
        st.mb1 = st.vb1 = Eigen::VectorXd::Zero(p.b1.size());
        st.mb2 = st.vb2 = Eigen::VectorXd::Zero(p.b2.size());
    }
    std::vector<Eigen::Index> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = static_cast<Eigen::Index>(i);
    const bool full_batch = cfg.batch_size >= n;
    Eigen::MatrixXd Xb, Yb;

    TrainReport rep;
    rep.config = cfg;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!full_batch)
            rnd::shuffle(order, rng);
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            const auto m = std::min(cfg.batch_size, n - s);
            Gradients<double> g;
            if (full_batch) {
                g = mse_gradients(p, data.X, data.Y);
            } else {
                Xb.resize(data.X.rows(), static_cast<Eigen::Index>(m));
                Yb.resize(data.Y.rows(), static_cast<Eigen::Index>(m));
                for (std::size_t k = 0; k < m; ++k) {
                    Xb.col(static_cast<Eigen::Index>(k)) = data.X.col(order[s + k]);
                    Yb.col(static_cast<Eigen::Index>(k)) = data.Y.col(order[s + k]);
                }
                g = mse_gradients(p, Xb, Yb);
            }
            if (cfg.optimizer == Optimizer::sgd) {
                p.W1 -= cfg.learning_rate * g.W1;
                p.b1 -= cfg.learning_rate * g.b1;
                p.W2 -= cfg.learning_rate * g.W2;
                p.b2 -= cfg.learning_rate * g.b2;
            } else {
                ++st.step;
                detail::adam_update(p.W1, g.W1, st.mW1, st.vW1, cfg, st.step);
                detail::adam_update(p.b1, g.b1, st.mb1, st.vb1, cfg, st.step);
                detail::adam_update(p.W2, g.W2, st.mW2, st.vW2, cfg, st.step);
                detail::adam_update(p.b2, g.b2, st.mb2, st.vb2, cfg, st.step);
            }
        }
        double loss = mse(p, data.X, data.Y);
        if (!std::isfinite(loss) || !p.finite())
            throw Error("training diverged at epoch " + std::to_string(epoch + 1) +
                        " (MSE is not finite); try a smaller learning rate");
        rep.trace.push_back(loss);
    }
    rep.final_mse = rep.trace.back();
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(p), std::move(rep)};
}

inline std::pair<Projector<double>, TrainReport> train_mse(const std::vector<align::TrainingPair>& pairs,
                                                           const TrainConfig& cfg) {
    return train_mse(stack_pairs(pairs), cfg);
}

// ---- PROJ container ----

inline constexpr std::string_view kProjMagic = "PROJ";
inline constexpr std::uint32_t kProjVersion = 1;

// Parameters are stored as float32; double projectors are rounded on save.
template <typename Scalar>
void save_projector(const std::filesystem::path& path, const Projector<Scalar>& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    binio::write_magic(out, kProjMagic);
    binio::write_u32(out, kProjVersion);
    binio::write_u32(out, p.in_dim());
    binio::write_u32(out, p.hidden_dim());
    binio::write_u32(out, p.out_dim());
    binio::write_u8(out, static_cast<std::uint8_t>(p.activation));
    auto put_matrix = [&](const auto& m) { // row-major
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                binio::write_f32(out, static_cast<float>(m(r, c)));
    };
    put_matrix(p.W1);
    put_matrix(p.b1);
    put_matrix(p.W2);
    put_matrix(p.b2);
    if (!out)
        throw Error("write failed for " + path.string());
}

template <typename Scalar = double>
Projector<Scalar> load_projector(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    try {
        binio::expect_magic(in, kProjMagic);
        auto version = binio::read_u32(in);
        if (version != kProjVersion)
            throw FormatError("unsupported PROJ version " + std::to_string(version));
        auto din = binio::read_u32(in), h = binio::read_u32(in), dout = binio::read_u32(in);
        auto act = binio::read_u8(in);
        if (din == 0 || h == 0 || dout == 0)
            throw FormatError("shape header has a zero dimension");
        if (act > 1)
            throw FormatError("unknown activation id " + std::to_string(act));
        std::uintmax_t need = 21 + 4ull * (std::uintmax_t(h) * din + h + std::uintmax_t(dout) * h + dout);
        auto have = std::filesystem::file_size(path);
        if (have < need)
            throw FormatError("unexpected EOF: shape header needs " + std::to_string(need) + " bytes, file has " +
                              std::to_string(have));
        if (have > need)
            throw FormatError("trailing bytes after parameter blocks");
        auto p = Projector<Scalar>::zeros(din, h, dout, static_cast<Activation>(act));
        auto get_matrix = [&](auto& m) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) {
                    float v = binio::read_f32(in);
                    if (!std::isfinite(v))
                        throw FormatError("non-finite parameter");
                    m(r, c) = static_cast<Scalar>(v);
                }
        };
        get_matrix(p.W1);
        get_matrix(p.b1);
        get_matrix(p.W2);
        get_matrix(p.b2);
        return p;
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace xlcode::projector
