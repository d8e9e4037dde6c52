#include "morphprint/resnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace morphprint {

namespace {

DenseLayer he_uniform(std::size_t out, std::size_t in, std::mt19937_64& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-limit, limit);
    DenseLayer l;
    l.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
            l.weights(r, c) = uni(rng);
        }
    }
    l.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    return l;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& m) { return (m.array() > 0.0).cast<double>(); }

} // namespace

ResidualNet::ResidualNet(std::size_t input_dim, std::size_t hidden, std::size_t blocks, std::uint64_t seed)
{
    if (input_dim == 0 || hidden == 0) {
        throw Error("ResidualNet: input and hidden sizes must be positive");
    }
    std::mt19937_64 rng(seed);
    input_ = he_uniform(hidden, input_dim, rng);
    for (std::size_t i = 0; i < blocks; ++i) {
        blocks_.push_back(he_uniform(hidden, hidden, rng));
    }
    output_ = he_uniform(1, hidden, rng);
    input_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(input_dim));
    input_scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(input_dim));
}

Eigen::MatrixXd ResidualNet::normalize(const Eigen::MatrixXd& x) const
{
    if (x.rows() != input_.weights.cols()) {
        throw Error("ResidualNet: input layer expects " + std::to_string(input_.weights.cols()) + " features, got " +
                    std::to_string(x.rows()));
    }
    return (x.colwise() - input_mean).array().colwise() / input_scale.array();
}

Eigen::VectorXd ResidualNet::core(const Eigen::MatrixXd& xn) const
{
    Eigen::MatrixXd h = relu((input_.weights * xn).colwise() + input_.bias);
    for (const auto& b : blocks_) {
        h = relu(relu((b.weights * h).colwise() + b.bias) + h);
    }
    Eigen::MatrixXd out = (output_.weights * h).colwise() + output_.bias;
    return out.row(0).transpose();
}

double ResidualNet::forward(const Eigen::VectorXd& x) const
{
    return forward_batch(x)[0];
}

double ResidualNet::forward(std::span<const double> x) const
{
    return forward(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())).eval());
}

Eigen::VectorXd ResidualNet::forward_batch(const Eigen::MatrixXd& x) const
{
    return (core(normalize(x)).array() * output_scale + output_mean).matrix();
}

std::vector<Eigen::VectorXd> ResidualNet::activations(const Eigen::VectorXd& x) const
{
    std::vector<Eigen::VectorXd> out;
    Eigen::VectorXd h = relu(input_.weights * normalize(x) + input_.bias);
    out.push_back(h);
    for (const auto& b : blocks_) {
        h = relu(relu(b.weights * h + b.bias) + h);
        out.push_back(h);
    }
    return out;
}

std::size_t ResidualNet::parameter_count() const
{
    auto n = [](const DenseLayer& l) { return static_cast<std::size_t>(l.weights.size() + l.bias.size()); };
    std::size_t total = n(input_) + n(output_);
    for (const auto& b : blocks_) {
        total += n(b);
    }
    return total;
}

Eigen::VectorXd ResidualNet::parameters() const
{
    Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index pos = 0;
    auto put = [&](const DenseLayer& l) {
        theta.segment(pos, l.weights.size()) = Eigen::Map<const Eigen::VectorXd>(l.weights.data(), l.weights.size());
        pos += l.weights.size();
        theta.segment(pos, l.bias.size()) = l.bias;
        pos += l.bias.size();
    };
    put(input_);
    for (const auto& b : blocks_) {
        put(b);
    }
    put(output_);
    return theta;
}

void ResidualNet::set_parameters(const Eigen::VectorXd& theta)
{
    if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
        throw Error("ResidualNet: parameter vector has the wrong length");
    }
    Eigen::Index pos = 0;
    auto get = [&](DenseLayer& l) {
        Eigen::Map<Eigen::VectorXd>(l.weights.data(), l.weights.size()) = theta.segment(pos, l.weights.size());
        pos += l.weights.size();
        l.bias = theta.segment(pos, l.bias.size());
        pos += l.bias.size();
    };
    get(input_);
    for (auto& b : blocks_) {
        get(b);
    }
    get(output_);
}

double ResidualNet::objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                              Eigen::VectorXd* grad) const
{
    const Eigen::Index k = x.cols();
    if (k == 0) {
        throw Error("ResidualNet: empty batch");
    }
    if (y.size() != k || w.size() != k) {
        throw Error("ResidualNet: batch targets and weights must match the sample count");
    }
    const Eigen::MatrixXd xn = normalize(x);
    const Eigen::VectorXd t = (y.array() - output_mean) / output_scale;

    // Forward pass, keeping pre-activations.
    const Eigen::MatrixXd z0 = (input_.weights * xn).colwise() + input_.bias;
    std::vector<Eigen::MatrixXd> h{relu(z0)};
    std::vector<Eigen::MatrixXd> pre_a, pre_s;
    for (const auto& b : blocks_) {
        pre_a.push_back((b.weights * h.back()).colwise() + b.bias);
        pre_s.push_back(relu(pre_a.back()) + h.back());
        h.push_back(relu(pre_s.back()));
    }
    const Eigen::VectorXd out =
        ((output_.weights * h.back()).colwise() + output_.bias).row(0).transpose();
    const Eigen::VectorXd err = out - t;
    const double inv_k = 1.0 / static_cast<double>(k);
    const double loss = 0.5 * inv_k * (w.array() * err.array().square()).sum();
    if (!grad) {
        return loss;
    }

    // Reverse pass.
    std::vector<DenseLayer> g(blocks_.size() + 2);
    const Eigen::RowVectorXd dout = (w.array() * err.array() * inv_k).matrix().transpose();
    DenseLayer& go = g.back();
    go.weights = dout * h.back().transpose();
    go.bias = Eigen::VectorXd::Constant(1, dout.sum());
    Eigen::MatrixXd dh = output_.weights.transpose() * dout;
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        const Eigen::MatrixXd ds = dh.cwiseProduct(relu_mask(pre_s[i]));
        const Eigen::MatrixXd da = ds.cwiseProduct(relu_mask(pre_a[i]));
        g[i + 1].weights = da * h[i].transpose();
        g[i + 1].bias = da.rowwise().sum();
        dh = ds + blocks_[i].weights.transpose() * da;
    }
    const Eigen::MatrixXd dz0 = dh.cwiseProduct(relu_mask(z0));
    g[0].weights = dz0 * xn.transpose();
    g[0].bias = dz0.rowwise().sum();

    grad->resize(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index pos = 0;
    for (const auto& l : g) {
        grad->segment(pos, l.weights.size()) = Eigen::Map<const Eigen::VectorXd>(l.weights.data(), l.weights.size());
        pos += l.weights.size();
        grad->segment(pos, l.bias.size()) = l.bias;
        pos += l.bias.size();
    }
    return loss;
}

void ResidualNet::fit_normalization(const Eigen::MatrixXd& x, const Eigen::VectorXd& y)
{
    if (x.cols() == 0 || y.size() != x.cols()) {
        throw Error("fit_normalization: need matching, non-empty samples");
    }
    const double n = static_cast<double>(x.cols());
    input_mean = x.rowwise().mean();
    input_scale = ((x.colwise() - input_mean).array().square().rowwise().sum() / n).sqrt();
    for (Eigen::Index i = 0; i < input_scale.size(); ++i) {
        if (!(input_scale[i] > 1e-12)) {
            input_scale[i] = 1.0;
        }
    }
    output_mean = y.mean();
    output_scale = std::sqrt((y.array() - output_mean).square().sum() / n);
    if (!(output_scale > 1e-12)) {
        output_scale = 1.0;
    }
}

std::string ResidualNet::to_json() const
{
    using nlohmann::json;
    auto layer = [](const DenseLayer& l) {
        json j;
        j["rows"] = l.weights.rows();
        j["cols"] = l.weights.cols();
        std::vector<double> w;
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
                w.push_back(l.weights(r, c));
            }
        }
        j["weights"] = w;
        j["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
        return j;
    };
    json j;
    j["format"] = "morphprint-resnet";
    j["input_dim"] = input_dim();
    j["hidden"] = hidden_dim();
    j["blocks"] = block_count();
    j["layers"] = json::array();
    j["layers"].push_back(layer(input_));
    for (const auto& b : blocks_) {
        j["layers"].push_back(layer(b));
    }
    j["layers"].push_back(layer(output_));
    j["input_mean"] = std::vector<double>(input_mean.data(), input_mean.data() + input_mean.size());
    j["input_scale"] = std::vector<double>(input_scale.data(), input_scale.data() + input_scale.size());
    j["output_mean"] = output_mean;
    j["output_scale"] = output_scale;
    return j.dump(1);
}

ResidualNet ResidualNet::from_json(const std::string& text)
{
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    try {
        auto layer = [](const json& lj) {
            DenseLayer l;
            const auto rows = lj.at("rows").get<Eigen::Index>();
            const auto cols = lj.at("cols").get<Eigen::Index>();
            const auto w = lj.at("weights").get<std::vector<double>>();
            const auto b = lj.at("bias").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
                throw ParseError("checkpoint: layer size mismatch");
            }
            l.weights.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    l.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
                }
            }
            l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
            return l;
        };
        const auto& layers = j.at("layers");
        if (layers.size() < 2) {
            throw ParseError("checkpoint: need at least input and output layers");
        }
        ResidualNet net;
        net.input_ = layer(layers.front());
        for (std::size_t i = 1; i + 1 < layers.size(); ++i) {
            net.blocks_.push_back(layer(layers[i]));
        }
        net.output_ = layer(layers.back());
        const auto mean = j.at("input_mean").get<std::vector<double>>();
        const auto scale = j.at("input_scale").get<std::vector<double>>();
        net.input_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        net.input_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
        net.output_mean = j.at("output_mean").get<double>();
        net.output_scale = j.at("output_scale").get<double>();
        const auto h = net.input_.weights.rows();
        bool ok = net.input_mean.size() == net.input_.weights.cols() && net.input_scale.size() == net.input_mean.size() &&
                  net.output_.weights.rows() == 1 && net.output_.weights.cols() == h;
        for (const auto& b : net.blocks_) {
            ok = ok && b.weights.rows() == h && b.weights.cols() == h;
        }
        if (!ok) {
            throw ParseError("checkpoint: inconsistent layer dimensions");
        }
        return net;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets)
{
    if (predictions.empty()) {
        throw Error("mse_loss: empty batch");
    }
    if (predictions.size() != targets.size()) {
        throw Error("mse_loss: predictions and targets differ in length");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - targets[i];
        s += e * e;
    }
    return s / (2.0 * static_cast<double>(predictions.size()));
}

TrainResult train(ResidualNet net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                  const TrainOptions& options)
{
    const Eigen::Index n = x.cols();
    if (n == 0) {
        throw Error("train: empty training set");
    }
    if (y.size() != n || weights.size() != n) {
        throw Error("train: features, labels and weights must have the same sample count");
    }
    if (options.batch_size == 0) {
        throw Error("train: batch size must be positive");
    }
    if (options.normalize) {
        net.fit_normalization(x, y);
    }
    TrainResult result;
    auto full_loss = [&](const ResidualNet& m) {
        const Eigen::VectorXd pred = m.forward_batch(x);
        return mse_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(n)),
                        std::span<const double>(y.data(), static_cast<std::size_t>(n)));
    };
    result.loss_history.push_back(full_loss(net));
    if (!std::isfinite(result.loss_history.back())) {
        throw Error("train: initial loss is not finite");
    }

    std::mt19937_64 rng(options.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Eigen::VectorXd theta = net.parameters();
    Eigen::VectorXd grad;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const Eigen::VectorXd last_good = theta;
        if (options.shuffle) {
            std::shuffle(order.begin(), order.end(), rng);
        }
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            const auto m = static_cast<Eigen::Index>(end - start);
            Eigen::MatrixXd bx(x.rows(), m);
            Eigen::VectorXd by(m), bw(m);
            for (Eigen::Index j = 0; j < m; ++j) {
                const auto idx = order[start + static_cast<std::size_t>(j)];
                bx.col(j) = x.col(idx);
                by[j] = y[idx];
                bw[j] = weights[idx];
            }
            net.objective(bx, by, bw, &grad);
            theta -= options.learning_rate * grad;
            net.set_parameters(theta);
        }
        const double loss = full_loss(net);
        if (!std::isfinite(loss) || !theta.allFinite()) {
            net.set_parameters(last_good);
            result.diverged = true;
            break;
        }
        result.loss_history.push_back(loss);
        result.epochs_run = epoch + 1;
    }
    result.net = std::move(net);
    return result;
}

} // namespace morphprint
