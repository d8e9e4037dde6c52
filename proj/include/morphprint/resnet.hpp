#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphprint/mesh.hpp"

namespace morphprint {

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

struct DenseLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;
};

/// Dense input layer, residual blocks H <- f(f(W H + b) + H) and a linear
/// scalar output. Inputs are standardized and outputs de-standardized with
/// stored statistics (identity by default).
class ResidualNet {
public:
    ResidualNet() = default;
    /// He-uniform initialization from `seed`; zero biases.
    ResidualNet(std::size_t input_dim, std::size_t hidden, std::size_t blocks, std::uint64_t seed);

    std::size_t input_dim() const { return static_cast<std::size_t>(input_.weights.cols()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(input_.weights.rows()); }
    std::size_t block_count() const { return blocks_.size(); }

    DenseLayer& input_layer() { return input_; }
    DenseLayer& block(std::size_t i) { return blocks_.at(i); }
    DenseLayer& output_layer() { return output_; }
    const DenseLayer& input_layer() const { return input_; }
    const DenseLayer& block(std::size_t i) const { return blocks_.at(i); }
    const DenseLayer& output_layer() const { return output_; }

    Eigen::VectorXd input_mean;
    Eigen::VectorXd input_scale;
    double output_mean = 0.0;
    double output_scale = 1.0;

    /// Prediction in label units. Throws Error naming the input layer on a
    /// dimension mismatch.
    double forward(std::span<const double> x) const;
    double forward(const Eigen::VectorXd& x) const;
    /// Column-per-sample batch prediction in label units.
    Eigen::VectorXd forward_batch(const Eigen::MatrixXd& x) const;
    /// Activations after the input layer and after each block, for one sample.
    std::vector<Eigen::VectorXd> activations(const Eigen::VectorXd& x) const;

    std::size_t parameter_count() const;
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& theta);

    /// Weighted objective (1/2k) sum w_j (yhat_j - y_j)^2 evaluated in
    /// standardized label units, with its parameter gradient when `grad` is
    /// given. Columns of `x` are samples.
    double objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                     Eigen::VectorXd* grad) const;

    /// Sets input/output standardization from data (std 0 becomes 1).
    void fit_normalization(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

    std::string to_json() const;
    static ResidualNet from_json(const std::string& text);

private:
    Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd core(const Eigen::MatrixXd& xn) const;

    DenseLayer input_;
    std::vector<DenseLayer> blocks_;
    DenseLayer output_;
};

/// (1/2k) sum (yhat - y)^2. Throws on an empty or mismatched batch.
double mse_loss(std::span<const double> predictions, std::span<const double> targets);

struct TrainOptions {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 200;
    std::uint64_t seed = 42;
    bool shuffle = true;
    /// Refit input/output standardization on the training data first.
    bool normalize = true;
};

struct TrainResult {
    ResidualNet net;
    /// Unweighted L_MSE over the training set, before training and after each epoch.
    std::vector<double> loss_history;
    bool diverged = false;
    std::size_t epochs_run = 0;
};

/// Mini-batch SGD. On a non-finite loss the last finite parameters are
/// returned with `diverged` set.
TrainResult train(ResidualNet net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                  const TrainOptions& options = {});

} // namespace morphprint
