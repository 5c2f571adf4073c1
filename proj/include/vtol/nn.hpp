#pragma once

// Multilayer perceptrons with tanh hidden layers, feature scaling, Adam and a
// plain-text parameter format.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vtol/autodiff.hpp"

namespace vtol::nn {

enum class Activation { Tanh, Identity };

struct MlpParams {
    std::vector<int> sizes;                ///< input, hidden..., output
    std::vector<Eigen::MatrixXd> weights;  ///< layer k: sizes[k+1] x sizes[k]
    std::vector<Eigen::VectorXd> biases;
    std::vector<Activation> activations;
    std::uint64_t seed = 0;

    [[nodiscard]] int layers() const { return static_cast<int>(weights.size()); }
    [[nodiscard]] int inputs() const { return sizes.front(); }
    [[nodiscard]] int outputs() const { return sizes.back(); }
    [[nodiscard]] std::size_t parameter_count() const;
    /// Throws std::invalid_argument on broken shapes or non-finite entries.
    void validate() const;

    /// Weights then bias, layer by layer.
    [[nodiscard]] std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
};

struct InitScheme {
    bool zero_final_layer = false;
};

/// Xavier-uniform weights, zero biases. Needs at least one hidden layer.
MlpParams init_mlp(const std::vector<int>& sizes, std::uint64_t seed, InitScheme scheme = {});

/// Per-feature standardization fitted on training rows only.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stdev;

    static constexpr double kStdFloor = 1e-8;

    static Scaler fit(const Eigen::MatrixXd& rows);
    static Scaler identity(int features);

    [[nodiscard]] int features() const { return static_cast<int>(mean.size()); }
    [[nodiscard]] Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
    [[nodiscard]] Eigen::VectorXd inverse(const Eigen::VectorXd& z) const;
    [[nodiscard]] Eigen::MatrixXd transform_rows(const Eigen::MatrixXd& rows) const;
    [[nodiscard]] Eigen::MatrixXd inverse_rows(const Eigen::MatrixXd& rows) const;
};

/// Network on already-scaled inputs; rows are samples.
Eigen::MatrixXd forward_scaled(const MlpParams& p, const Eigen::MatrixXd& z);

/// Raw features in, raw network output out (the output is not unscaled).
Eigen::VectorXd forward(const MlpParams& p, const Scaler& input_scaler, const Eigen::VectorXd& x);

/// Parameters registered on a tape, same layout as MlpParams.
struct TapeParams {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

TapeParams record_params(ad::Tape& tape, const MlpParams& p);

/// Batched forward on the tape: z (n x inputs) -> (n x outputs).
ad::Var forward(const MlpParams& p, const TapeParams& tp, ad::Var z);

/// Flattened gradient in MlpParams::flatten() order, read after backward().
std::vector<double> gathered_gradient(const ad::Tape& tape, const TapeParams& tp);

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int decay_every = 2000;     ///< epochs; 0 disables
    double decay_factor = 0.5;

    [[nodiscard]] double rate_at(int epoch) const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

class NonFiniteGradient : public std::runtime_error {
public:
    NonFiniteGradient(std::size_t index, double value);
    [[nodiscard]] std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

/// One bias-corrected Adam update at learning rate `lr`. Leaves params and
/// state untouched and throws NonFiniteGradient if any gradient entry is not
/// finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               double lr);

// ---- text format ------------------------------------------------------------

void write_mlp(std::ostream& os, const std::string& name, const MlpParams& p);
MlpParams read_mlp(std::istream& is, const std::string& name);
void write_scaler(std::ostream& os, const std::string& name, const Scaler& s);
Scaler read_scaler(std::istream& is, const std::string& name);

/// Reads "<key> <values...>" lines written by the functions above; throws
/// std::runtime_error naming the expected key on mismatch.
std::vector<double> read_tagged(std::istream& is, const std::string& key);

}  // namespace vtol::nn
