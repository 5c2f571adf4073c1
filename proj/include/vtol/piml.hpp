#pragma once

// The four comparable models (low-fidelity physics, PIML-A, PIML-B, pure
// ANN), their shared loss, training loop and evaluation.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vtol/bem.hpp"
#include "vtol/geometry.hpp"
#include "vtol/nn.hpp"
#include "vtol/types.hpp"
#include "vtol/vlm.hpp"

namespace vtol::piml {

enum class ModelKind { LowFidelity, PimlA, PimlB, PureAnn };

const char* to_string(ModelKind k);
/// Accepts lf, piml_a, piml_b, ann. Throws std::invalid_argument otherwise.
ModelKind kind_from_string(const std::string& s);

/// Rotor groups sharing one pair of induced-velocity magnitudes.
enum class RotorGroup { Starboard = 0, Port = 1, Hover = 2 };
inline constexpr int kGroups = 3;

// ---- physics ----------------------------------------------------------------

struct PhysicsOptions {
    bem::BladePolar polar;
    double wash_scale = 1.0;
    double hover_rpm = 5000.0;
};

/// Rotor solutions for one flight state and the frozen wash stencil built
/// from them. v_a/v_t are flattened (disc, station).
struct RotorState {
    std::vector<geometry::PropellerDisc> discs;
    std::vector<bem::BemSolution> bem;
    bem::WashStencil stencil;
    std::vector<double> v_a;
    std::vector<double> v_t;
    bool converged = true;
    int max_iterations = 0;
};

/// Read-only physics context shared by every model and thread.
class Physics {
public:
    explicit Physics(geometry::AircraftConfig aircraft, PhysicsOptions options = {},
                     vlm::Parallelism par = vlm::Parallelism::OpenMP);

    [[nodiscard]] const geometry::AircraftConfig& aircraft() const { return aircraft_; }
    [[nodiscard]] const PhysicsOptions& options() const { return options_; }
    [[nodiscard]] const vlm::VortexLattice& lattice() const { return *lattice_; }
    [[nodiscard]] int panels() const { return lattice_->size(); }
    [[nodiscard]] int stations() const;

    [[nodiscard]] RotorGroup group(int disc) const;
    /// Discs with the tip rotors tilted by the flight state.
    [[nodiscard]] std::vector<geometry::PropellerDisc> discs(const FlightState& f) const;
    [[nodiscard]] std::array<double, 6> rpms(const FlightState& f) const;

    [[nodiscard]] RotorState rotors(const FlightState& f) const;

    /// VLM with freestream (v, alpha) plus a wash field; angles in degrees.
    [[nodiscard]] AeroCoefficients solve(double v, double alpha_deg, double theta_elev_deg,
                                         const vlm::OnsetFlow& wash) const;

private:
    geometry::AircraftConfig aircraft_;
    PhysicsOptions options_;
    std::shared_ptr<const vlm::VortexLattice> lattice_;
};

struct LfResult {
    AeroCoefficients coefficients;
    bool converged = true;
};

LfResult lf_forward(const Physics& ph, const FlightState& f);

/// Low-fidelity pipeline on the tape, differentiable in all seven inputs
/// (v, alpha, omega_star, omega_port, theta_star, theta_port, theta_elev).
std::array<ad::Var, 4> lf_forward(const Physics& ph, std::span<const ad::Var> inputs);

// ---- models -----------------------------------------------------------------

/// Fixed constants mapping raw network outputs to physical quantities.
struct TransferScaling {
    double v_shift = 5.0;      ///< m/s per unit output
    double alpha_shift = 5.0;  ///< deg per unit output
    double elev_shift = 5.0;   ///< deg per unit output
    double v_scale = 30.0;     ///< induced magnitude = softplus(out) * v_scale
    double b_bound = 10.0;     ///< PIML-B correction = b_bound * tanh(out), m/s
};

struct Architecture {
    std::vector<int> piml_a_transfer_hidden = std::vector<int>(6, 200);
    std::vector<int> piml_a_correction_hidden = std::vector<int>(6, 200);
    std::vector<int> piml_b_hidden = std::vector<int>(6, 200);
    std::vector<int> ann_hidden = std::vector<int>(4, 150);
    bool zero_heads = true;  ///< zero-initialized final layers on every net
    /// PIML-A starting induced magnitudes in m/s (6 values); empty keeps
    /// softplus(0) * v_scale.
    std::vector<double> induced_prior;
    /// train() fills an empty induced_prior with bem_induced_prior over the
    /// training split.
    bool induced_prior_from_bem = true;
};

inline constexpr int kTransferOutputs = 9;
inline constexpr int kCorrectionInputs = FlightState::kInputs + AeroCoefficients::kOutputs;
inline constexpr int kInducedCorrections = 6;

struct Model {
    ModelKind kind = ModelKind::LowFidelity;
    nn::Scaler input_scaler;
    nn::Scaler target_scaler;
    TransferScaling scaling;
    /// PIML-A: transfer net (7 -> 9) then correction net (11 -> 4).
    /// PIML-B: correction net (7 -> 6). ANN: one net (7 -> 4).
    std::vector<nn::MlpParams> nets;

    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
};

Model make_model(ModelKind kind, const nn::Scaler& inputs, const nn::Scaler& targets, std::uint64_t seed,
                 const Architecture& arch = {}, const TransferScaling& scaling = {});

/// Group magnitudes in order (v_a, v_t) for starboard, port, hover.
struct TransferParameters {
    double v = 0.0;
    double alpha = 0.0;
    double theta_elev = 0.0;
    std::array<double, 6> induced{};
};

struct Prediction {
    AeroCoefficients coefficients;
    AeroCoefficients physics;           ///< VLM output before output correction (hybrids)
    TransferParameters transfer;        ///< PIML-A
    std::array<double, 4> output_correction{};      ///< PIML-A, raw units
    std::array<double, 6> induced_correction{};     ///< PIML-B, m/s
    bool converged = true;
    bool out_of_bounds = false;
};

Prediction predict(const Physics& ph, const Model& m, const FlightState& f);

/// Wash of six uniform group magnitudes spread over each disc's tube; the
/// stencil has one station per disc.
bem::WashStencil uniform_stencil(const Physics& ph, const FlightState& shifted, double theta_star,
                                 double theta_port, const std::array<double, 6>& induced);
vlm::OnsetFlow uniform_wash(const Physics& ph, const FlightState& shifted, double theta_star, double theta_port,
                            const std::array<double, 6>& induced);

// ---- training ---------------------------------------------------------------

struct Batch {
    Eigen::MatrixXd x;  ///< n x 7 raw inputs
    Eigen::MatrixXd y;  ///< n x 4 raw targets
    [[nodiscard]] int size() const { return static_cast<int>(x.rows()); }
};

/// Mean low-fidelity BEM group magnitudes (station and disc averaged) over a
/// batch, ordered like TransferParameters::induced.
std::vector<double> bem_induced_prior(const Physics& ph, const Batch& batch);

/// Mean over samples of the squared scaled residual norm, divided by 4.
/// Throws std::invalid_argument for an empty or mismatched batch.
double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, const nn::Scaler& target_scaler);

/// Full-batch loss of a model as a function of its flattened parameters.
/// Per-sample physics state that does not depend on the weights is cached.
class Objective {
public:
    Objective(const Physics& ph, const Model& prototype, const Batch& batch);
    ~Objective();
    Objective(const Objective&) = delete;
    Objective& operator=(const Objective&) = delete;

    [[nodiscard]] double loss(std::span<const double> flat) const;
    /// Returns the loss and writes dL/dflat.
    double loss_and_gradient(std::span<const double> flat, std::vector<double>& grad) const;
    /// Scaled predictions (n x 4) for the parameters.
    [[nodiscard]] Eigen::MatrixXd predict_scaled(std::span<const double> flat) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct TrainConfig {
    int max_epochs = 10000;
    int patience = 500;
    nn::AdamConfig adam;
    std::uint64_t seed = 42;
    std::string checkpoint_path;   ///< written on improvement every checkpoint_every epochs and at the end
    int checkpoint_every = 500;
    double time_limit_seconds = 0.0;  ///< 0 = none
    int inject_nonfinite_at = -1;     ///< testing hook: poison the loss at this epoch
    std::function<void(int, double, double)> on_epoch;
};

struct HistoryRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    Model model;              ///< best validation loss
    std::vector<HistoryRow> history;
    int best_epoch = 0;
    bool aborted = false;
    std::string abort_reason;
    bool stopped_early = false;
    double seconds = 0.0;
};

/// Throws std::invalid_argument when the splits share a sample or the kind
/// is not trainable.
TrainResult train(const Physics& ph, ModelKind kind, const Batch& train_set, const Batch& val_set,
                  const TrainConfig& cfg, const Architecture& arch = {}, const TransferScaling& scaling = {});

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& h);

// ---- evaluation -------------------------------------------------------------

struct Evaluation {
    std::array<double, 4> rmse{};
    std::array<double, 4> scaled_rmse{};  ///< rmse / target std
    double aggregate = 0.0;               ///< mean of scaled_rmse
    Eigen::MatrixXd errors;               ///< n x 4 signed prediction - target
    Eigen::MatrixXd predictions;
    double seconds_per_sample = 0.0;
};

/// target_scaler supplies the std used for the aggregate. The per-sample
/// time is the fastest of `timing_passes` serial passes over the set.
Evaluation evaluate(const Physics& ph, const Model& m, const Batch& set, const nn::Scaler& target_scaler,
                    int timing_passes = 1);

/// Per-sample corrections: PIML-A output corrections (4 columns), PIML-B
/// induced-velocity corrections (6 columns).
Eigen::MatrixXd correction_report(const Physics& ph, const Model& m, const Batch& set);
void write_correction_csv(std::ostream& os, ModelKind kind, const Batch& set, const Eigen::MatrixXd& corrections);

// ---- checkpoints ------------------------------------------------------------

void save_model(const Model& m, const std::string& path, const std::string& config_echo = "{}");
Model load_model(const std::string& path);
void write_model(std::ostream& os, const Model& m, const std::string& config_echo);
Model read_model(std::istream& is);

}  // namespace vtol::piml
