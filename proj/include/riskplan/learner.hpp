#pragma once

#include "riskplan/distributions.hpp"
#include "riskplan/predictor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace riskplan {

// Trajectory generator for the surrogate's training data. Each trajectory
// draws (e0, d, u_ref) once and holds the reference control constant, so the
// learned map is conditioned on the control actually flown.
struct DataGenConfig {
    VehicleModel model = VehicleModel::Car;
    ClosedLoopParams cl;
    BoxDistribution init;      // initial tracking error
    BoxDistribution dist_dist; // per-trajectory control disturbance
    BoxDistribution uref_box;  // constant reference control, drawn uniformly
    int steps = 50;
    double dt = 0.02;
    int substeps = 10;
};

// Input row layout: [e0 (state_dim), dist (control_dim), u_ref (control_dim), t].
// Target row layout: [e_t (state_dim), g] with g = log(rho_t / rho_0).
// Synthetic datasets may use fewer middle columns, but the first state_dim
// inputs must be e0 and the last must be t (the residual head depends on it).
struct Dataset {
    VehicleModel model = VehicleModel::Car;
    int in_dim = 0;
    int state_dim = 0;
    double dt = 0.02;
    double t_max = 1.0;
    std::vector<double> inputs;
    std::vector<double> targets;
    std::vector<int> train_rows, eval_rows; // disjoint, split by trajectory
    int discarded = 0;                      // trajectories dropped after diverging
    int rows() const { return in_dim ? static_cast<int>(inputs.size()) / in_dim : 0; }
};

Dataset build_dataset(const DataGenConfig& gen, int n_traj, std::uint64_t seed);

struct TrainConfig {
    int epochs = 40;
    int batch_size = 256;
    double lr = 0.1;
    double momentum = 0.9;
    double w_state = 1.0;
    double w_density = 1.0;
    std::uint64_t seed = 0;
};

// 3 hidden ReLU layers of width 128, linear head of state_dim + 1 units.
// The head is gated by tau = t / t_max and applied as a residual:
//   e_hat = e0 + res_std .* (tau * h_state),   g_hat = g_std * tau * h_g
// so predictions at t = 0 are exactly (e0, 0).
struct MlpModel {
    VehicleModel model = VehicleModel::Car;
    int in_dim = 0;
    int hidden = 128;
    int out_dim = 0; // state_dim + 1
    double dt = 0.02;
    double t_max = 1.0;
    std::vector<double> params; // W1,b1,W2,b2,W3,b3,W4,b4 row-major
    std::vector<double> in_mean, in_std;
    std::vector<double> res_std;
    double g_std = 1.0;
    std::uint64_t config_hash = 0;
    int n_params() const;
};

// Fresh He-initialized model with normalization constants taken from the
// training split.
MlpModel init_model(const Dataset& data, const TrainConfig& cfg);

// Mean loss over the given rows (normalized residual scale); fills the
// parameter gradient when grad is non-null. Exposed for the finite-difference
// check.
double loss_and_grad(const MlpModel& m, const Dataset& data, const std::vector<int>& rows,
                     const TrainConfig& cfg, std::vector<double>* grad);

struct TrainResult {
    MlpModel model;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    std::vector<double> epoch_train_loss; // full-train loss after each epoch
};

// SGD with momentum; learning rate decays x0.1 at 60% and 80% of the epochs.
// Throws DivergedTraining if the loss leaves the reals.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

// Raw row predictions, rows x out_dim: denormalized state, then g.
// Parallel over rows; the serial twin backs the kernel benchmark.
void predict_rows(const MlpModel& m, const double* inputs, int n_rows, double* out);
void predict_rows_serial(const MlpModel& m, const double* inputs, int n_rows, double* out);

// Vehicle-facing prediction at lead time t from one anchor point.
// Throws HorizonExceeded for t outside [0, t_max].
std::pair<ErrorVec, double> predict(const MlpModel& m, const ErrorVec& e0, const ControlVec& dist,
                                    const ControlVec& u_ref, double t);

// Versioned binary format with an embedded JSON header.
void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

// Surrogate predictor. Within a constant-control stretch of the reference it
// predicts from the stretch's anchor state; at control changes (or when the
// trained horizon runs out) it re-anchors, composing flow maps and adding
// log-density ratios.
class ModelPredictor : public Predictor {
public:
    explicit ModelPredictor(MlpModel net) : net_(std::move(net)) {}
    VehicleModel model() const override { return net_.model; }
    int max_steps(const ReferenceTrajectory& ref) const override { return ref.steps(); }
    std::unique_ptr<Propagation> propagate(const ReferenceTrajectory& ref,
                                           std::vector<ErrorVec> e0,
                                           std::vector<ControlVec> dist) const override;
    const MlpModel& net() const { return net_; }

private:
    MlpModel net_;
};

} // namespace riskplan
