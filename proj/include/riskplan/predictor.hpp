#pragma once

#include "riskplan/liouville.hpp"

#include <memory>
#include <vector>

namespace riskplan {

// Stateful batch propagation of tracking errors along one reference.
// advance() moves every sample forward by whole reference steps;
// log_ratios()[i] is g_i = log(rho_t / rho_0) for sample i at the current
// step. Implementations must be deterministic and thread-schedule
// independent (per-sample output slots only).
class Propagation {
public:
    virtual ~Propagation() = default;
    virtual void advance(int steps) = 0;
    virtual int step() const = 0;
    virtual const std::vector<ErrorVec>& errors() const = 0;
    virtual const std::vector<double>& log_ratios() const = 0;
};

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual VehicleModel model() const = 0;
    // How many steps along `ref` this predictor can cover.
    virtual int max_steps(const ReferenceTrajectory& ref) const = 0;
    virtual std::unique_ptr<Propagation> propagate(const ReferenceTrajectory& ref,
                                                   std::vector<ErrorVec> e0,
                                                   std::vector<ControlVec> dist) const = 0;
};

// Ground truth: RK4 on the augmented Liouville ODE.
class OraclePredictor : public Predictor {
public:
    OraclePredictor(VehicleModel m, ClosedLoopParams cl) : m_(m), cl_(cl) {}
    VehicleModel model() const override { return m_; }
    int max_steps(const ReferenceTrajectory& ref) const override { return ref.steps(); }
    std::unique_ptr<Propagation> propagate(const ReferenceTrajectory& ref,
                                           std::vector<ErrorVec> e0,
                                           std::vector<ControlVec> dist) const override;

private:
    VehicleModel m_;
    ClosedLoopParams cl_;
};

} // namespace riskplan
