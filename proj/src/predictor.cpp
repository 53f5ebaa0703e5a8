#include "riskplan/predictor.hpp"

#include "riskplan/errors.hpp"
#include "riskplan/parallel.hpp"

#include <atomic>
#include <limits>

namespace riskplan {

namespace {

class OraclePropagation : public Propagation {
public:
    OraclePropagation(VehicleModel m, ClosedLoopParams cl, const ReferenceTrajectory& ref,
                      std::vector<ErrorVec> e0, std::vector<ControlVec> dist)
        : m_(m), cl_(cl), ref_(ref), dist_(std::move(dist)), errors_(std::move(e0)),
          log_ratios_(errors_.size(), 0.0) {
        const int ei = error_dim(m_) - 1;
        for (ErrorVec& e : errors_) e[ei] = wrap_angle(e[ei]);
    }

    void advance(int steps) override {
        if (steps <= 0) return;
        if (step_ + steps > ref_.steps())
            throw HorizonExceeded("oracle propagation: step " + std::to_string(step_ + steps) +
                                  " beyond reference");
        std::atomic<long long> first_bad{std::numeric_limits<long long>::max()};
        parallel_for(static_cast<std::int64_t>(errors_.size()), [&](std::int64_t i) {
            try {
                AugmentedState s{errors_[i], log_ratios_[i]};
                s = advance_augmented(m_, s, ref_, cl_, dist_[i], step_, steps);
                errors_[i] = s.e;
                log_ratios_[i] = s.log_rho;
            } catch (const NonFiniteState&) {
                long long cur = first_bad.load();
                while (i < cur && !first_bad.compare_exchange_weak(cur, i)) {
                }
            }
        });
        if (first_bad.load() != std::numeric_limits<long long>::max())
            throw NonFiniteState("oracle propagation: sample " + std::to_string(first_bad.load()) +
                                 " diverged");
        step_ += steps;
    }

    int step() const override { return step_; }
    const std::vector<ErrorVec>& errors() const override { return errors_; }
    const std::vector<double>& log_ratios() const override { return log_ratios_; }

private:
    VehicleModel m_;
    ClosedLoopParams cl_;
    ReferenceTrajectory ref_;
    std::vector<ControlVec> dist_;
    std::vector<ErrorVec> errors_;
    std::vector<double> log_ratios_;
    int step_ = 0;
};

} // namespace

std::unique_ptr<Propagation> OraclePredictor::propagate(const ReferenceTrajectory& ref,
                                                        std::vector<ErrorVec> e0,
                                                        std::vector<ControlVec> dist) const {
    if (dist.size() != e0.size())
        throw ConfigError("oracle propagation: one disturbance draw per sample required");
    return std::make_unique<OraclePropagation>(m_, cl_, ref, std::move(e0), std::move(dist));
}

} // namespace riskplan
