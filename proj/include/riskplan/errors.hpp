#pragma once

#include <stdexcept>
#include <string>

namespace riskplan {

struct NonFiniteState : std::runtime_error {
    explicit NonFiniteState(const std::string& what) : std::runtime_error(what) {}
};

struct HorizonExceeded : std::runtime_error {
    explicit HorizonExceeded(const std::string& what) : std::runtime_error(what) {}
};

struct DivergedTraining : std::runtime_error {
    explicit DivergedTraining(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySupport : std::runtime_error {
    explicit EmptySupport(const std::string& what) : std::runtime_error(what) {}
};

struct InfeasibleNlp : std::runtime_error {
    InfeasibleNlp(const std::string& what, double terminal_error, double penetration)
        : std::runtime_error(what), terminal_error(terminal_error), penetration(penetration) {}
    double terminal_error;
    double penetration;
};

struct RepairFailed : std::runtime_error {
    explicit RepairFailed(const std::string& what) : std::runtime_error(what) {}
};

struct PlanFailed : std::runtime_error {
    PlanFailed(const std::string& what, int segment) : std::runtime_error(what), segment(segment) {}
    int segment;
};

struct GenerationExhausted : std::runtime_error {
    explicit GenerationExhausted(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A required input file (dataset, model, manifest) is absent or unreadable.
struct MissingArtifact : std::runtime_error {
    explicit MissingArtifact(const std::string& what) : std::runtime_error(what) {}
};

} // namespace riskplan
