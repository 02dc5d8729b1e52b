#pragma once

#include <stdexcept>
#include <string>

namespace lsoc {

/// Base error; `kind` drives the CLI exit-code mapping (config=2, numeric=3,
/// convergence=4).
class Error : public std::runtime_error {
public:
    enum class Kind { config, numeric, convergence };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

#define LSOC_DEFINE_ERROR(NAME, KIND)                                              \
    class NAME : public Error {                                                    \
    public:                                                                        \
        explicit NAME(const std::string& what) : Error(Error::Kind::KIND, what) {} \
    };

// network
LSOC_DEFINE_ERROR(DisconnectedGraph, config)
LSOC_DEFINE_ERROR(InvalidEdge, config)
// lsmdp
LSOC_DEFINE_ERROR(SupportViolation, numeric)
LSOC_DEFINE_ERROR(NoBoundaryReachable, numeric)
LSOC_DEFINE_ERROR(MaxIterationsExceeded, convergence)
LSOC_DEFINE_ERROR(DegenerateDenominator, numeric)
// consensus
LSOC_DEFINE_ERROR(TooFewRows, config)
LSOC_DEFINE_ERROR(RankDeficientBlock, numeric)
LSOC_DEFINE_ERROR(InfeasibleInitialization, numeric)
// pathintegral
LSOC_DEFINE_ERROR(SingularR, numeric)
LSOC_DEFINE_ERROR(NonFiniteState, numeric)
LSOC_DEFINE_ERROR(SingularH, numeric)
// reps
LSOC_DEFINE_ERROR(SingularCovariance, numeric)
LSOC_DEFINE_ERROR(OptimizerDiverged, convergence)
LSOC_DEFINE_ERROR(DegenerateDesign, numeric)
// composition
LSOC_DEFINE_ERROR(MisalignedStateSpaces, config)
LSOC_DEFINE_ERROR(IncompatibleWeights, config)
// scenarios / cli
LSOC_DEFINE_ERROR(ConfigError, config)
LSOC_DEFINE_ERROR(ParseError, config)

#undef LSOC_DEFINE_ERROR

} // namespace lsoc
