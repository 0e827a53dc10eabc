#pragma once

#include <stdexcept>
#include <string>

namespace fpulab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepTooLarge : Error { using Error::Error; };
struct WindowViolation : Error { using Error::Error; };
struct OverflowGuard : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct SingularLinearization : Error { using Error::Error; };
struct ConsistencyViolation : Error { using Error::Error; };
struct DegeneratePairing : Error { using Error::Error; };
struct ProjectionFailure : Error { using Error::Error; };
struct SingularA : Error { using Error::Error; };
struct SeparationTooSmall : Error { using Error::Error; };
struct InteractionWindowTooLong : Error { using Error::Error; };
struct SpeedViolation : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct MissingRequired : Error { using Error::Error; };

} // namespace fpulab
