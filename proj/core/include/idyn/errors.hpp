#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace idyn {

enum class ErrorKind {
    NonFiniteValue,
    NonFiniteState,
    SingularMass,
    SingularHighGain,
    RankDeficientOutput,
    NewtonDivergence,
    OutOfDomain,
    DomainBoundary,
    InfeasibleParameters,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for numerical failures; callers branch on kind().
class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

}  // namespace idyn
