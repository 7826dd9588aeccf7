#include "pcwqd/error.hpp"

namespace pcwqd {

std::string_view to_string(FitFailure kind) {
    switch (kind) {
    case FitFailure::NonConvergence: return "NonConvergence";
    case FitFailure::IllConditioned: return "IllConditioned";
    case FitFailure::InsufficientSpan: return "InsufficientSpan";
    case FitFailure::InsufficientCounts: return "InsufficientCounts";
    case FitFailure::Unidentifiable: return "Unidentifiable";
    case FitFailure::Unreachable: return "Unreachable";
    case FitFailure::QuadratureFailure: return "QuadratureFailure";
    }
    return "Unknown";
}

} // namespace pcwqd
