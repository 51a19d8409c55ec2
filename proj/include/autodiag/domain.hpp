#pragma once

#include <string>
#include <string_view>

#include "autodiag/errors.hpp"

namespace autodiag {

// Shared powertrain vocabulary. Label strings in sidecar metadata, the
// classifier chain, and vehicle descriptors all use these spellings.

enum class Fuel { gasoline, diesel };
enum class Aspiration { natural, turbo };
enum class EngineLayout { inline_, vee, flat };

inline std::string to_string(Fuel f) {
    return f == Fuel::gasoline ? "gasoline" : "diesel";
}

inline std::string to_string(Aspiration a) {
    return a == Aspiration::natural ? "natural" : "turbo";
}

inline std::string to_string(EngineLayout c) {
    switch (c) {
        case EngineLayout::inline_: return "inline";
        case EngineLayout::vee: return "vee";
        case EngineLayout::flat: return "flat";
    }
    return "inline";
}

inline Fuel fuel_from_string(std::string_view s) {
    if (s == "gasoline") return Fuel::gasoline;
    if (s == "diesel") return Fuel::diesel;
    throw DataError("unknown fuel label: " + std::string(s));
}

inline Aspiration aspiration_from_string(std::string_view s) {
    if (s == "natural") return Aspiration::natural;
    if (s == "turbo") return Aspiration::turbo;
    throw DataError("unknown aspiration label: " + std::string(s));
}

inline EngineLayout layout_from_string(std::string_view s) {
    if (s == "inline") return EngineLayout::inline_;
    if (s == "vee") return EngineLayout::vee;
    if (s == "flat") return EngineLayout::flat;
    throw DataError("unknown engine layout: " + std::string(s));
}

}  // namespace autodiag
