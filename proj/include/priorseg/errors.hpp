#pragma once

#include <stdexcept>
#include <string>

namespace priorseg {

// Input value outside a noise family's support.
struct SupportError : std::runtime_error {
    explicit SupportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate sample set (zero variance, all-zero Rayleigh, ...).
struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometric precondition violated (empty mask, vanished contour, ...).
struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Configuration / file problems surfaced by the CLI layer.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace priorseg
