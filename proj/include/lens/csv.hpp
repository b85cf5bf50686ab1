#pragma once

#include <cstdio>
#include <string>

namespace lens {

// Round-trip formatting for result values; identical doubles always format
// to identical bytes, which the CSV determinism contract relies on.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Shorter rendering for configuration values (eps, scales).
inline std::string format_config_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// Wall-clock columns are 0 unless timing was requested, keeping default
// outputs byte-identical across runs and thread counts.
inline std::string format_wall_ms(double v) {
    if (v == 0.0) return "0";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace lens
