#pragma once

#include <cstdio>
#include <string>

namespace lsoc::io {

/// Shortest round-trip decimal form; identical strings for identical doubles,
/// so rerunning a manifest yields byte-identical files.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace lsoc::io
