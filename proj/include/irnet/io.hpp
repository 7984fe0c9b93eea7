#pragma once

// File helpers shared by the exporters. All writers go through atomic_write
// so a crash or exception never leaves a partial file at the target path.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "irnet/common.hpp"

namespace irnet {

inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& emit,
                         bool binary = false) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
        if (!out) throw ConfigError("cannot open for writing: " + tmp.string());
        emit(out);
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw ConfigError("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

// Decimal form with enough digits to parse back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// Short human-facing form for names and labels; not round-trip safe.
inline std::string format_compact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace irnet
