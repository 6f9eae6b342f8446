#pragma once

// Golden-file comparison. Set PIS_UPDATE_GOLDEN=1 to (re)write the files.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace golden {

inline std::string path(const std::string& name) { return std::string(PIS_TEST_DATA) + "/golden/" + name; }

inline std::string read_file(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool updating() {
    const char* v = std::getenv("PIS_UPDATE_GOLDEN");
    return v != nullptr && std::string(v) == "1";
}

// True when `actual` equals the stored golden file (after writing it in update mode).
inline bool matches(const std::string& name, const std::string& actual) {
    if (updating()) {
        std::ofstream(path(name), std::ios::binary) << actual;
        return true;
    }
    return read_file(path(name)) == actual;
}

}  // namespace golden
