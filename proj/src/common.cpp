#include "segbench/common.hpp"

#include <cstdio>

namespace segbench {

std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace segbench
