#include "vfo/csvio.hpp"

#include <cstdio>

namespace vfo {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}
