#pragma once

#include <string>

namespace vfo {

// shortest round-trip decimal form, 17 significant digits
std::string fmt_g17(double v);

}
