#pragma once

#include <string>

namespace slewload {

/// Shortest decimal string that round-trips to the same double, platform and
/// locale independent, so repeated runs produce byte-identical reports.
std::string format_double(double value);

}  // namespace slewload
