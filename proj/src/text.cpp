#include "slewload/text.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace slewload {

std::string format_double(double value) {
  if (value == 0.0) value = 0.0;  // normalize -0
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) {
    throw std::runtime_error("number formatting failed");
  }
  return std::string(buffer, ptr);
}

}  // namespace slewload
