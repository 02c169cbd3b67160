#pragma once

#include <cstdio>
#include <string>

namespace aniso {

/// Full double precision (17 significant digits), locale independent.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace aniso
