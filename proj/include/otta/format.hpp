#pragma once

#include <cstdio>
#include <string>

namespace otta {

/// %.*g formatting; digits significant decimal digits.
inline std::string fmt_g(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

/// 9 significant digits: the CSV contract.
inline std::string fmt_g9(double v) { return fmt_g(v, 9); }

/// 17 significant digits: enough for a bit-exact double round trip.
inline std::string fmt_g17(double v) { return fmt_g(v, 17); }

}  // namespace otta
