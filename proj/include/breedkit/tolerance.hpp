#pragma once

#include <cmath>

namespace breedkit {

// |answer - reference| <= 10% of |reference|, boundary inclusive. Written as
// 10·|d| <= |r| so that exact boundaries such as 165 vs 150 do not depend on
// the inexact binary value of 0.1.
inline bool within_ten_percent(double answer, double reference) {
    return 10.0 * std::fabs(answer - reference) <= std::fabs(reference);
}

} // namespace breedkit
