#pragma once

#include <vector>

namespace cbmm {

// A bivariate observation. The library is specialised to D=2 throughout.
struct Point2 {
    double x1 = 0.0;
    double x2 = 0.0;
};

// Component indices are 0-based in memory; file formats use 1-based labels.
using Labels = std::vector<int>;

}  // namespace cbmm
