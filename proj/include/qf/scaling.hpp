#pragma once

namespace qf {

// Min-max normalization constants, fitted on observed training data and
// stored alongside model checkpoints so forecasts can be mapped back.
struct MinMaxScale {
    double lo = 0.0;
    double hi = 1.0;

    double apply(double x) const { return (x - lo) / (hi - lo); }
    double invert(double y) const { return lo + y * (hi - lo); }
};

}  // namespace qf
