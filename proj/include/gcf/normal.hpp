#pragma once

namespace gcf {

// Standard normal CDF.
double normal_cdf(double x);

// Inverse standard normal CDF for p in (0, 1). Rational approximation
// (relative error ~1e-9) followed by one Halley correction against erfc,
// which brings the result to near machine precision.
double normal_quantile(double p);

}  // namespace gcf
