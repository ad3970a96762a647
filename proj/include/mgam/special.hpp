#pragma once

// Scalar special functions needed by the likelihood families and the
// inference helpers. Double precision only.

namespace mgam {

// psi(x), psi'(x), psi''(x) for x > 0 (recurrence into the asymptotic zone).
double digamma(double x);
double trigamma(double x);
double tetragamma(double x);

// Standard normal quantile, p in (0,1). Accurate to ~1e-15 (Acklam seed +
// two Halley corrections against std::erfc).
double normal_quantile(double p);

} // namespace mgam
