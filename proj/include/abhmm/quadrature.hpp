// Adaptive Simpson quadrature on a closed interval.

#pragma once

#include <cmath>
#include <stdexcept>

namespace abhmm {

namespace detail {

template <class F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  // Richardson criterion: 15|delta| estimates the composite-rule error.
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) throw std::runtime_error("integrate: adaptive quadrature failed to converge");
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Integrates f over [a, b] to the given absolute tolerance.
template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-10) {
  if (!(a < b)) throw std::invalid_argument("integrate: requires a < b");
  if (!(tol > 0.0)) throw std::invalid_argument("integrate: tolerance must be positive");
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 60);
}

}  // namespace abhmm
