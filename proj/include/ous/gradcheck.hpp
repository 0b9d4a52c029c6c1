#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ous/tape.hpp"

namespace ous {

struct GradReport {
  double max_rel_err = 0.0;
  std::string worst;        // "name[coord]" of the worst coordinate
  double analytic = 0.0;    // analytic derivative at the worst coordinate
  double numeric = 0.0;     // central difference at the worst coordinate
  size_t coords = 0;        // total coordinates compared
};

// Compares analytic gradients already accumulated in each parameter's
// `gradient` buffer against central differences (f(θ+eps) − f(θ−eps)) / (2·eps)
// of `f`, which must re-evaluate the scalar objective from the parameters'
// current values. Per-coordinate relative error is
// |analytic − numeric| / max(|analytic|, |numeric|, scale_floor).
//
// scale_floor keeps near-zero coordinates from inflating the report: central
// differences of an O(1) objective carry ~1e-9 absolute noise in float64, so
// a coordinate whose true gradient is below the floor is effectively compared
// absolutely. 1e-12 suits single ops; deep compositions, whose smallest
// coordinates sit near the noise level, should pass ~1e-6.
GradReport grad_check(const std::function<double()>& f, const std::vector<ParamPtr>& params,
                      double eps, double scale_floor = 1e-12);

// Convenience wrapper: builds the graph via `build` on a fresh float64 tape,
// runs backward to populate analytic gradients, then compares every parameter
// coordinate against central differences.
GradReport grad_check_auto(const std::function<Var(Tape&)>& build,
                           const std::vector<ParamPtr>& params, double eps,
                           double scale_floor = 1e-12);

}  // namespace ous
