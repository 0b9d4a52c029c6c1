#include "ous/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ous {

GradReport grad_check(const std::function<double()>& f, const std::vector<ParamPtr>& params,
                      double eps, double scale_floor) {
  check(eps > 0.0, ErrorKind::Domain, "grad_check: eps must be positive");
  check(scale_floor > 0.0, ErrorKind::Domain, "grad_check: scale floor must be positive");
  GradReport rep;
  for (const ParamPtr& p : params) {
    check(p != nullptr, ErrorKind::Contract, "grad_check: null parameter");
    double* theta = p->value.mutable_data();
    for (size_t i = 0; i < p->value.size(); ++i) {
      double saved = theta[i];
      theta[i] = saved + eps;
      double fp = f();
      theta[i] = saved - eps;
      double fm = f();
      theta[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double analytic = p->gradient.data()[i];
      double denom = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
      double rel = std::abs(analytic - numeric) / denom;
      ++rep.coords;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = p->name + "[" + std::to_string(i) + "]";
        rep.analytic = analytic;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

GradReport grad_check_auto(const std::function<Var(Tape&)>& build,
                           const std::vector<ParamPtr>& params, double eps, double scale_floor) {
  for (const ParamPtr& p : params) p->zero_grad();
  {
    Tape tape(Dtype::f64);
    Var loss = build(tape);
    tape.backward(loss);
  }
  auto f = [&build]() {
    Tape tape(Dtype::f64);
    return build(tape).val().item();
  };
  return grad_check(f, params, eps, scale_floor);
}

}  // namespace ous
