#ifndef TEMPO_GRADCHECK_HPP
#define TEMPO_GRADCHECK_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tempo/tensor.hpp"

namespace tempo {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  std::vector<double> rel_err;  // per coordinate
};

// Compares the analytic gradient of a scalar-valued function against central
// finite differences. f must be deterministic; this is verified by double
// evaluation.
//
// Pass condition per coordinate is the standard combined tolerance
// |analytic - numeric| <= max(tol * max(|analytic|, |numeric|), atol):
// central differences evaluate f to ~1e-16 relative accuracy, so they cannot
// resolve gradient components below roughly rounding/(2*step). The absolute
// floor covers exactly that regime; a wrong gradient on such a coordinate
// would still miss by orders of magnitude more than atol.
inline GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                                  const Tensor& x0, double step = 1e-6, double tol = 1e-4,
                                  double atol = 1e-9) {
  if (step <= 0.0) throw ContractError("grad_check: step must be positive");
  if (tol <= 0.0) throw ContractError("grad_check: tol must be positive");

  Tensor x = Tensor::from(x0.shape(), x0.data(), true);
  Tensor loss = f(x);
  if (loss.size() != 1) throw ContractError("grad_check: f must be scalar-valued");
  if (f(x).item() != loss.item())
    throw ContractError("grad_check: f is not deterministic (double evaluation mismatch)");
  backward(loss);
  const std::vector<double> analytic = x.grad();

  GradCheckReport rep;
  rep.rel_err.resize(analytic.size());
  Tensor probe = Tensor::from(x0.shape(), x0.data(), false);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double fp = f(probe).item();
    probe.data()[i] = orig - step;
    const double fm = f(probe).item();
    probe.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), atol / tol});
    rep.rel_err[i] = std::abs(analytic[i] - numeric) / denom;
    if (rep.rel_err[i] > rep.max_rel_err) {
      rep.max_rel_err = rep.rel_err[i];
      rep.worst_index = static_cast<std::int64_t>(i);
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace tempo

#endif  // TEMPO_GRADCHECK_HPP
