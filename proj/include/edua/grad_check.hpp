#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "edua/autodiff.hpp"
#include "edua/errors.hpp"

namespace edua {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_param = -1;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of accumulated parameter gradients against a
// re-evaluable scalar loss. `loss_fn` must rebuild its graph from the current
// parameter values on every call. Relative error uses max(|a|,|b|) as the
// denominator and falls back to the absolute difference when both gradients
// are below 1e-8.
inline GradCheckResult grad_check(const std::function<double()>& loss_fn,
                                  const std::vector<Parameter*>& params,
                                  double step = 1e-5) {
  for (Parameter* p : params) p->zero_grad();

  GradCheckResult res;
  {
    const double base = loss_fn();
    if (!std::isfinite(base)) throw NumericError("loss is not finite at the evaluation point");
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (int i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double lp = loss_fn();
      p.value[i] = saved - step;
      const double lm = loss_fn();
      p.value[i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) throw NumericError("loss is not finite under perturbation");

      const double numeric = (lp - lm) / (2.0 * step);
      const double analytic = p.grad[i];
      const double denom = std::max(std::abs(numeric), std::abs(analytic));
      const double err = denom < 1e-8 ? std::abs(numeric - analytic) : std::abs(numeric - analytic) / denom;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = static_cast<int>(pi);
        res.worst_index = i;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

// Convenience wrapper: runs forward+backward once to populate gradients,
// then checks them against finite differences of the forward-only closure.
inline GradCheckResult grad_check_graph(const std::function<Var(Graph&)>& build,
                                        const std::vector<Parameter*>& params,
                                        double step = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss.id);
  }
  auto loss_fn = [&]() {
    Graph g;
    return build(g).val()[0];
  };
  // Gradients are already populated; evaluate differences only.
  GradCheckResult res;
  const double base = loss_fn();
  if (!std::isfinite(base)) throw NumericError("loss is not finite at the evaluation point");
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (int i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double lp = loss_fn();
      p.value[i] = saved - step;
      const double lm = loss_fn();
      p.value[i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) throw NumericError("loss is not finite under perturbation");
      const double numeric = (lp - lm) / (2.0 * step);
      const double analytic = p.grad[i];
      const double denom = std::max(std::abs(numeric), std::abs(analytic));
      const double err = denom < 1e-8 ? std::abs(numeric - analytic) : std::abs(numeric - analytic) / denom;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = static_cast<int>(pi);
        res.worst_index = i;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace edua
