#pragma once

#include <functional>
#include <span>

#include "ladder/tensor.hpp"

namespace ladder {

/// Compares reverse-mode gradients against central finite differences.
///
/// `build_loss` must rebuild the scalar loss from the current parameter
/// values on every call (it is invoked many times). Returns the maximum over
/// all parameter coordinates of
///
///   |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
///
/// where numeric = (f(theta + eps*e) - f(theta - eps*e)) / (2*eps).
///
/// Parameters that do not influence the loss contribute zero error. Existing
/// gradient buffers on `params` are cleared. Throws ContractError when eps
/// lies outside [1e-7, 1e-3], when the loss is not scalar, or when two
/// evaluations at identical parameters disagree (non-deterministic loss);
/// DomainError when the loss is not finite.
double grad_check(const std::function<Tensor()>& build_loss,
                  std::span<const Tensor> params, double eps);

}  // namespace ladder
