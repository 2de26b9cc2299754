#include "ladder/grad_check.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "ladder/errors.hpp"

namespace ladder {

double grad_check(const std::function<Tensor()>& build_loss,
                  std::span<const Tensor> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("grad_check: eps must lie in [1e-7, 1e-3], got " +
                        std::to_string(eps));
  }

  auto eval = [&build_loss]() {
    NoGradGuard ng;
    Tensor out = build_loss();
    if (!out.defined() || out.size() != 1) {
      throw ContractError("grad_check: loss must be a defined scalar");
    }
    return out.value();
  };

  const double probe1 = eval();
  if (!std::isfinite(probe1)) {
    throw DomainError("grad_check: loss is not finite at the given parameters");
  }
  if (probe1 != eval()) {
    throw ContractError(
        "grad_check: loss changed between evaluations at identical "
        "parameters; the loss function must be deterministic");
  }

  for (Tensor p : params) {
    p.zero_grad();
  }
  Tensor loss = build_loss();
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("grad_check: loss must be a defined scalar");
  }
  backward(loss);

  double worst = 0.0;
  for (const Tensor& handle : params) {
    Tensor p = handle;  // cheap alias; pokes below are visible to build_loss
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto vals = p.data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + eps;
      const double up = eval();
      vals[i] = keep - eps;
      const double down = eval();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace ladder
