#include "mambahash/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mambahash/errors.hpp"

namespace mambahash {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  const double v = f().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor theta, double step,
                           double tol, const std::vector<std::size_t>& coords) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  const bool had_grad = theta.requires_grad();
  theta.set_requires_grad(true);
  theta.zero_grad();

  Tensor loss = f();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: objective is not finite");
  loss.backward();

  std::vector<std::size_t> probe = coords;
  if (probe.empty()) {
    probe.resize(theta.numel());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
  }

  GradCheckReport report;
  auto values = theta.mutable_data();
  auto grad = theta.grad();
  for (auto i : probe) {
    if (i >= values.size()) {
      throw ContractError("grad_check: coordinate " + std::to_string(i) + " out of range");
    }
    const double ad = grad.empty() ? 0.0 : grad[i];
    const double saved = values[i];
    values[i] = saved + step;
    const double up = evaluate(f);
    values[i] = saved - step;
    const double down = evaluate(f);
    values[i] = saved;
    const double fd = (up - down) / (2.0 * step);

    const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
    if (report.analytic.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
    if (err > tol) report.flagged.push_back(i);
    report.analytic.push_back(ad);
    report.numeric.push_back(fd);
  }

  theta.zero_grad();
  theta.set_requires_grad(had_grad);
  return report;
}

}  // namespace mambahash
