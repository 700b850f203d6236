// Copyright 2026 The TSG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "tsg/core/params.hpp"
#include "tsg/core/tape.hpp"

namespace tsg {

// A scalar objective built on a fresh tape from the given parameters.
using ScalarFn = std::function<Var<double>(Tape<double>&, const ParamStore<double>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

namespace detail {

inline double evaluate_scalar(const ScalarFn& f, const ParamStore<double>& params) {
  Tape<double> tape;
  Var<double> out = f(tape, params);
  const auto& v = out.value();
  if (v.rows() != 1 || v.cols() != 1) throw ContractError("objective must be 1x1");
  if (!std::isfinite(v(0, 0))) throw NumericError("objective evaluated to a non-finite value");
  return v(0, 0);
}

}  // namespace detail

/// Compares tape gradients with central differences over every parameter
/// entry. Relative error per entry is |a - n| / max(|a|, |n|, 1e-6); the
/// floor keeps entries whose true gradient is zero from being scored on
/// central-difference round-off alone.
/// The store's gradient slots are overwritten with the analytic gradient.
inline GradCheckResult finite_difference_check(const ScalarFn& f, ParamStore<double>& params,
                                               double step = 1e-5) {
  if (!(step > 0.0)) throw ContractError("finite_difference_check: step must be positive");
  params.zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = f(tape, params);
    if (!std::isfinite(loss.value()(0, 0))) {
      throw NumericError("objective evaluated to a non-finite value");
    }
    tape.backward(loss, params);
  }
  GradCheckResult result;
  for (const auto& name : params.names()) {
    const std::size_t n = params.value(name).size();
    for (std::size_t i = 0; i < n; ++i) {
      double& x = params.value(name)[i];
      const double saved = x;
      x = saved + step;
      const double fp = detail::evaluate_scalar(f, params);
      x = saved - step;
      const double fm = detail::evaluate_scalar(f, params);
      x = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = params.grad(name)[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace tsg
