#pragma once

#include <cmath>
#include <string>

#include "pvgnn/errors.hpp"
#include "pvgnn/tensor.hpp"

namespace pvgnn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  int64_t step = 0;  // number of completed updates
};

// One Adam update over every parameter in the store, using the gradients
// accumulated since the last zero_grad(). Rejects non-finite gradients before
// touching any parameter so a failed step leaves the model intact.
inline void adam_step(ParamStore& params, AdamState& state) {
  for (size_t pi = 0; pi < params.size(); ++pi) {
    const Parameter& p = params[pi];
    for (double gv : p.grad)
      if (!std::isfinite(gv))
        throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  state.step += 1;
  const AdamConfig& c = state.config;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      double gv = p.grad[i];
      p.m[i] = c.beta1 * p.m[i] + (1.0 - c.beta1) * gv;
      p.v[i] = c.beta2 * p.v[i] + (1.0 - c.beta2) * gv * gv;
      double mhat = p.m[i] / bc1;
      double vhat = p.v[i] / bc2;
      p.value[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace pvgnn
