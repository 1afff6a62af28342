#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sokorl/diff/params.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::diff {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t coords_checked = 0;
};

// Central-difference verification of reverse-mode gradients. `loss_fn` must
// rebuild the graph from scratch and return the scalar loss value, reading
// parameter values live from `params`. Run with T=double for tight tolerances.
template <typename T>
GradCheckReport grad_check(ParameterSetT<T>& params,
                           const std::function<double()>& loss_fn,
                           const std::function<void()>& backward_fn, double h = 1e-4,
                           int64_t max_coords_per_param = 0, uint64_t subsample_seed = 0) {
  params.zero_grads();
  backward_fn();

  GradCheckReport rep;
  Rng rng(subsample_seed ? subsample_seed : 1);
  for (size_t pi = 0; pi < params.count(); ++pi) {
    ParamT<T>& p = params[pi];
    const int64_t n = p.value.size();
    std::vector<int64_t> coords;
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      for (int64_t k = 0; k < max_coords_per_param; ++k)
        coords.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(n))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t k = 0; k < n; ++k) coords[static_cast<size_t>(k)] = k;
    }
    for (int64_t ix : coords) {
      const T keep = p.value[ix];
      p.value[ix] = keep + static_cast<T>(h);
      const double lp = loss_fn();
      p.value[ix] = keep - static_cast<T>(h);
      const double lm = loss_fn();
      p.value[ix] = keep;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = static_cast<double>(p.grad[ix]);
      const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
      const double rel = std::abs(num - ana) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = ix;
      }
    }
  }
  return rep;
}

}  // namespace sokorl::diff
