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

#include <cmath>
#include <cstddef>

#include "tsg/core/error.hpp"
#include "tsg/core/tensor.hpp"
#include "tsg/scene/label_map.hpp"

namespace tsg::training {

enum class LossReduction { sum, mean };

/// Cross entropy of per-pixel class probabilities against a label map:
///   L = -sum_{i,j} log p_{gt(i,j)}(i, j)
/// `probs` holds one row per pixel in raster order and one column per class.
/// `mean` divides by the pixel count.
template <Real T>
double pixelwise_cross_entropy(const Tensor<T>& probs, const scene::LabelMap& gt,
                               LossReduction reduction = LossReduction::sum) {
  if (probs.rows() != gt.size() || probs.cols() != gt.num_classes()) {
    throw DimensionError(detail::concat("pixelwise_cross_entropy: probabilities are ",
                                        to_string(probs.shape()), " but the map has ", gt.size(),
                                        " pixels and ", gt.num_classes(), " classes"));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double row = 0.0;
    for (T p : probs.row(i)) {
      if (!(p >= T(0))) {
        throw ContractError(detail::concat("pixelwise_cross_entropy: pixel ", i,
                                           " has a negative or NaN probability"));
      }
      row += static_cast<double>(p);
    }
    if (std::abs(row - 1.0) > 1e-6) {
      throw ContractError(detail::concat("pixelwise_cross_entropy: pixel ", i,
                                         " probabilities sum to ", row, ", not 1"));
    }
    const double p = static_cast<double>(probs(i, gt.pixels()[i]));
    if (p <= 0.0) {
      throw NumericError(detail::concat("pixelwise_cross_entropy: pixel ", i,
                                        " gives zero probability to its true class"));
    }
    total -= std::log(p);
  }
  return reduction == LossReduction::sum ? total : total / static_cast<double>(probs.rows());
}

}  // namespace tsg::training
