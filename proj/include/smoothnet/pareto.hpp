// Copyright 2026 The SmoothNet Authors.
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

// Pareto-front extraction over (privacy cost, utility) points.

#pragma once

#include <vector>

#include "smoothnet/common.hpp"

namespace smoothnet {

struct ParetoPoint {
  double epsilon = 0.0;
  double accuracy = 0.0;
};

// Returns the points not dominated by any other, sorted by epsilon
// ascending. A point is dominated when some other point has epsilon <= its
// epsilon and accuracy >= its accuracy with at least one strict. Points
// sharing an epsilon keep only the best accuracy. Requires finite values.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

}  // namespace smoothnet
