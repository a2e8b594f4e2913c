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

#include "smoothnet/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smoothnet {

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  for (const ParetoPoint& p : points) {
    if (!std::isfinite(p.epsilon) || !std::isfinite(p.accuracy)) {
      throw ConfigError("pareto_front: points must be finite");
    }
  }
  std::vector<ParetoPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(),
            [](const ParetoPoint& a, const ParetoPoint& b) {
              if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
              return a.accuracy > b.accuracy;
            });
  // One sweep in epsilon order: a point survives iff its accuracy strictly
  // beats everything cheaper, and only the first (best) point at each
  // epsilon is considered.
  std::vector<ParetoPoint> front;
  double best_acc = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i].epsilon == sorted[i - 1].epsilon) continue;
    if (sorted[i].accuracy > best_acc) {
      front.push_back(sorted[i]);
      best_acc = sorted[i].accuracy;
    }
  }
  return front;
}

}  // namespace smoothnet
