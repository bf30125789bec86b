// Copyright (c) 2026 The sdet Authors. All Rights Reserved.
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

#include "sdet/geometry/box.hpp"

namespace sdet::geometry {

struct GtBox {
  Box3D box;
  int label = 0;
};

struct Detection {
  Box3D box;
  int label = 0;
  double score = 0.0;  // in [0, 1]
};

}  // namespace sdet::geometry
