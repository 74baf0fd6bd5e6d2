//
// Copyright 2026 Google LLC
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef ARASIM_ARASIM_H_
#define ARASIM_ARASIM_H_

#include "arasim/csv.h"
#include "arasim/dataset.h"
#include "arasim/error_model.h"
#include "arasim/format.h"
#include "arasim/harness.h"
#include "arasim/matrix.h"
#include "arasim/mechanisms.h"
#include "arasim/metrics.h"
#include "arasim/optimizer.h"
#include "arasim/parallel.h"
#include "arasim/pipeline.h"
#include "arasim/rng.h"
#include "arasim/synthgen.h"

#endif  // ARASIM_ARASIM_H_
