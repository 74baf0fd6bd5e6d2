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

#ifndef ARASIM_STATUS_MACROS_H_
#define ARASIM_STATUS_MACROS_H_

#include "absl/status/status.h"
#include "absl/status/statusor.h"

#define ARASIM_STATUS_CONCAT_INNER_(x, y) x##y
#define ARASIM_STATUS_CONCAT_(x, y) ARASIM_STATUS_CONCAT_INNER_(x, y)

// Returns early from the enclosing function if `expr` is not OK.
#define RETURN_IF_ERROR(expr)                        \
  do {                                               \
    const absl::Status _arasim_status = (expr);      \
    if (!_arasim_status.ok()) return _arasim_status; \
  } while (0)

#define ASSIGN_OR_RETURN_IMPL_(tmp, lhs, rexpr) \
  auto tmp = (rexpr);                           \
  if (!tmp.ok()) return tmp.status();           \
  lhs = std::move(*tmp)

// Evaluates `rexpr` (a StatusOr), returning its status on error and otherwise
// moving the value into `lhs`.
#define ASSIGN_OR_RETURN(lhs, rexpr) \
  ASSIGN_OR_RETURN_IMPL_(            \
      ARASIM_STATUS_CONCAT_(_arasim_statusor_, __LINE__), lhs, rexpr)

#endif  // ARASIM_STATUS_MACROS_H_
