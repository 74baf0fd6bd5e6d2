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

#ifndef ARASIM_FORMAT_H_
#define ARASIM_FORMAT_H_

#include <charconv>
#include <string>
#include <vector>

namespace arasim {

// Shortest decimal form that parses back to the same double.
inline std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

inline std::string JoinDoubles(const std::vector<double>& values,
                               char separator = ';') {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out.push_back(separator);
    out += FormatDouble(values[i]);
  }
  return out;
}

}  // namespace arasim

#endif  // ARASIM_FORMAT_H_
