// Copyright 2026 The cbattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cbattack::csv {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Strict parse of a whole field; returns false on trailing garbage.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

/// Splits one line on commas. Quoting is not supported.
std::vector<std::string_view> split(std::string_view line);

/// Removes a trailing '\r' left by CRLF files.
std::string_view chomp(std::string_view line);

} // namespace cbattack::csv
