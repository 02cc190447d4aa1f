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

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace cbattack {

// Seed derivation ("cbkdf-v1"):
//   derive_seed(parent, tag)        = mix64(parent ^ mix64(fnv1a64(tag)))
//   derive_seed(parent, tag, index) = mix64(derive_seed(parent, tag) + mix64(index + 1))
// where mix64 is the splitmix64 finalizer. Every seed used by an experiment is
// derived from the master seed through this function, keyed by role strings
// such as "attack-token", "verify-token" and "optimizer".

constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) noexcept
{
    return mix64(parent ^ mix64(fnv1a64(tag)));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index) noexcept
{
    return mix64(derive_seed(parent, tag) + mix64(index + 1));
}

/// Portable random stream ("cbrng-v1").
///
/// The engine is std::mt19937_64 seeded with mix64(seed), whose output sequence
/// is fixed by the C++ standard. Distributions are implemented here rather than
/// taken from <random> because the standard leaves their algorithms to the
/// vendor: uniforms use the top 53 bits of one draw, normals use Box-Muller
/// with both outputs consumed in order, bounded integers use rejection.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal draw.
    double normal();

    /// Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n);

    bool coin() { return (engine_() >> 63) != 0; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cbattack
