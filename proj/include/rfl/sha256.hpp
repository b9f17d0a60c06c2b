#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rfl {

/// SHA-256 digest of `data`, hex-encoded (64 chars).
///
/// Used as the default one-way key hash when join keys are hashed before
/// leaving a client; collisions are assumed absent.
std::string sha256_hex(std::string_view data);

}  // namespace rfl
