#pragma once

namespace fhvae {

inline constexpr const char* kVersionString = "fhvae 0.1.0";

}  // namespace fhvae
