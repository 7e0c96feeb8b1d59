#pragma once

namespace rotapol::constants {

inline constexpr double hbar = 1.054571817e-34; // J s
inline constexpr double c_vacuum = 2.99792458e8; // m/s, default medium speed_of_light

} // namespace rotapol::constants
