#pragma once

#include <cstdint>

namespace psm::macs {

// Global multiply-add counter. Every numeric kernel reports its nominal
// multiply-add count once per call; transcendentals and plain additions are
// not counted. The counter backs the linear-complexity assertions.
void add(std::uint64_t n);
std::uint64_t count();
void reset();

}  // namespace psm::macs
