#include "psm/macs.hpp"

namespace psm::macs {

namespace {
std::uint64_t g_count = 0;
}

void add(std::uint64_t n) { g_count += n; }
std::uint64_t count() { return g_count; }
void reset() { g_count = 0; }

}  // namespace psm::macs
