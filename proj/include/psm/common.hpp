#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace psm {

// Global numeric mode. f64 is used by tests, oracles and gradient checks,
// f32 by training. New tensors pick up the current mode; existing tensors
// keep the mode they were created in.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

// When false, all internal parallelism is disabled (single-threaded,
// bit-reproducible execution). Tests run with this off.
bool parallel_enabled();
void set_parallel_enabled(bool on);

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void fail_shape(const std::string& msg);

}  // namespace psm
