#pragma once

#include <string>

#include "zmt/tensor.hpp"

namespace zmt {

/// Tensor snapshot container: one line of JSON
///   {"axes": [...], "shape": [...], "dtype": "f64", "order": "row-major"}
/// terminated by '\n', followed by the payload as little-endian 64-bit
/// floats in canonical row-major layout.
void save_snapshot(const Tensor& t, const std::string& path);
Tensor load_snapshot(const std::string& path);

} // namespace zmt
