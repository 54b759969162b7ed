#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace grcert {

using NodeId = std::int32_t;

/// Thrown on contract violations (bad shapes, invalid graphs, malformed files).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace grcert
