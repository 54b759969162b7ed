#pragma once

#include <cstddef>
#include <string>

#include "grcert/graph.hpp"

namespace grcert {

/// Serialization options for the model container: a JSON manifest next to
/// raw little-endian IEEE-754 tensor files.
struct GmfOptions {
    std::string dtype = "f64";   // "f64" or "f32" tensor payloads
    bool writeChecksums = true;  // embed sha256 of each tensor file
};

/// Writes `path` (the manifest) plus one sibling .bin file per tensor.
void saveModel(const Graph& g, const std::string& path, const GmfOptions& opts = {});

/// Loads a manifest written by saveModel (or by hand); verifies the format
/// version, byte lengths, any embedded checksums, and graph validity.
Graph loadModel(const std::string& path);

/// Hex SHA-256 of a byte range.
std::string sha256Hex(const void* data, std::size_t len);

}  // namespace grcert
