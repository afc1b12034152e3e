// Versioned binary container: magic, format version, JSON header, named
// float64 blobs, trailing FNV-1a checksum. Checkpoints and detector files
// share this layout; the exact byte format is documented in the README.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "planrank/numerics.hpp"

namespace planrank {

struct VersionMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BlobFile {
    std::uint32_t format_version = 0;
    nlohmann::ordered_json meta;
    std::vector<std::pair<std::string, NumArray>> blobs;
};

/// magic must be exactly 8 bytes.
void write_blob_file(const std::string& path, const std::string& magic,
                     std::uint32_t format_version, const nlohmann::ordered_json& meta,
                     const std::vector<std::pair<std::string, NumArray>>& blobs);

/// Verifies magic, version and checksum; truncation or bit damage raises
/// CorruptFileError, a wrong version raises VersionMismatchError.
BlobFile read_blob_file(const std::string& path, const std::string& magic,
                        std::uint32_t expected_version);

/// Header-only peek (magic + version + meta), checksum still verified.
nlohmann::ordered_json read_blob_meta(const std::string& path);

}  // namespace planrank
