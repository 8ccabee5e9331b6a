#pragma once

#include <filesystem>
#include <optional>

#include "selftune/model.hpp"

namespace selftune {

/// Weights container layout (all integers little-endian):
///
///   "STIW"            4-byte magic
///   u32 version       kWeightsVersion
///   u64 fingerprint   ModelSpec fingerprint of the parameters
///   u32 count         number of records
///   count x record:
///     u32 name_len, name bytes (UTF-8, no terminator)
///     u32 rank, rank x u32 dims
///     prod(dims) x f32 values
inline constexpr std::uint32_t kWeightsVersion = 1;

void save_weights(const ModelParams& params, const std::filesystem::path& path);

/// Throws IoError / FormatError on malformed files and ContractError when
/// `expected_fingerprint` is given and differs from the stored one.
ModelParams load_weights(const std::filesystem::path& path,
                         std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

}  // namespace selftune
