#pragma once

#include <filesystem>
#include <iosfwd>

#include "gaqat/network.hpp"

namespace gaqat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned little-endian binary checkpoint; the layout is documented in
/// docs/checkpoint.md. Round-trips bit-exactly.
void write_checkpoint(std::ostream& out, const QuantizedNetwork& net);
QuantizedNetwork read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const QuantizedNetwork& net);
QuantizedNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace gaqat
