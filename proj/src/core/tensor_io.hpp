#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "core/tensor.hpp"

namespace metalora {

// MTK1 tensor container:
//   8 bytes  magic "MTKTNSR1"
//   1 byte   element width (4 or 8)
//   4 bytes  little-endian order d
//   d*4 bytes little-endian extents
//   data     row-major little-endian IEEE-754, element width per flag
// Readers reject a wrong magic and any length mismatch.

void write_mtk1(std::ostream& os, const DenseTensor& t);
DenseTensor read_mtk1(std::istream& is, const std::string& origin = "<stream>");

void save_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor load_tensor(const std::filesystem::path& path);

}  // namespace metalora
