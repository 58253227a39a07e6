#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>

#include "spr/types.hpp"

// Binary dataset container.  Fixed 48-byte header, then the payload:
//
//   offset  size  field
//        0     8  magic "SPRDATA\0"
//        8     4  version, u32 = 1
//       12     4  dtype, u32 = 1 (IEEE-754 binary64, little endian)
//       16     8  n, u64
//       24     8  p, u64
//       32     8  c, u64
//       40     1  has_true_labels, u8 in {0, 1}
//       41     7  zero padding
//       48        X row-major, n*p doubles
//                 observed labels, n i64 values in [0, c)
//                 true labels (only when has_true_labels), n i64 values
//
// All integers little endian.  The file size must equal the header plus
// 8 * (n*p + n * (1 + has_true_labels)) bytes exactly; anything else is
// rejected as malformed.
namespace spr::io {

inline constexpr char dataset_magic[8] = {'S', 'P', 'R', 'D', 'A', 'T', 'A', '\0'};
inline constexpr std::uint32_t dataset_version = 1;

// Writes through a sibling temp file and renames into place, so readers never
// observe a partial file.  Refuses to replace an existing path unless force.
void atomic_write(const std::filesystem::path& path, bool force,
                  const std::function<void(std::ostream&)>& body);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data,
                  bool force = false);

// Throws format_error on bad magic, unknown version or dtype, size mismatch,
// or out-of-range labels.
[[nodiscard]] LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace spr::io
