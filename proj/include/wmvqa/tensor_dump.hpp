#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wmvqa {

// .tdump layout: a 256-byte header holding compact JSON
//   {"name", "shape", "dtype":"float32", "meta":{...}}
// padded with spaces and ending in '\n', followed by the row-major
// little-endian float32 payload.
inline constexpr std::size_t kTdumpHeaderBytes = 256;

enum class DumpKind { Attention, Embedding };

struct DumpMeta {
  std::string model_name;
  std::string item_id;
  std::string condition_id;
  int layer_index = 0;
  DumpKind kind = DumpKind::Attention;
  // Image tokens occupy sequence positions [patch_offset, patch_offset + rows*cols)
  // laid out row-major over a rows x cols patch grid.
  std::optional<std::array<int, 2>> patch_grid;
  std::size_t patch_offset = 0;
  // Embedding positions >= valid_length are padding.
  std::optional<std::size_t> valid_length;

  friend bool operator==(const DumpMeta&, const DumpMeta&) = default;
};

struct TensorDump {
  std::string name;
  std::vector<std::size_t> shape;  // attention: [heads, seq, seq]; embedding: [seq, hidden]
  std::vector<float> data;
  DumpMeta meta;

  std::size_t element_count() const;
  // Shape/length/kind consistency; throws AnalysisInputError.
  void validate() const;

  friend bool operator==(const TensorDump&, const TensorDump&) = default;
};

std::vector<std::uint8_t> encode_tdump(const TensorDump& dump);
TensorDump decode_tdump(std::span<const std::uint8_t> bytes);
TensorDump read_tdump(const std::filesystem::path& path);
void write_tdump(const TensorDump& dump, const std::filesystem::path& path);

// "<item>__<condition>__<kind>__L<layer>.tdump"
std::string tdump_filename(const DumpMeta& meta);

struct TdumpName {
  std::string item_id, condition_id;
  DumpKind kind = DumpKind::Attention;
  int layer = 0;
};
std::optional<TdumpName> parse_tdump_filename(const std::string& filename);

std::string_view to_string(DumpKind k);

}  // namespace wmvqa
