#include "wmvqa/tensor_dump.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>

#include <nlohmann/json.hpp>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

using nlohmann::json;

std::string_view to_string(DumpKind k) { return k == DumpKind::Attention ? "attention" : "embedding"; }

std::size_t TensorDump::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void TensorDump::validate() const {
  if (shape.empty()) throw AnalysisInputError(name + ": empty shape");
  if (data.size() != element_count())
    throw AnalysisInputError(name + ": payload has " + std::to_string(data.size()) + " values, shape needs " +
                             std::to_string(element_count()));
  if (meta.kind == DumpKind::Attention && (shape.size() != 3 || shape[1] != shape[2]))
    throw AnalysisInputError(name + ": attention dumps must have shape [heads, seq, seq]");
  if (meta.kind == DumpKind::Embedding && shape.size() != 2)
    throw AnalysisInputError(name + ": embedding dumps must have shape [seq, hidden]");
  if (meta.valid_length && meta.kind == DumpKind::Embedding && (*meta.valid_length < 1 || *meta.valid_length > shape[0]))
    throw AnalysisInputError(name + ": valid_length out of range");
}

std::vector<std::uint8_t> encode_tdump(const TensorDump& dump) {
  dump.validate();
  json meta{{"model_name", dump.meta.model_name},
            {"item_id", dump.meta.item_id},
            {"condition_id", dump.meta.condition_id},
            {"layer_index", dump.meta.layer_index},
            {"kind", std::string(to_string(dump.meta.kind))}};
  if (dump.meta.patch_grid) {
    meta["patch_grid"] = {(*dump.meta.patch_grid)[0], (*dump.meta.patch_grid)[1]};
    meta["patch_offset"] = dump.meta.patch_offset;
  }
  if (dump.meta.valid_length) meta["valid_length"] = *dump.meta.valid_length;
  const std::string header =
      json{{"name", dump.name}, {"shape", dump.shape}, {"dtype", "float32"}, {"meta", meta}}.dump();
  if (header.size() > kTdumpHeaderBytes - 1)
    throw AnalysisInputError("tdump header exceeds " + std::to_string(kTdumpHeaderBytes) + " bytes: " + header);

  std::vector<std::uint8_t> out(kTdumpHeaderBytes + 4 * dump.data.size(), ' ');
  std::memcpy(out.data(), header.data(), header.size());
  out[kTdumpHeaderBytes - 1] = '\n';
  std::uint8_t* p = out.data() + kTdumpHeaderBytes;
  for (float f : dump.data) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) *p++ = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

TensorDump decode_tdump(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTdumpHeaderBytes) throw AnalysisInputError("tdump shorter than its header");
  std::string header(reinterpret_cast<const char*>(bytes.data()), kTdumpHeaderBytes);
  const auto end = header.find_last_not_of(std::string(" \n\0", 3));
  header.resize(end == std::string::npos ? 0 : end + 1);

  TensorDump d;
  try {
    const json h = json::parse(header);
    if (h.value("dtype", "") != "float32") throw AnalysisInputError("tdump dtype must be float32");
    d.name = h.at("name").get<std::string>();
    d.shape = h.at("shape").get<std::vector<std::size_t>>();
    const auto& m = h.at("meta");
    d.meta.model_name = m.value("model_name", "");
    d.meta.item_id = m.value("item_id", "");
    d.meta.condition_id = m.value("condition_id", "");
    d.meta.layer_index = m.value("layer_index", 0);
    const auto kind = m.at("kind").get<std::string>();
    if (kind == "attention") d.meta.kind = DumpKind::Attention;
    else if (kind == "embedding") d.meta.kind = DumpKind::Embedding;
    else throw AnalysisInputError("unknown tdump kind '" + kind + "'");
    if (m.contains("patch_grid")) {
      const auto g = m.at("patch_grid");
      d.meta.patch_grid = std::array<int, 2>{g.at(0).get<int>(), g.at(1).get<int>()};
      d.meta.patch_offset = m.value("patch_offset", std::size_t{0});
    }
    if (m.contains("valid_length")) d.meta.valid_length = m.at("valid_length").get<std::size_t>();
  } catch (const json::exception& e) {
    throw AnalysisInputError(std::string("malformed tdump header: ") + e.what());
  }

  const std::size_t n = d.element_count();
  if (bytes.size() != kTdumpHeaderBytes + 4 * n)
    throw AnalysisInputError(d.name + ": payload size does not match shape");
  d.data.resize(n);
  const std::uint8_t* p = bytes.data() + kTdumpHeaderBytes;
  for (std::size_t i = 0; i < n; ++i, p += 4) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                               static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
    d.data[i] = std::bit_cast<float>(bits);
  }
  d.validate();
  return d;
}

TensorDump read_tdump(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const IoError& e) {
    throw AnalysisInputError(e.what());
  }
  try {
    return decode_tdump(bytes);
  } catch (const AnalysisInputError& e) {
    throw AnalysisInputError(path.filename().string() + ": " + e.what());
  }
}

void write_tdump(const TensorDump& dump, const std::filesystem::path& path) {
  const auto bytes = encode_tdump(dump);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string tdump_filename(const DumpMeta& meta) {
  return meta.item_id + "__" + meta.condition_id + "__" + std::string(to_string(meta.kind)) + "__L" +
         std::to_string(meta.layer_index) + ".tdump";
}

std::optional<TdumpName> parse_tdump_filename(const std::string& filename) {
  static const std::regex re(R"(^(.+)__(.+)__(attention|embedding)__L(\d+)\.tdump$)");
  std::smatch m;
  if (!std::regex_match(filename, m, re)) return std::nullopt;
  return TdumpName{m[1].str(), m[2].str(), m[3].str() == "attention" ? DumpKind::Attention : DumpKind::Embedding,
                   std::stoi(m[4].str())};
}

}  // namespace wmvqa
