#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wmvqa {

// The one PRNG used everywhere a seed appears. Its name is written into run
// metadata. Only raw 64-bit outputs are consumed (never std::*_distribution,
// whose algorithms vary between standard libraries).
using Prng = std::mt19937_64;
inline constexpr std::string_view kPrngName = "mt19937_64";

// Uniform integer in [0, bound) by rejection sampling.
std::uint64_t uniform_below(Prng& rng, std::uint64_t bound);
// Uniform double in [0, 1) from the top 53 bits.
double uniform01(Prng& rng);
// Standard normal via Box-Muller.
double standard_normal(Prng& rng);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
// Writes via a temporary sibling and rename, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Fixed-point formatting independent of locale ("0.500000" style).
std::string format_fixed(double v, int decimals);

}  // namespace wmvqa
