#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wmvqa/image.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

enum class Category { TextS, ChartS, ChartM, TableS };

std::string_view to_string(Category c);
std::optional<Category> parse_category(std::string_view s);
// ChartM is the only multiple-response category.
inline bool is_multi_answer(Category c) { return c == Category::ChartM; }

inline constexpr std::array<char, 4> kOptionLetters{'A', 'B', 'C', 'D'};

// Subset of the option letters A-D, stored as a 4-bit mask (bit 0 = A).
class AnswerSet {
 public:
  constexpr AnswerSet() = default;
  static constexpr AnswerSet from_bits(std::uint8_t bits) { return AnswerSet(bits & 0xF); }
  // Accepts "A", "AC", "A,C" ... Throws ValidationError on any other character.
  static AnswerSet from_letters(std::string_view letters);

  constexpr bool contains(char letter) const {
    return letter >= 'A' && letter <= 'D' && (bits_ >> (letter - 'A')) & 1;
  }
  constexpr void insert(char letter) {
    if (letter >= 'A' && letter <= 'D') bits_ |= static_cast<std::uint8_t>(1u << (letter - 'A'));
  }
  constexpr int size() const { return std::popcount(static_cast<unsigned>(bits_)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  // Letters in A-D order, e.g. "AC".
  std::string letters() const;

  friend constexpr bool operator==(AnswerSet, AnswerSet) = default;

 private:
  constexpr explicit AnswerSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

struct VqaItem {
  std::string id;
  std::string image_path;  // POSIX-style, relative to the dataset root
  Category category = Category::TextS;
  std::string question;
  std::array<std::string, 4> options;  // indexed A..D
  AnswerSet answer;

  const std::string& option(char letter) const { return options[static_cast<std::size_t>(letter - 'A')]; }
  friend bool operator==(const VqaItem&, const VqaItem&) = default;
};

// Throws ValidationError naming the broken invariant.
void validate_item(const VqaItem& item);

struct EvalDataset {
  std::string name;
  std::filesystem::path root;
  std::vector<VqaItem> items;

  std::filesystem::path image_file(const VqaItem& item) const { return root / item.image_path; }
  friend bool operator==(const EvalDataset&, const EvalDataset&) = default;
};

struct ManifestOptions {
  // Verify that each image_path names an existing PNG/JPEG file.
  bool check_images = true;
};

// JSON-Lines manifest, one VqaItem per line. Blank lines are skipped.
// The dataset name is the file stem and the root is the manifest directory.
EvalDataset load_manifest(const std::filesystem::path& path, ManifestOptions opts = {});
EvalDataset parse_manifest(std::string_view text, std::string name, std::filesystem::path root,
                           ManifestOptions opts = {});
std::string serialize_manifest(const EvalDataset& dataset);
void write_manifest(const EvalDataset& dataset, const std::filesystem::path& path);

// n items chosen uniformly without replacement, kept in their original order.
EvalDataset sample(const EvalDataset& dataset, std::size_t n, std::uint64_t seed);

}  // namespace wmvqa
