#pragma once

#include <compare>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spine {

using BlockId = std::string;

// Feature level i: a block at level i produces maps at 1/2^i of the input
// resolution per side.
struct FeatureLevel {
  int index = 0;

  static constexpr int kMinStem = 1;
  static constexpr int kMaxStem = 5;
  static constexpr int kMinPermuted = 2;
  static constexpr int kMaxPermuted = 7;

  // floor(input / 2^index); 0 means the level underflows at this input size.
  int resolution(int input_resolution) const {
    return input_resolution >> index;
  }

  bool valid_for_stem() const { return index >= kMinStem && index <= kMaxStem; }
  bool valid_for_permuted() const {
    return index >= kMinPermuted && index <= kMaxPermuted;
  }

  auto operator<=>(const FeatureLevel&) const = default;
};

enum class BlockKind {
  kBottleneck,
  kResidual,
  kMbconv,
  kFpn,       // FPN pyramid node: element-wise merge followed by one 3x3 conv
  kIdentity,  // pass-through node (extra FPN levels whose conv lives on the edge)
};

struct BlockType {
  BlockKind kind = BlockKind::kBottleneck;

  // Ratio of block input/output width to the 3x3 width C.
  int io_multiple() const { return kind == BlockKind::kBottleneck ? 4 : 1; }
  // Hidden expansion for inverted-bottleneck blocks.
  int mbconv_expansion() const { return 6; }
};

const char* to_string(BlockKind k);
BlockKind block_kind_from_string(const std::string& s);

struct BlockSpec {
  BlockId id;
  int ordering = 0;
  FeatureLevel level;
  BlockType type;
  int width_c = 0;       // C of the 3x3 conv (MBConv output width for mbconv)
  int repeat_count = 1;  // sequentially chained copies
  bool is_output = false;
  bool is_stem = false;
  int stride = 1;        // spatial stride of the first copy (stem transitions)
  int in_channels = 0;   // input channels of the first copy, filled by builders

  // Channel width of the block output (before any output projection).
  int out_channels() const { return type.io_multiple() * width_c; }
};

// Round-half-up channel arithmetic used by every width scaling rule.
inline int scale_channels(double value) {
  int c = static_cast<int>(std::floor(value + 0.5));
  return c < 1 ? 1 : c;
}

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spine
