#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spine/types.hpp"

namespace spine {

enum class StageKind {
  kProj1x1,          // 1x1 conv adjusting parent output to the alpha width
  kNearestUpsample,  // nearest-neighbor, power-of-two factor, free
  kConv3x3Stride2,   // dense stride-2 3x3 conv at the alpha width
  kSepConv3x3Stride2,// depthwise 3x3 stride 2 + pointwise 1x1 (mobile regime)
  kMaxPoolStride2,   // free
  kProjToTarget,     // final 1x1 conv to the target block input width
};

const char* to_string(StageKind k);

struct ResampleStage {
  StageKind kind;
  int in_channels = 0;
  int out_channels = 0;
  int factor = 1;  // upsample only
};

// The exact layer sequence connecting a parent block to a target block.
// Fusion with the co-parent's output is element-wise addition.
struct ResamplePlan {
  std::vector<ResampleStage> stages;

  bool empty() const { return stages.empty(); }
  // Net spatial scale across stages as a rational numerator/denominator pair.
  std::pair<int, int> net_scale() const;
  bool has_dense_conv3x3() const;
};

enum class AlphaBasis {
  kParentWidth,  // alpha * C of the parent block
  kTargetWidth,  // alpha * C of the target block
};

struct ResampleOptions {
  double alpha = 0.5;
  AlphaBasis basis = AlphaBasis::kParentWidth;
  bool mobile = false;  // separable spatial convs, no leading 1x1
};

// Builds the resampling pipeline for an edge parent -> target. Upsampling is
// nearest-neighbor by 2^(parent_level - target_level); downsampling is one
// stride-2 3x3 conv followed by stride-2 max poolings as needed. The final
// 1x1 projection always lands on the target block's input width.
ResamplePlan plan_resample(const BlockSpec& parent, const BlockSpec& target,
                           const ResampleOptions& options);

struct CostPair {
  long long madds = 0;
  long long params = 0;

  CostPair& operator+=(const CostPair& o) {
    madds += o.madds;
    params += o.params;
    return *this;
  }
  friend CostPair operator+(CostPair a, const CostPair& b) { return a += b; }
  bool operator==(const CostPair&) const = default;
};

struct Shape {
  int h = 0;
  int w = 0;
  int c = 0;
  bool operator==(const Shape&) const = default;
};

// Multiply-adds and parameters of a plan evaluated between the given parent
// and target output shapes. Convolution madds are H_out*W_out*k^2*Cin*Cout;
// pooling and nearest upsampling are free. Parameters include per-channel
// normalization scale+shift on each conv.
CostPair resample_cost(const ResamplePlan& plan, const Shape& parent_shape,
                       const Shape& target_shape);

}  // namespace spine
