#pragma once

#include <map>
#include <string>
#include <vector>

#include "spine/model.hpp"

namespace spine {

enum class LayerKind {
  kConv2d,
  kDwConv2d,
  kDeconv2d,
  kFc,
  kMaxPool,
  kUpsample,
  kGlobalPool,
  kAdd,
  kSeScale,
  kSoftmax,
};

const char* to_string(LayerKind k);

enum class CostBucket { kStem, kBlock, kResample, kOutputProj, kHead };

const char* to_string(CostBucket b);

// One concrete layer of a lowered model. Multiply-adds are counted for
// convolutions, depthwise convolutions and fully-connected layers only;
// normalization, pooling, upsampling and element-wise ops are free.
// Parameters are conv/fc weights plus per-channel scale+shift for normalized
// layers; biases appear on prediction layers only.
struct LayerRecord {
  std::string scope;
  int layer_index = 0;
  LayerKind kind = LayerKind::kConv2d;
  CostBucket bucket = CostBucket::kBlock;
  BlockId block;  // owning block for per-block accounting, may be empty
  int kernel = 1;
  int stride = 1;
  int in_ch = 0;
  int out_ch = 0;
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  long long instances = 1;  // per-ROI branches run once per region
  bool has_bias = false;
  bool has_norm = false;
  bool params_owner = true;  // pyramid-shared weights are owned once

  std::string key() const { return scope + "#" + std::to_string(layer_index); }
  bool has_weights() const {
    return kind == LayerKind::kConv2d || kind == LayerKind::kDwConv2d ||
           kind == LayerKind::kDeconv2d || kind == LayerKind::kFc;
  }
  long long weight_count() const;
  long long madds() const;
  long long params() const;
};

struct LoweredModel {
  std::vector<LayerRecord> records;
  // Raw per-block output shapes (before output projections).
  std::map<BlockId, Shape> raw_shapes;
};

// Lowers one block (all repeat copies) given its input spatial size.
std::vector<LayerRecord> lower_block(const BlockSpec& b,
                                     const BackboneGraph& g, int in_h,
                                     int in_w);

// Lowers the full backbone, then the head, in deterministic order:
// stem conv, blocks in build order (incoming edges first), output
// projections, head.
LoweredModel lower_model(const ModelWithHead& m, int input_resolution);

}  // namespace spine
