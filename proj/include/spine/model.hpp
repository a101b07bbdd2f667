#pragma once

#include <string>

#include "spine/graph.hpp"

namespace spine {

enum class HeadKind { kNone, kRetinanet, kMaskRcnn, kClassifier };

const char* to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);

struct HeadConfig {
  HeadKind kind = HeadKind::kNone;
  int shared_conv_layers = 4;
  int head_width = 256;
  int num_classes = 80;
  int anchors_per_location = 9;  // retinanet
  int proposals = 1000;          // mask r-cnn detection branch
  int mask_detections = 100;     // mask r-cnn mask branch
  int rpn_width = 256;
  int rpn_anchors = 3;
  int roi_size = 7;
  int mask_roi_size = 14;
  int fc_dim = 1024;
  bool separable = false;  // mobile heads replace dense convs
};

struct ModelWithHead {
  BackboneGraph graph;
  HeadConfig head;

  std::string name() const { return graph.name; }
};

// Attaches a head; validates the graph and, for classifier heads on
// scale-permuted or FPN backbones, requires all five output levels.
ModelWithHead attach_head(const BackboneGraph& g, const HeadConfig& h);

}  // namespace spine
