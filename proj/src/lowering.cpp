#include "spine/lowering.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <unordered_map>

namespace spine {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kDwConv2d: return "dwconv2d";
    case LayerKind::kDeconv2d: return "deconv2d";
    case LayerKind::kFc: return "fc";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kGlobalPool: return "global_pool";
    case LayerKind::kAdd: return "add";
    case LayerKind::kSeScale: return "se_scale";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

const char* to_string(CostBucket b) {
  switch (b) {
    case CostBucket::kStem: return "stem";
    case CostBucket::kBlock: return "block";
    case CostBucket::kResample: return "resample";
    case CostBucket::kOutputProj: return "output_proj";
    case CostBucket::kHead: return "head";
  }
  return "?";
}

long long LayerRecord::weight_count() const {
  switch (kind) {
    case LayerKind::kConv2d:
    case LayerKind::kDeconv2d:
      return static_cast<long long>(kernel) * kernel * in_ch * out_ch;
    case LayerKind::kDwConv2d:
      return static_cast<long long>(kernel) * kernel * out_ch;
    case LayerKind::kFc:
      return static_cast<long long>(in_ch) * out_ch;
    default:
      return 0;
  }
}

long long LayerRecord::madds() const {
  const long long out_px = static_cast<long long>(out_h) * out_w;
  switch (kind) {
    case LayerKind::kConv2d:
      return out_px * kernel * kernel * in_ch * out_ch * instances;
    case LayerKind::kDwConv2d:
      return out_px * kernel * kernel * out_ch * instances;
    case LayerKind::kDeconv2d:
      return static_cast<long long>(in_h) * in_w * kernel * kernel * in_ch *
             out_ch * instances;
    case LayerKind::kFc:
      return static_cast<long long>(in_ch) * out_ch * instances;
    default:
      return 0;
  }
}

long long LayerRecord::params() const {
  if (!params_owner) return 0;
  long long p = weight_count();
  if (p == 0) return 0;
  if (has_bias) p += out_ch;
  if (has_norm) p += 2ll * out_ch;
  return p;
}

namespace {

struct Emitter {
  std::vector<LayerRecord>* out;
  std::string scope;
  CostBucket bucket;
  BlockId block;
  int index = 0;

  LayerRecord& emit(LayerKind kind) {
    LayerRecord r;
    r.scope = scope;
    r.layer_index = index++;
    r.kind = kind;
    r.bucket = bucket;
    r.block = block;
    out->push_back(r);
    return out->back();
  }

  LayerRecord& conv(int kernel, int stride, int in_ch, int out_ch, int in_h,
                    int out_h, bool norm = true) {
    LayerRecord& r = emit(LayerKind::kConv2d);
    r.kernel = kernel;
    r.stride = stride;
    r.in_ch = in_ch;
    r.out_ch = out_ch;
    r.in_h = r.in_w = in_h;
    r.out_h = r.out_w = out_h;
    r.has_norm = norm;
    return r;
  }
};

void lower_block_into(const BlockSpec& b, const BackboneGraph& g, int in_h,
                      std::vector<LayerRecord>* out) {
  Emitter e{out, b.id, b.is_stem ? CostBucket::kStem : CostBucket::kBlock,
            b.id};
  const int c = b.width_c;
  int h_in = in_h;
  for (int copy = 0; copy < b.repeat_count; ++copy) {
    const int stride = copy == 0 ? b.stride : 1;
    const int in_ch = copy == 0 ? b.in_channels : b.out_channels();
    const int h_out = stride == 2 ? h_in / 2 : h_in;
    switch (b.type.kind) {
      case BlockKind::kBottleneck: {
        e.conv(1, 1, in_ch, c, h_in, h_in);
        e.conv(3, stride, c, c, h_in, h_out);
        e.conv(1, 1, c, 4 * c, h_out, h_out);
        if (copy == 0 && (in_ch != 4 * c || stride != 1))
          e.conv(1, stride, in_ch, 4 * c, h_in, h_out);  // shortcut projection
        LayerRecord& add = e.emit(LayerKind::kAdd);
        add.in_ch = add.out_ch = 4 * c;
        add.in_h = add.in_w = add.out_h = add.out_w = h_out;
        break;
      }
      case BlockKind::kResidual: {
        e.conv(3, stride, in_ch, c, h_in, h_out);
        e.conv(3, 1, c, c, h_out, h_out);
        if (copy == 0 && (in_ch != c || stride != 1))
          e.conv(1, stride, in_ch, c, h_in, h_out);
        LayerRecord& add = e.emit(LayerKind::kAdd);
        add.in_ch = add.out_ch = c;
        add.in_h = add.in_w = add.out_h = add.out_w = h_out;
        break;
      }
      case BlockKind::kMbconv: {
        const int hidden = in_ch * b.type.mbconv_expansion();
        const int se_dim = scale_channels(in_ch * g.se_ratio);
        e.conv(1, 1, in_ch, hidden, h_in, h_in);  // expand
        LayerRecord& dw = e.emit(LayerKind::kDwConv2d);
        dw.kernel = 3;
        dw.stride = stride;
        dw.in_ch = dw.out_ch = hidden;
        dw.in_h = dw.in_w = h_in;
        dw.out_h = dw.out_w = h_out;
        dw.has_norm = true;
        LayerRecord& gap = e.emit(LayerKind::kGlobalPool);
        gap.in_ch = gap.out_ch = hidden;
        gap.in_h = gap.in_w = h_out;
        gap.out_h = gap.out_w = 1;
        LayerRecord& fc1 = e.emit(LayerKind::kFc);
        fc1.in_ch = hidden;
        fc1.out_ch = se_dim;
        fc1.in_h = fc1.in_w = fc1.out_h = fc1.out_w = 1;
        LayerRecord& fc2 = e.emit(LayerKind::kFc);
        fc2.in_ch = se_dim;
        fc2.out_ch = hidden;
        fc2.in_h = fc2.in_w = fc2.out_h = fc2.out_w = 1;
        LayerRecord& scale = e.emit(LayerKind::kSeScale);
        scale.in_ch = scale.out_ch = hidden;
        scale.in_h = scale.in_w = scale.out_h = scale.out_w = h_out;
        e.conv(1, 1, hidden, c, h_out, h_out);  // project
        if (in_ch == c && stride == 1) {
          LayerRecord& add = e.emit(LayerKind::kAdd);
          add.in_ch = add.out_ch = c;
          add.in_h = add.in_w = add.out_h = add.out_w = h_out;
        }
        break;
      }
      case BlockKind::kFpn: {
        e.conv(3, 1, b.in_channels, b.width_c, h_in, h_out);
        break;
      }
      case BlockKind::kIdentity:
        break;
    }
    h_in = h_out;
  }
}

void lower_edge_into(const Edge& edge, const Shape& parent_raw,
                     const Shape& target_in, std::vector<LayerRecord>* out) {
  Emitter e{out, "edge:" + edge.parent + "->" + edge.child,
            CostBucket::kResample, edge.child};
  int h = parent_raw.h;
  int c = parent_raw.c;
  for (const auto& s : edge.plan.stages) {
    switch (s.kind) {
      case StageKind::kProj1x1:
      case StageKind::kProjToTarget: {
        int out_h = s.kind == StageKind::kProjToTarget ? target_in.h : h;
        if (out_h != h) {
          // Floor-rounded odd grids: free nearest resize onto the target grid.
          h = out_h;
        }
        e.conv(1, 1, s.in_channels, s.out_channels, h, h);
        c = s.out_channels;
        break;
      }
      case StageKind::kConv3x3Stride2: {
        e.conv(3, 2, s.in_channels, s.out_channels, h, h / 2);
        h /= 2;
        c = s.out_channels;
        break;
      }
      case StageKind::kSepConv3x3Stride2: {
        LayerRecord& dw = e.emit(LayerKind::kDwConv2d);
        dw.kernel = 3;
        dw.stride = 2;
        dw.in_ch = dw.out_ch = s.in_channels;
        dw.in_h = dw.in_w = h;
        dw.out_h = dw.out_w = h / 2;
        dw.has_norm = true;
        h /= 2;
        e.conv(1, 1, s.in_channels, s.out_channels, h, h);
        c = s.out_channels;
        break;
      }
      case StageKind::kMaxPoolStride2: {
        LayerRecord& mp = e.emit(LayerKind::kMaxPool);
        mp.kernel = 3;
        mp.stride = 2;
        mp.in_ch = mp.out_ch = c;
        mp.in_h = mp.in_w = h;
        mp.out_h = mp.out_w = h / 2;
        h /= 2;
        break;
      }
      case StageKind::kNearestUpsample: {
        LayerRecord& up = e.emit(LayerKind::kUpsample);
        up.in_ch = up.out_ch = c;
        up.in_h = up.in_w = h;
        h = h * s.factor;
        if (h != target_in.h) h = target_in.h;  // odd-grid realignment
        up.out_h = up.out_w = h;
        break;
      }
    }
  }
  if (c != target_in.c || h != target_in.h) {
    std::ostringstream os;
    os << "edge " << edge.parent << "->" << edge.child << " lowers to " << h
       << "x" << h << "x" << c << ", target input is " << target_in.h << "x"
       << target_in.w << "x" << target_in.c;
    throw ShapeError(os.str());
  }
}

void lower_retinanet_head(const HeadConfig& head, int output_dim,
                          const std::vector<std::pair<int, int>>& pyramid,
                          std::vector<LayerRecord>* out) {
  for (const char* subnet : {"class_net", "box_net"}) {
    Emitter e{out, std::string("head.") + subnet, CostBucket::kHead, ""};
    const bool is_class = std::string(subnet) == "class_net";
    const int preds = is_class
                          ? head.num_classes * head.anchors_per_location
                          : 4 * head.anchors_per_location;
    bool owner = true;
    for (const auto& [level, res] : pyramid) {
      (void)level;
      int in_ch = output_dim;
      for (int i = 0; i < head.shared_conv_layers; ++i) {
        if (head.separable) {
          LayerRecord& dw = e.emit(LayerKind::kDwConv2d);
          dw.kernel = 3;
          dw.in_ch = dw.out_ch = in_ch;
          dw.in_h = dw.in_w = dw.out_h = dw.out_w = res;
          dw.has_norm = true;
          dw.params_owner = owner;
          LayerRecord& pw = e.conv(1, 1, in_ch, head.head_width, res, res);
          pw.params_owner = owner;
        } else {
          LayerRecord& r = e.conv(3, 1, in_ch, head.head_width, res, res);
          r.params_owner = owner;
        }
        in_ch = head.head_width;
      }
      if (head.separable) {
        LayerRecord& dw = e.emit(LayerKind::kDwConv2d);
        dw.kernel = 3;
        dw.in_ch = dw.out_ch = in_ch;
        dw.in_h = dw.in_w = dw.out_h = dw.out_w = res;
        dw.has_norm = true;
        dw.params_owner = owner;
        LayerRecord& pred = e.conv(1, 1, in_ch, preds, res, res, false);
        pred.has_bias = true;
        pred.params_owner = owner;
      } else {
        LayerRecord& pred = e.conv(3, 1, in_ch, preds, res, res, false);
        pred.has_bias = true;
        pred.params_owner = owner;
      }
      owner = false;
    }
  }
}

void lower_maskrcnn_head(const HeadConfig& head, int output_dim,
                         const std::vector<std::pair<int, int>>& pyramid,
                         std::vector<LayerRecord>* out) {
  {
    Emitter e{out, "head.rpn", CostBucket::kHead, ""};
    bool owner = true;
    for (const auto& [level, res] : pyramid) {
      (void)level;
      LayerRecord& c = e.conv(3, 1, output_dim, head.rpn_width, res, res);
      c.params_owner = owner;
      LayerRecord& obj =
          e.conv(1, 1, head.rpn_width, head.rpn_anchors, res, res, false);
      obj.has_bias = true;
      obj.params_owner = owner;
      LayerRecord& box =
          e.conv(1, 1, head.rpn_width, 4 * head.rpn_anchors, res, res, false);
      box.has_bias = true;
      box.params_owner = owner;
      owner = false;
    }
  }
  {
    Emitter e{out, "head.detect", CostBucket::kHead, ""};
    const int roi = head.roi_size;
    int in_ch = output_dim;
    for (int i = 0; i < head.shared_conv_layers; ++i) {
      LayerRecord& c = e.conv(3, 1, in_ch, head.head_width, roi, roi);
      c.instances = head.proposals;
      in_ch = head.head_width;
    }
    LayerRecord& fc = e.emit(LayerKind::kFc);
    fc.in_ch = roi * roi * in_ch;
    fc.out_ch = head.fc_dim;
    fc.instances = head.proposals;
    LayerRecord& cls = e.emit(LayerKind::kFc);
    cls.in_ch = head.fc_dim;
    cls.out_ch = head.num_classes + 1;
    cls.instances = head.proposals;
    cls.has_bias = true;
    LayerRecord& box = e.emit(LayerKind::kFc);
    box.in_ch = head.fc_dim;
    box.out_ch = 4 * (head.num_classes + 1);
    box.instances = head.proposals;
    box.has_bias = true;
  }
  {
    Emitter e{out, "head.mask", CostBucket::kHead, ""};
    const int roi = head.mask_roi_size;
    int in_ch = output_dim;
    for (int i = 0; i < head.shared_conv_layers; ++i) {
      LayerRecord& c = e.conv(3, 1, in_ch, head.head_width, roi, roi);
      c.instances = head.mask_detections;
      in_ch = head.head_width;
    }
    LayerRecord& up = e.emit(LayerKind::kDeconv2d);
    up.kernel = 2;
    up.stride = 2;
    up.in_ch = in_ch;
    up.out_ch = head.head_width;
    up.in_h = up.in_w = roi;
    up.out_h = up.out_w = 2 * roi;
    up.instances = head.mask_detections;
    up.has_norm = true;
    LayerRecord& pred =
        e.conv(1, 1, head.head_width, head.num_classes, 2 * roi, 2 * roi,
               false);
    pred.instances = head.mask_detections;
    pred.has_bias = true;
  }
}

void lower_classifier_head(const HeadConfig& head, const BackboneGraph& g,
                           const std::vector<std::pair<int, int>>& pyramid,
                           const Shape& last_raw,
                           std::vector<LayerRecord>* out) {
  Emitter e{out, "head.classifier", CostBucket::kHead, ""};
  int feature_dim;
  if (g.family == GraphFamily::kResnetPlain) {
    feature_dim = last_raw.c;
    LayerRecord& gap = e.emit(LayerKind::kGlobalPool);
    gap.in_ch = gap.out_ch = feature_dim;
    gap.in_h = gap.in_w = last_raw.h;
    gap.out_h = gap.out_w = 1;
  } else {
    feature_dim = g.output_dim;
    const int base_res = pyramid.front().second;  // P3 resolution
    for (const auto& [level, res] : pyramid) {
      if (res == base_res) continue;
      LayerRecord& up = e.emit(LayerKind::kUpsample);
      up.in_ch = up.out_ch = feature_dim;
      up.in_h = up.in_w = res;
      up.out_h = up.out_w = base_res;
      (void)level;
    }
    LayerRecord& avg = e.emit(LayerKind::kAdd);  // mean of the five maps
    avg.in_ch = avg.out_ch = feature_dim;
    avg.in_h = avg.in_w = avg.out_h = avg.out_w = base_res;
    LayerRecord& gap = e.emit(LayerKind::kGlobalPool);
    gap.in_ch = gap.out_ch = feature_dim;
    gap.in_h = gap.in_w = base_res;
    gap.out_h = gap.out_w = 1;
  }
  LayerRecord& fc = e.emit(LayerKind::kFc);
  fc.in_ch = feature_dim;
  fc.out_ch = head.num_classes;
  fc.has_bias = true;
  LayerRecord& sm = e.emit(LayerKind::kSoftmax);
  sm.in_ch = sm.out_ch = head.num_classes;
}

}  // namespace

std::vector<LayerRecord> lower_block(const BlockSpec& b,
                                     const BackboneGraph& g, int in_h,
                                     int in_w) {
  (void)in_w;
  std::vector<LayerRecord> out;
  lower_block_into(b, g, in_h, &out);
  return out;
}

LoweredModel lower_model(const ModelWithHead& m, int input_resolution) {
  const BackboneGraph& g = m.graph;
  ValidationReport report = validate_graph(g);
  if (!report.ok())
    throw ValidationError("lower_model on invalid graph:\n" + report.to_string(),
                          report);

  LoweredModel lowered;
  auto& records = lowered.records;

  // Stem entry layers.
  const int conv_out = input_resolution / g.stem_conv.stride;
  {
    Emitter e{&records, "stem.conv", CostBucket::kStem, ""};
    e.conv(g.stem_conv.kernel, g.stem_conv.stride, 3, g.stem_conv.width,
           input_resolution, conv_out);
    if (g.stem_conv.maxpool) {
      LayerRecord& mp = e.emit(LayerKind::kMaxPool);
      mp.kernel = 3;
      mp.stride = 2;
      mp.in_ch = mp.out_ch = g.stem_conv.width;
      mp.in_h = mp.in_w = conv_out;
      mp.out_h = mp.out_w = conv_out / 2;
    }
  }
  int entry_res = g.stem_conv.maxpool ? conv_out / 2 : conv_out;

  std::vector<const BlockSpec*> blocks = g.all_blocks();
  std::sort(blocks.begin(), blocks.end(),
            [](const BlockSpec* a, const BlockSpec* b) {
              return a->ordering < b->ordering;
            });
  std::unordered_map<std::string, const BlockSpec*> by_id;
  for (const BlockSpec* b : blocks) by_id[b->id] = b;

  auto& raw = lowered.raw_shapes;
  const BlockSpec* prev_stem = nullptr;
  for (const BlockSpec* b : blocks) {
    const int out_res = b->level.resolution(input_resolution);
    if (out_res < 1)
      throw ShapeError("resolution underflow at level L" +
                       std::to_string(b->level.index) + " (block '" + b->id +
                       "')");
    int in_res;
    if (b->is_stem) {
      in_res = prev_stem ? raw[prev_stem->id].h : entry_res;
      prev_stem = b;
    } else {
      in_res = out_res;  // scale-permuted blocks consume fused inputs in place
      // Incoming resample pipelines, parents in ordering order.
      std::vector<const Edge*> ins = g.in_edges(b->id);
      std::sort(ins.begin(), ins.end(), [&](const Edge* a, const Edge* c) {
        return by_id.at(a->parent)->ordering < by_id.at(c->parent)->ordering;
      });
      for (const Edge* e : ins) {
        if (e->plan.empty()) continue;
        Shape target_in{out_res, out_res,
                        e->plan.stages.back().out_channels};
        lower_edge_into(*e, raw.at(e->parent), target_in, &records);
      }
    }
    lower_block_into(*b, g, in_res, &records);
    raw[b->id] = Shape{out_res, out_res, b->out_channels()};
  }

  // 1x1 projections behind each output block.
  if (g.family == GraphFamily::kScalePermuted) {
    for (const BlockSpec* b : g.output_blocks()) {
      Emitter e{&records, "proj:" + b->id, CostBucket::kOutputProj, b->id};
      const Shape& s = raw.at(b->id);
      e.conv(1, 1, s.c, g.output_dim, s.h, s.h);
    }
  }

  // Pyramid levels, ascending.
  std::vector<std::pair<int, int>> pyramid;
  for (const BlockSpec* b : g.output_blocks())
    pyramid.push_back({b->level.index, raw.at(b->id).h});
  std::sort(pyramid.begin(), pyramid.end());

  switch (m.head.kind) {
    case HeadKind::kNone:
      break;
    case HeadKind::kRetinanet:
      lower_retinanet_head(m.head, g.output_dim, pyramid, &records);
      break;
    case HeadKind::kMaskRcnn:
      lower_maskrcnn_head(m.head, g.output_dim, pyramid, &records);
      break;
    case HeadKind::kClassifier: {
      Shape last_raw = blocks.empty() ? Shape{} : raw.at(blocks.back()->id);
      lower_classifier_head(m.head, g, pyramid, last_raw, &records);
      break;
    }
  }
  return lowered;
}

}  // namespace spine
