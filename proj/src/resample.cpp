#include "spine/resample.hpp"

#include <numeric>
#include <sstream>

namespace spine {

const char* to_string(StageKind k) {
  switch (k) {
    case StageKind::kProj1x1: return "proj_1x1";
    case StageKind::kNearestUpsample: return "nearest_upsample";
    case StageKind::kConv3x3Stride2: return "conv3x3_stride2";
    case StageKind::kSepConv3x3Stride2: return "sep_conv3x3_stride2";
    case StageKind::kMaxPoolStride2: return "maxpool_stride2";
    case StageKind::kProjToTarget: return "proj_to_target";
  }
  return "?";
}

std::pair<int, int> ResamplePlan::net_scale() const {
  int num = 1, den = 1;
  for (const auto& s : stages) {
    switch (s.kind) {
      case StageKind::kNearestUpsample: num *= s.factor; break;
      case StageKind::kConv3x3Stride2:
      case StageKind::kSepConv3x3Stride2:
      case StageKind::kMaxPoolStride2: den *= 2; break;
      default: break;
    }
  }
  int g = std::gcd(num, den);
  return {num / g, den / g};
}

bool ResamplePlan::has_dense_conv3x3() const {
  for (const auto& s : stages)
    if (s.kind == StageKind::kConv3x3Stride2) return true;
  return false;
}

ResamplePlan plan_resample(const BlockSpec& parent, const BlockSpec& target,
                           const ResampleOptions& options) {
  if (options.alpha <= 0.0)
    throw SpecError("resample alpha must be positive, got " +
                    std::to_string(options.alpha));
  if (parent.ordering >= target.ordering)
    throw SpecError("resample parent '" + parent.id +
                    "' does not precede target '" + target.id + "'");
  if (parent.width_c < 1 || target.width_c < 1)
    throw SpecError("resample endpoints must have defined widths");

  const int parent_out = parent.out_channels();
  const int target_in = target.type.io_multiple() * target.width_c;
  const int diff = parent.level.index - target.level.index;

  ResamplePlan plan;
  int c;
  if (options.mobile) {
    // Mobile regime: the leading 1x1 is removed; spatial convs are separable.
    c = parent_out;
  } else {
    const int basis = options.basis == AlphaBasis::kParentWidth
                          ? parent.width_c
                          : target.width_c;
    c = scale_channels(options.alpha * basis);
    plan.stages.push_back({StageKind::kProj1x1, parent_out, c, 1});
  }

  if (diff > 0) {
    plan.stages.push_back({StageKind::kNearestUpsample, c, c, 1 << diff});
  } else if (diff < 0) {
    StageKind conv = options.mobile ? StageKind::kSepConv3x3Stride2
                                    : StageKind::kConv3x3Stride2;
    plan.stages.push_back({conv, c, c, 1});
    for (int i = 1; i < -diff; ++i)
      plan.stages.push_back({StageKind::kMaxPoolStride2, c, c, 1});
  }

  plan.stages.push_back({StageKind::kProjToTarget, c, target_in, 1});
  return plan;
}

CostPair resample_cost(const ResamplePlan& plan, const Shape& parent_shape,
                       const Shape& target_shape) {
  CostPair cost;
  if (plan.empty()) return cost;

  auto mismatch = [](size_t i, const ResampleStage& s, int have) {
    std::ostringstream os;
    os << "resample stage " << i << " (" << to_string(s.kind) << ") expects "
       << s.in_channels << " channels, got " << have;
    return ShapeError(os.str());
  };

  long long h = parent_shape.h, w = parent_shape.w;
  int c = parent_shape.c;
  for (size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    switch (s.kind) {
      case StageKind::kProj1x1:
      case StageKind::kProjToTarget:
        if (s.in_channels != c) throw mismatch(i, s, c);
        cost.madds += h * w * s.in_channels * s.out_channels;
        cost.params += static_cast<long long>(s.in_channels) * s.out_channels +
                       2ll * s.out_channels;
        c = s.out_channels;
        break;
      case StageKind::kConv3x3Stride2:
        if (s.in_channels != c) throw mismatch(i, s, c);
        h /= 2;
        w /= 2;
        cost.madds += h * w * 9ll * s.in_channels * s.out_channels;
        cost.params += 9ll * s.in_channels * s.out_channels +
                       2ll * s.out_channels;
        c = s.out_channels;
        break;
      case StageKind::kSepConv3x3Stride2:
        if (s.in_channels != c) throw mismatch(i, s, c);
        h /= 2;
        w /= 2;
        cost.madds += h * w * 9ll * c;                        // depthwise
        cost.madds += h * w * 1ll * s.in_channels * s.out_channels;  // pointwise
        cost.params += 9ll * c + 2ll * c;
        cost.params += static_cast<long long>(s.in_channels) * s.out_channels +
                       2ll * s.out_channels;
        c = s.out_channels;
        break;
      case StageKind::kMaxPoolStride2:
        h /= 2;
        w /= 2;
        break;
      case StageKind::kNearestUpsample:
        h *= s.factor;
        w *= s.factor;
        // Floor-rounded odd grids cannot hit the target exactly by an integer
        // factor; the free resize lands on the target grid.
        if (h != target_shape.h || w != target_shape.w) {
          h = target_shape.h;
          w = target_shape.w;
        }
        break;
    }
  }

  if (h != target_shape.h || w != target_shape.w || c != target_shape.c) {
    std::ostringstream os;
    os << "resample plan ends at " << h << "x" << w << "x" << c
       << " but target is " << target_shape.h << "x" << target_shape.w << "x"
       << target_shape.c;
    throw ShapeError(os.str());
  }
  return cost;
}

}  // namespace spine
