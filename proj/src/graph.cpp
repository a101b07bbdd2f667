#include "spine/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace spine {

const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kBottleneck: return "bottleneck";
    case BlockKind::kResidual: return "residual";
    case BlockKind::kMbconv: return "mbconv";
    case BlockKind::kFpn: return "fpn";
    case BlockKind::kIdentity: return "identity";
  }
  return "?";
}

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "bottleneck") return BlockKind::kBottleneck;
  if (s == "residual") return BlockKind::kResidual;
  if (s == "mbconv") return BlockKind::kMbconv;
  if (s == "fpn") return BlockKind::kFpn;
  if (s == "identity") return BlockKind::kIdentity;
  throw SpecError("unknown block type '" + s + "'");
}

const char* to_string(GraphFamily f) {
  switch (f) {
    case GraphFamily::kScalePermuted: return "scale_permuted";
    case GraphFamily::kResnetFpn: return "resnet_fpn";
    case GraphFamily::kResnetPlain: return "resnet";
  }
  return "?";
}

GraphFamily graph_family_from_string(const std::string& s) {
  if (s == "scale_permuted") return GraphFamily::kScalePermuted;
  if (s == "resnet_fpn") return GraphFamily::kResnetFpn;
  if (s == "resnet") return GraphFamily::kResnetPlain;
  throw SpecError("unknown graph family '" + s + "'");
}

const char* to_string(ViolationCode c) {
  switch (c) {
    case ViolationCode::kDuplicateId: return "duplicate-id";
    case ViolationCode::kDuplicateOrdering: return "duplicate-ordering";
    case ViolationCode::kStemAfterPermuted: return "stem-after-permuted";
    case ViolationCode::kBadLevel: return "bad-level";
    case ViolationCode::kBadWidth: return "bad-width";
    case ViolationCode::kUnknownBlock: return "unknown-block";
    case ViolationCode::kOrderingViolation: return "ordering-violation";
    case ViolationCode::kDuplicateEdge: return "duplicate-edge";
    case ViolationCode::kOutputLevelSet: return "output-level-set";
    case ViolationCode::kInDegree: return "in-degree";
    case ViolationCode::kDanglingIntermediate: return "dangling-intermediate";
    case ViolationCode::kUnreachableOutput: return "unreachable-output";
    case ViolationCode::kStemWiring: return "stem-wiring";
  }
  return "?";
}

const BlockSpec* BackboneGraph::find(const BlockId& id) const {
  for (const auto& b : stem)
    if (b.id == id) return &b;
  for (const auto& b : permuted)
    if (b.id == id) return &b;
  return nullptr;
}

std::vector<const BlockSpec*> BackboneGraph::all_blocks() const {
  std::vector<const BlockSpec*> out;
  out.reserve(stem.size() + permuted.size());
  for (const auto& b : stem) out.push_back(&b);
  for (const auto& b : permuted) out.push_back(&b);
  return out;
}

std::vector<const BlockSpec*> BackboneGraph::output_blocks() const {
  std::vector<const BlockSpec*> out;
  for (const auto& b : permuted)
    if (b.is_output) out.push_back(&b);
  return out;
}

std::vector<const Edge*> BackboneGraph::in_edges(const BlockId& id) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges)
    if (e.child == id) out.push_back(&e);
  return out;
}

int BackboneGraph::out_degree(const BlockId& id) const {
  int n = 0;
  for (const auto& e : edges) n += e.parent == id;
  return n;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations)
    os << "[" << spine::to_string(v.code) << "] " << v.message << "\n";
  return os.str();
}

bool ValidationReport::has(ViolationCode c) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.code == c; });
}

ValidationReport validate_graph(const BackboneGraph& g, ValidateMode mode) {
  ValidationReport report;
  auto add = [&](ViolationCode code, std::string msg) {
    report.violations.push_back({code, std::move(msg)});
  };

  std::unordered_map<std::string, const BlockSpec*> by_id;
  std::unordered_set<int> orderings;
  for (const BlockSpec* b : g.all_blocks()) {
    if (!by_id.emplace(b->id, b).second)
      add(ViolationCode::kDuplicateId, "block id '" + b->id + "' repeats");
    if (!orderings.insert(b->ordering).second)
      add(ViolationCode::kDuplicateOrdering,
          "ordering " + std::to_string(b->ordering) + " repeats at '" + b->id +
              "'");
    if (b->width_c < 1 || b->repeat_count < 1)
      add(ViolationCode::kBadWidth, "block '" + b->id + "' has width " +
                                        std::to_string(b->width_c) +
                                        ", repeat " +
                                        std::to_string(b->repeat_count));
    if (b->is_stem && !b->level.valid_for_stem())
      add(ViolationCode::kBadLevel,
          "stem block '" + b->id + "' at level " +
              std::to_string(b->level.index));
    if (!b->is_stem && !b->level.valid_for_permuted())
      add(ViolationCode::kBadLevel,
          "block '" + b->id + "' at level " + std::to_string(b->level.index));
  }

  if (!g.stem.empty() && !g.permuted.empty()) {
    int max_stem = 0, min_perm = 0;
    for (const auto& b : g.stem) max_stem = std::max(max_stem, b.ordering);
    min_perm = g.permuted.front().ordering;
    for (const auto& b : g.permuted) min_perm = std::min(min_perm, b.ordering);
    if (max_stem >= min_perm)
      add(ViolationCode::kStemAfterPermuted,
          "stem orderings do not all precede scale-permuted orderings");
  }

  std::set<std::pair<std::string, std::string>> seen_edges;
  std::unordered_map<std::string, int> in_degree;
  std::unordered_map<std::string, int> out_degree;
  for (const auto& e : g.edges) {
    auto pit = by_id.find(e.parent);
    auto cit = by_id.find(e.child);
    if (pit == by_id.end() || cit == by_id.end()) {
      add(ViolationCode::kUnknownBlock,
          "edge " + e.parent + "->" + e.child + " references a missing block");
      continue;
    }
    if (!seen_edges.insert({e.parent, e.child}).second)
      add(ViolationCode::kDuplicateEdge,
          "edge " + e.parent + "->" + e.child +
              " repeats (parents must be distinct)");
    if (pit->second->ordering >= cit->second->ordering)
      add(ViolationCode::kOrderingViolation,
          "edge " + e.parent + "->" + e.child + " goes backward in ordering");
    in_degree[e.child]++;
    out_degree[e.parent]++;
  }

  // Stem blocks are wired as a scale-decreased chain.
  for (size_t i = 0; i < g.stem.size(); ++i) {
    const auto& b = g.stem[i];
    int deg = in_degree.count(b.id) ? in_degree[b.id] : 0;
    if (i == 0 && deg != 0)
      add(ViolationCode::kStemWiring, "first stem block '" + b.id +
                                          "' must take the stem conv input");
    if (i > 0) {
      const auto ins = g.in_edges(b.id);
      if (ins.size() != 1 || ins[0]->parent != g.stem[i - 1].id)
        add(ViolationCode::kStemWiring,
            "stem block '" + b.id + "' is not chained to its predecessor");
    }
  }

  if (g.family != GraphFamily::kResnetPlain) {
    std::multiset<int> levels;
    for (const BlockSpec* b : g.output_blocks()) levels.insert(b->level.index);
    std::multiset<int> expected{3, 4, 5, 6, 7};
    if (levels != expected) {
      std::ostringstream os;
      os << "output levels {";
      for (int l : levels) os << "L" << l << " ";
      os << "} are not exactly {L3..L7}";
      bool dup = false;
      for (auto it = levels.begin(); it != levels.end(); ++it)
        if (levels.count(*it) > 1) dup = true;
      add(ViolationCode::kOutputLevelSet,
          std::string(dup ? "duplicate output level: " : "") + os.str());
    }
  }

  for (const auto& b : g.permuted) {
    int in = in_degree.count(b.id) ? in_degree[b.id] : 0;
    int out = out_degree.count(b.id) ? out_degree[b.id] : 0;
    if (g.family == GraphFamily::kScalePermuted) {
      if (b.is_output) {
        if (in < 1)
          add(ViolationCode::kInDegree,
              "output block '" + b.id + "' has no incoming edge");
      } else {
        int min_in = mode == ValidateMode::kRelaxedInDegree ? 1 : 2;
        if (in < min_in || in > 2)
          add(ViolationCode::kInDegree,
              "block '" + b.id + "' has in-degree " + std::to_string(in) +
                  ", expected " +
                  (mode == ValidateMode::kRelaxedInDegree ? "1..2" : "2"));
        if (out < 1)
          add(ViolationCode::kDanglingIntermediate,
              "intermediate block '" + b.id + "' feeds nothing");
      }
    } else if (g.family == GraphFamily::kResnetFpn) {
      if (in < 1)
        add(ViolationCode::kInDegree,
            "pyramid node '" + b.id + "' has no incoming edge");
    }
  }

  // Every output must be reachable from the stem entry.
  if (g.family != GraphFamily::kResnetPlain && !g.stem.empty()) {
    std::unordered_set<std::string> reach;
    std::deque<std::string> frontier;
    reach.insert(g.stem.front().id);
    frontier.push_back(g.stem.front().id);
    while (!frontier.empty()) {
      std::string cur = frontier.front();
      frontier.pop_front();
      for (const auto& e : g.edges)
        if (e.parent == cur && reach.insert(e.child).second)
          frontier.push_back(e.child);
    }
    for (const BlockSpec* b : g.output_blocks())
      if (!reach.count(b->id))
        add(ViolationCode::kUnreachableOutput,
            "output block '" + b->id + "' is unreachable from the stem");
  }

  return report;
}

std::vector<BlockId> topological_order(const BackboneGraph& g) {
  ValidationReport report = validate_graph(g);
  if (!report.ok())
    throw ValidationError("topological_order on invalid graph:\n" +
                              report.to_string(),
                          report);
  std::vector<const BlockSpec*> blocks = g.all_blocks();
  std::sort(blocks.begin(), blocks.end(),
            [](const BlockSpec* a, const BlockSpec* b) {
              return a->ordering < b->ordering;
            });
  std::vector<BlockId> order;
  order.reserve(blocks.size());
  for (const BlockSpec* b : blocks) order.push_back(b->id);
  return order;
}

const Shape& ShapeMap::at(const BlockId& id) const {
  auto it = shapes.find(id);
  if (it == shapes.end()) throw ShapeError("no shape for block '" + id + "'");
  return it->second;
}

ShapeMap infer_shapes(const BackboneGraph& g, int input_resolution) {
  if (input_resolution < 2 || input_resolution % 2 != 0)
    throw ShapeError("input resolution must be a positive even number, got " +
                     std::to_string(input_resolution));
  ValidationReport report = validate_graph(g);
  if (!report.ok())
    throw ValidationError(
        "infer_shapes on invalid graph:\n" + report.to_string(), report);

  ShapeMap map;
  for (const BlockSpec* b : g.all_blocks()) {
    int res = b->level.resolution(input_resolution);
    if (res < 1) {
      std::ostringstream os;
      os << "input resolution " << input_resolution << " underflows at level L"
         << b->level.index << " (block '" << b->id << "')";
      throw ShapeError(os.str());
    }
    int channels;
    if (b->type.kind == BlockKind::kFpn || b->type.kind == BlockKind::kIdentity)
      channels = g.output_dim;
    else if (b->is_output && g.family == GraphFamily::kScalePermuted)
      channels = g.output_dim;  // behind the 1x1 output projection
    else
      channels = b->out_channels();
    map.shapes[b->id] = Shape{res, res, channels};
  }
  return map;
}

void normalize_graph(BackboneGraph& g) {
  auto by_ordering = [](const BlockSpec& a, const BlockSpec& b) {
    return a.ordering < b.ordering;
  };
  std::sort(g.stem.begin(), g.stem.end(), by_ordering);
  std::sort(g.permuted.begin(), g.permuted.end(), by_ordering);
  for (auto& b : g.stem) b.is_stem = true;
  for (auto& b : g.permuted) b.is_stem = false;

  for (size_t i = 0; i < g.stem.size(); ++i) {
    g.stem[i].in_channels =
        i == 0 ? g.stem_conv.width : g.stem[i - 1].out_channels();
  }
  for (auto& b : g.permuted) {
    if (b.type.kind == BlockKind::kFpn || b.type.kind == BlockKind::kIdentity)
      b.in_channels = g.output_dim;
    else
      b.in_channels = b.type.io_multiple() * b.width_c;
  }

  if (g.family != GraphFamily::kScalePermuted) return;

  std::unordered_map<std::string, const BlockSpec*> by_id;
  for (const BlockSpec* b : g.all_blocks()) by_id[b->id] = b;
  const ResampleOptions opts = g.resample_options();
  for (auto& e : g.edges) {
    auto pit = by_id.find(e.parent);
    auto cit = by_id.find(e.child);
    if (pit == by_id.end() || cit == by_id.end()) continue;
    if (cit->second->is_stem) {
      e.plan = ResamplePlan{};  // stem chain is direct wiring
      continue;
    }
    e.plan = plan_resample(*pit->second, *cit->second, opts);
  }
}

}  // namespace spine
