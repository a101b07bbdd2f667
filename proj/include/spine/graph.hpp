#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spine/resample.hpp"
#include "spine/types.hpp"

namespace spine {

enum class GraphFamily {
  kScalePermuted,  // stem + scale-permuted blocks with two-parent fusion
  kResnetFpn,      // scale-decreased stages + feature pyramid on top
  kResnetPlain,    // scale-decreased stages only (classification baseline)
};

const char* to_string(GraphFamily f);
GraphFamily graph_family_from_string(const std::string& s);

struct StemConv {
  int kernel = 7;
  int stride = 2;
  int width = 64;
  bool maxpool = true;  // 3x3 stride-2 max pool after the conv

  // Feature level of the stem conv output (before any max pool).
  int out_level() const { return 1; }
};

struct Edge {
  BlockId parent;
  BlockId child;
  ResamplePlan plan;  // empty for direct (stem chain / repeat chain) wiring
};

struct BackboneGraph {
  GraphFamily family = GraphFamily::kScalePermuted;
  std::string name;
  StemConv stem_conv;
  std::vector<BlockSpec> stem;      // ordered, orderings precede permuted
  std::vector<BlockSpec> permuted;  // ordered by ordering
  std::vector<Edge> edges;
  int output_dim = 256;   // width of the 1x1 projections behind P3..P7
  double alpha = 0.5;     // resampling channel scaling factor
  AlphaBasis alpha_basis = AlphaBasis::kParentWidth;
  bool mobile = false;    // separable resampling, no leading 1x1
  double se_ratio = 0.0625;  // squeeze width ratio for MBConv SE modules

  ResampleOptions resample_options() const {
    return ResampleOptions{alpha, alpha_basis, mobile};
  }

  const BlockSpec* find(const BlockId& id) const;
  std::vector<const BlockSpec*> all_blocks() const;  // stem then permuted
  std::vector<const BlockSpec*> output_blocks() const;
  std::vector<const Edge*> in_edges(const BlockId& id) const;
  int out_degree(const BlockId& id) const;
};

enum class ViolationCode {
  kDuplicateId,
  kDuplicateOrdering,
  kStemAfterPermuted,
  kBadLevel,
  kBadWidth,
  kUnknownBlock,
  kOrderingViolation,   // edge parent.ordering >= child.ordering
  kDuplicateEdge,
  kOutputLevelSet,      // output levels are not exactly {L3..L7}
  kInDegree,
  kDanglingIntermediate,
  kUnreachableOutput,
  kStemWiring,
};

const char* to_string(ViolationCode c);

struct Violation {
  ViolationCode code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
  bool has(ViolationCode c) const;
};

enum class ValidateMode {
  kStrict,
  kRelaxedInDegree,  // permuted in-degree 1 permitted (damaged graphs)
};

// Lists every violated structural invariant; empty report iff valid.
ValidationReport validate_graph(const BackboneGraph& g,
                                ValidateMode mode = ValidateMode::kStrict);

class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string what, ValidationReport report)
      : std::runtime_error(std::move(what)), report(std::move(report)) {}
  ValidationReport report;
};

// Blocks sorted by ordering (identical to build order). Throws
// ValidationError when the graph does not validate.
std::vector<BlockId> topological_order(const BackboneGraph& g);

struct ShapeMap {
  std::map<BlockId, Shape> shapes;
  const Shape& at(const BlockId& id) const;
};

// Output shape of every block: height = width = floor(input / 2^level);
// channels are 4C for bottleneck, C otherwise, and output_dim for designated
// output blocks (behind their 1x1 projection). Throws ShapeError when a level
// floors to zero, naming the offending level.
ShapeMap infer_shapes(const BackboneGraph& g, int input_resolution);

// Fills derived per-block fields (in_channels) from the wiring and
// regenerates every cross-scale resample plan from the graph options.
// Builders call this after any structural or width change.
void normalize_graph(BackboneGraph& g);

}  // namespace spine
