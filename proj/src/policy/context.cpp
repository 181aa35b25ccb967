#include "ricl/policy/context.hpp"

namespace ricl::policy {
namespace {

const char* segment_name(Segment s) {
  switch (s) {
    case Segment::Text: return "text";
    case Segment::Image: return "image";
    case Segment::State: return "state";
    case Segment::ActionRetrieved: return "action-retrieved";
    case Segment::ActionQuery: return "action-query";
  }
  return "?";
}

}  // namespace

ContextSequence assemble_context(const std::vector<NeighborGroup>& neighbors,
                                 const QueryGroup& query, const codec::Codec& codec,
                                 const AssembleConfig& cfg) {
  require(int(neighbors.size()) == cfg.k, "unsorted-neighbors",
          "expected " + std::to_string(cfg.k) + " neighbor groups, got " +
              std::to_string(neighbors.size()));
  for (size_t i = 1; i < neighbors.size(); ++i)
    require(neighbors[i].distance_to_query >= neighbors[i - 1].distance_to_query,
            "unsorted-neighbors", "neighbor groups must be sorted ascending by distance");

  ContextSequence ctx;
  ctx.k = cfg.k;
  ctx.query_group = cfg.query_group >= 0 ? cfg.query_group : cfg.k;
  ctx.training = query.target_action_ids.has_value();

  struct Piece {
    int id;
    Segment seg;
    int group;
    const float* image_row;  // into a P x F matrix, or null
  };
  std::vector<Piece> pieces;
  std::vector<const MatF*> image_sources;
  std::vector<std::pair<int, int>> image_refs;  // (source index, row)

  auto push_image = [&](const MatF& tokens, int group) {
    int src = int(image_sources.size());
    image_sources.push_back(&tokens);
    for (int p = 0; p < tokens.rows(); ++p) {
      pieces.push_back({-1, Segment::Image, group, nullptr});
      image_refs.push_back({src, p});
    }
  };
  auto push_ids = [&](const std::vector<int>& ids, Segment seg, int group) {
    for (int id : ids) {
      pieces.push_back({id, seg, group, nullptr});
      image_refs.push_back({-1, -1});
    }
  };

  for (size_t i = 0; i < neighbors.size(); ++i) {
    const NeighborGroup& n = neighbors[i];
    require(n.image_tokens && n.prompt_ids && n.action_ids, "unsorted-neighbors",
            "neighbor group is missing payload");
    ctx.distances.push_back(n.distance_to_query);
    push_image(*n.image_tokens, int(i));
    push_ids(*n.prompt_ids, Segment::Text, int(i));
    push_ids(codec.encode_state(n.proprio), Segment::State, int(i));
    push_ids(*n.action_ids, Segment::ActionRetrieved, int(i));
  }

  const int qg = ctx.query_group;
  push_image(query.image_tokens, qg);
  if (query.wrist_tokens) push_image(*query.wrist_tokens, qg);
  push_ids(query.prompt_ids, Segment::Text, qg);
  push_ids(codec.encode_state(query.proprio), Segment::State, qg);
  const int prefix_len = int(pieces.size());
  const int n_act = codec.config().n_act();

  if (ctx.training) {
    const auto& targets = *query.target_action_ids;
    require(int(targets.size()) == n_act, "missing-targets", "target chunk must have N_act ids");
    ctx.target_ids = targets;
    push_ids(targets, Segment::ActionQuery, qg);
  }

  if (!neighbors.empty()) ctx.aprime_ids = *neighbors[0].action_ids;

  // Right-align to the context window: the action block always ends at the
  // last position, so the query occupies the same positional frame whether or
  // not neighbor groups precede it (and across train vs decode).
  const int T = int(pieces.size());
  const int total_span = prefix_len + n_act;
  require(total_span <= cfg.context_length, "context-overflow",
          "assembled context spans " + std::to_string(total_span) + " positions, limit " +
              std::to_string(cfg.context_length));
  const int first_pos = cfg.context_length - total_span;
  ctx.decode_start = first_pos + prefix_len;
  if (ctx.training)
    for (int j = 0; j < n_act; ++j) ctx.loss_positions.push_back(prefix_len - 1 + j);

  ctx.input.ids.resize(size_t(T));
  ctx.input.segments.resize(size_t(T));
  ctx.input.groups.resize(size_t(T));
  ctx.input.positions.resize(size_t(T));
  ctx.input.image_rows = MatF::Zero(T, cfg.width);
  for (int t = 0; t < T; ++t) {
    ctx.input.ids[size_t(t)] = pieces[size_t(t)].id;
    ctx.input.segments[size_t(t)] = int(pieces[size_t(t)].seg);
    ctx.input.groups[size_t(t)] = pieces[size_t(t)].group;
    ctx.input.positions[size_t(t)] = first_pos + t;
    auto [src, row] = image_refs[size_t(t)];
    if (src >= 0) {
      require(image_sources[size_t(src)]->cols() == cfg.width, "shape-mismatch",
              "image tokens must match model width");
      ctx.input.image_rows.row(t) = image_sources[size_t(src)]->row(row);
    }
  }
  return ctx;
}

void ContextSequence::debug_dump(std::ostream& out) const {
  for (int t = 0; t < length(); ++t) {
    Segment seg = Segment(input.segments[size_t(t)]);
    out << "pos=" << t << "\tsegment=" << segment_name(seg) << "\tgroup=" << input.groups[size_t(t)];
    if (seg == Segment::Image) {
      uint64_t h = fnv1a64(input.image_rows.row(t).data(),
                           size_t(input.image_rows.cols()) * sizeof(float));
      out << "\tvhash=" << hex64(h);
    } else {
      out << "\tid=" << input.ids[size_t(t)];
    }
    out << "\n";
  }
}

}  // namespace ricl::policy
