#pragma once

// Monolithic ground truth: explicit composition, the non-blocking winning
// region, director extraction and controller validation.

#include "dcsrl/des.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dcsrl
{

using NodeId = std::uint32_t;

struct GraphEdge
{
    NodeId source;
    LabelId label;
    NodeId target;
    bool controllable;
};

/// Deterministic labelled graph. Nodes below `states.size()` correspond to
/// composite plant states; augmented graphs may append sink nodes without a
/// composite identity.
class ExplicitGraph
{
public:
    ExplicitGraph() = default;
    ExplicitGraph( std::size_t num_nodes, NodeId initial );

    NodeId add_node( bool marked );
    void add_edge( NodeId source, LabelId label, NodeId target, bool controllable );
    void set_marked( NodeId n, bool marked ) { marked_[ n ] = marked; }

    [[nodiscard]] std::size_t num_nodes() const { return marked_.size(); }
    [[nodiscard]] std::size_t num_edges() const { return edges_.size(); }
    [[nodiscard]] NodeId initial() const { return initial_; }
    [[nodiscard]] bool marked( NodeId n ) const { return marked_[ n ]; }
    [[nodiscard]] std::span<const GraphEdge> edges() const { return edges_; }

    /// Builds the adjacency index and the composite-state lookup. Must be
    /// called after the last mutation and before any query below.
    void build_index();

    /// Indexes into edges(), grouped by source / target.
    [[nodiscard]] std::span<const std::uint32_t> out_edges( NodeId n ) const;
    [[nodiscard]] std::span<const std::uint32_t> in_edges( NodeId n ) const;
    [[nodiscard]] std::optional<NodeId> find( const CompositeState& s ) const;

    std::vector<CompositeState> states;

private:
    NodeId initial_ = 0;
    std::vector<bool> marked_;
    std::vector<GraphEdge> edges_;

    bool indexed_ = false;
    std::vector<std::uint32_t> out_offsets_, out_index_, in_offsets_, in_index_;
    std::map<CompositeState, NodeId> lookup_;
};

/// Membership vector over the nodes of a graph.
using NodeSet = std::vector<bool>;

inline constexpr std::size_t default_state_cap = 1'000'000;

/// Breadth-first enumeration of the reachable product; edges of each state
/// follow enabled_transitions order. Throws ResourceError past `cap` states.
[[nodiscard]] ExplicitGraph full_compose( const ControlProblem& p, std::size_t cap = default_state_cap );

/// Greatest fixed point W: repeatedly drop nodes with no path of length >= 1
/// inside W to a marked node, and nodes with an uncontrollable edge leaving W.
[[nodiscard]] NodeSet winning_region( const ExplicitGraph& g );

/// State-feedback controller: for each state, the controllable labels it
/// enables. A director enables at most one.
struct Controller
{
    std::map<CompositeState, std::vector<LabelId>> choices;

    [[nodiscard]] bool is_director() const;
    [[nodiscard]] std::span<const LabelId> choice( const CompositeState& s ) const;

    friend bool operator==( const Controller&, const Controller& ) = default;
};

/// For every composite node in W, picks the controllable edge into W that
/// minimises 1 + d(target), where d is 0 on marked nodes and otherwise the
/// shortest path length inside W to a marked node; ties go to the lowest
/// label. Nodes without such an edge get no choice. Requires initial in W.
[[nodiscard]] Controller extract_director( const ExplicitGraph& g, const NodeSet& W );

/// True iff the controlled graph (uncontrollable edges plus chosen
/// controllable edges) reachable from the initial node has, from every
/// node, a path of length >= 1 to a marked node, and the controller is a
/// director.
[[nodiscard]] bool validate_nonblocking( const ExplicitGraph& g, const Controller& c );

enum class VerdictKind
{
    Unknown,
    Winning,
    Losing,
};

[[nodiscard]] std::string to_string( VerdictKind v );

struct Verdict
{
    VerdictKind kind = VerdictKind::Unknown;
    std::optional<Controller> controller;
};

/// Winning (with a director) iff the initial state of full_compose(p) lies in
/// its winning region.
[[nodiscard]] Verdict monolithic_synthesis( const ControlProblem& p, std::size_t cap = default_state_cap );

/// JSON state/choice table: {"states": [{"state": [...], "choice": [...]}]}.
[[nodiscard]] std::string serialize_controller( const Controller& c, const ControlProblem& p );

/// JSON debug export of an explicit graph.
[[nodiscard]] std::string serialize_graph( const ExplicitGraph& g, const ControlProblem& p );

} // namespace dcsrl
