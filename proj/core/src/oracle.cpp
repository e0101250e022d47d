#include "dcsrl/oracle.hpp"

#include "dcsrl/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <deque>
#include <limits>
#include <unordered_map>

namespace dcsrl
{

ExplicitGraph::ExplicitGraph( std::size_t num_nodes, NodeId initial ) : initial_{ initial }, marked_( num_nodes, false ) {}

NodeId ExplicitGraph::add_node( bool marked )
{
    marked_.push_back( marked );
    indexed_ = false;
    return static_cast<NodeId>( marked_.size() - 1 );
}

void ExplicitGraph::add_edge( NodeId source, LabelId label, NodeId target, bool controllable )
{
    edges_.push_back( { source, label, target, controllable } );
    indexed_ = false;
}

void ExplicitGraph::build_index()
{
    const auto n = num_nodes();
    auto bucket = [ & ]( auto key, std::vector<std::uint32_t>& offsets, std::vector<std::uint32_t>& index ) {
        offsets.assign( n + 1, 0 );
        for ( const auto& e : edges_ )
            ++offsets[ key( e ) + 1 ];
        for ( std::size_t i = 0; i < n; ++i )
            offsets[ i + 1 ] += offsets[ i ];
        index.assign( edges_.size(), 0 );
        auto cursor = offsets;
        for ( std::uint32_t i = 0; i < edges_.size(); ++i )
            index[ cursor[ key( edges_[ i ] ) ]++ ] = i;
    };
    bucket( []( const GraphEdge& e ) { return e.source; }, out_offsets_, out_index_ );
    bucket( []( const GraphEdge& e ) { return e.target; }, in_offsets_, in_index_ );
    lookup_.clear();
    for ( NodeId i = 0; i < states.size(); ++i )
        lookup_.emplace( states[ i ], i );
    indexed_ = true;
}

std::span<const std::uint32_t> ExplicitGraph::out_edges( NodeId n ) const
{
    if ( !indexed_ )
        throw UsageError( "ExplicitGraph queried before build_index()" );
    return std::span<const std::uint32_t>( out_index_ ).subspan( out_offsets_[ n ], out_offsets_[ n + 1 ] - out_offsets_[ n ] );
}

std::span<const std::uint32_t> ExplicitGraph::in_edges( NodeId n ) const
{
    if ( !indexed_ )
        throw UsageError( "ExplicitGraph queried before build_index()" );
    return std::span<const std::uint32_t>( in_index_ ).subspan( in_offsets_[ n ], in_offsets_[ n + 1 ] - in_offsets_[ n ] );
}

std::optional<NodeId> ExplicitGraph::find( const CompositeState& s ) const
{
    if ( !indexed_ )
        throw UsageError( "ExplicitGraph queried before build_index()" );
    const auto it = lookup_.find( s );
    if ( it == lookup_.end() )
        return std::nullopt;
    return it->second;
}

ExplicitGraph full_compose( const ControlProblem& p, std::size_t cap )
{
    ExplicitGraph g( 0, 0 );
    std::unordered_map<CompositeState, NodeId, CompositeStateHash> ids;
    auto intern = [ & ]( CompositeState s ) -> NodeId {
        const auto it = ids.find( s );
        if ( it != ids.end() )
            return it->second;
        if ( ids.size() >= cap )
            throw ResourceError( "composition of '" + p.name() + "' exceeds the cap of " + std::to_string( cap ) +
                                 " states" );
        const auto id = g.add_node( is_marked( s, p ) );
        ids.emplace( s, id );
        g.states.push_back( std::move( s ) );
        return id;
    };

    intern( p.initial_state() );
    for ( NodeId next = 0; next < g.num_nodes(); ++next )
    {
        // copy: intern() may reallocate g.states
        const auto state = g.states[ next ];
        for ( auto& t : enabled_transitions( state, p ) )
        {
            const auto target = intern( std::move( t.target ) );
            g.add_edge( next, t.label, target, p.controllable( t.label ) );
        }
    }
    g.build_index();
    return g;
}

NodeSet winning_region( const ExplicitGraph& g )
{
    const auto n = g.num_nodes();
    const auto edges = g.edges();
    NodeSet in_w( n, true );
    std::vector<NodeId> queue;
    std::vector<bool> reaches( n );

    for ( bool changed = true; changed; )
    {
        changed = false;

        // nodes of W with a path of length >= 1 inside W to a marked node
        std::fill( reaches.begin(), reaches.end(), false );
        queue.clear();
        auto mark_predecessors = [ & ]( NodeId t ) {
            for ( const auto ei : g.in_edges( t ) )
            {
                const auto s = edges[ ei ].source;
                if ( in_w[ s ] && !reaches[ s ] )
                {
                    reaches[ s ] = true;
                    queue.push_back( s );
                }
            }
        };
        for ( NodeId t = 0; t < n; ++t )
            if ( in_w[ t ] && g.marked( t ) )
                mark_predecessors( t );
        for ( std::size_t head = 0; head < queue.size(); ++head )
            mark_predecessors( queue[ head ] );

        queue.clear();
        for ( NodeId s = 0; s < n; ++s )
            if ( in_w[ s ] && !reaches[ s ] )
            {
                in_w[ s ] = false;
                queue.push_back( s );
                changed = true;
            }

        // uncontrollable escapes, propagated backwards from every removed node
        for ( NodeId s = 0; s < n; ++s )
            if ( in_w[ s ] )
                for ( const auto ei : g.out_edges( s ) )
                    if ( !edges[ ei ].controllable && !in_w[ edges[ ei ].target ] )
                    {
                        in_w[ s ] = false;
                        queue.push_back( s );
                        changed = true;
                        break;
                    }
        for ( std::size_t head = 0; head < queue.size(); ++head )
            for ( const auto ei : g.in_edges( queue[ head ] ) )
            {
                const auto& e = edges[ ei ];
                if ( !e.controllable && in_w[ e.source ] )
                {
                    in_w[ e.source ] = false;
                    queue.push_back( e.source );
                    changed = true;
                }
            }
    }
    return in_w;
}

bool Controller::is_director() const
{
    return std::all_of( choices.begin(), choices.end(), []( const auto& kv ) { return kv.second.size() <= 1; } );
}

std::span<const LabelId> Controller::choice( const CompositeState& s ) const
{
    const auto it = choices.find( s );
    if ( it == choices.end() )
        return {};
    return it->second;
}

Controller extract_director( const ExplicitGraph& g, const NodeSet& W )
{
    if ( W.size() != g.num_nodes() || !W[ g.initial() ] )
        throw UsageError( "extract_director requires the initial state in the winning region" );

    // d(t): 0 on marked nodes of W, otherwise shortest distance inside W to a
    // marked node (multi-source backward BFS)
    constexpr auto unreachable = std::numeric_limits<std::uint32_t>::max();
    const auto edges = g.edges();
    std::vector<std::uint32_t> d( g.num_nodes(), unreachable );
    std::deque<NodeId> queue;
    for ( NodeId t = 0; t < g.num_nodes(); ++t )
        if ( W[ t ] && g.marked( t ) )
        {
            d[ t ] = 0;
            queue.push_back( t );
        }
    while ( !queue.empty() )
    {
        const auto t = queue.front();
        queue.pop_front();
        for ( const auto ei : g.in_edges( t ) )
        {
            const auto s = edges[ ei ].source;
            if ( W[ s ] && d[ s ] == unreachable )
            {
                d[ s ] = d[ t ] + 1;
                queue.push_back( s );
            }
        }
    }

    Controller c;
    for ( NodeId s = 0; s < g.states.size(); ++s )
    {
        if ( !W[ s ] )
            continue;
        std::optional<LabelId> best;
        std::uint32_t best_cost = unreachable;
        for ( const auto ei : g.out_edges( s ) )
        {
            const auto& e = edges[ ei ];
            if ( !e.controllable || !W[ e.target ] || d[ e.target ] == unreachable )
                continue;
            const auto cost = d[ e.target ] + 1;
            if ( cost < best_cost || ( cost == best_cost && e.label < *best ) )
            {
                best = e.label;
                best_cost = cost;
            }
        }
        auto& slot = c.choices[ g.states[ s ] ];
        if ( best )
            slot.push_back( *best );
    }
    return c;
}

bool validate_nonblocking( const ExplicitGraph& g, const Controller& c )
{
    if ( !c.is_director() )
        return false;
    const auto edges = g.edges();
    auto enabled = [ & ]( const GraphEdge& e ) {
        if ( !e.controllable )
            return true;
        if ( e.source >= g.states.size() )
            return false;
        const auto choice = c.choice( g.states[ e.source ] );
        return std::find( choice.begin(), choice.end(), e.label ) != choice.end();
    };

    std::vector<bool> reachable( g.num_nodes(), false );
    std::vector<NodeId> queue{ g.initial() };
    reachable[ g.initial() ] = true;
    for ( std::size_t head = 0; head < queue.size(); ++head )
        for ( const auto ei : g.out_edges( queue[ head ] ) )
        {
            const auto& e = edges[ ei ];
            if ( enabled( e ) && !reachable[ e.target ] )
            {
                reachable[ e.target ] = true;
                queue.push_back( e.target );
            }
        }

    // backward search from marked nodes along controlled edges; a node is
    // satisfied once it has an enabled edge into a marked or satisfied node
    std::vector<bool> satisfied( g.num_nodes(), false );
    std::vector<NodeId> work;
    auto relax = [ & ]( NodeId t ) {
        for ( const auto ei : g.in_edges( t ) )
        {
            const auto& e = edges[ ei ];
            if ( reachable[ e.source ] && !satisfied[ e.source ] && enabled( e ) )
            {
                satisfied[ e.source ] = true;
                work.push_back( e.source );
            }
        }
    };
    for ( const auto t : queue )
        if ( g.marked( t ) )
            relax( t );
    for ( std::size_t head = 0; head < work.size(); ++head )
        relax( work[ head ] );

    return std::all_of( queue.begin(), queue.end(), [ & ]( NodeId s ) { return satisfied[ s ]; } );
}

std::string to_string( VerdictKind v )
{
    switch ( v )
    {
    case VerdictKind::Unknown: return "unknown";
    case VerdictKind::Winning: return "realizable";
    case VerdictKind::Losing: return "unrealizable";
    }
    return "?";
}

Verdict monolithic_synthesis( const ControlProblem& p, std::size_t cap )
{
    const auto g = full_compose( p, cap );
    const auto W = winning_region( g );
    if ( !W[ g.initial() ] )
        return { VerdictKind::Losing, std::nullopt };
    return { VerdictKind::Winning, extract_director( g, W ) };
}

std::string serialize_controller( const Controller& c, const ControlProblem& p )
{
    nlohmann::ordered_json doc;
    doc[ "problem" ] = p.name();
    doc[ "states" ] = nlohmann::ordered_json::array();
    for ( const auto& [ state, choice ] : c.choices )
    {
        nlohmann::ordered_json names = nlohmann::ordered_json::array();
        for ( const auto l : choice )
            names.push_back( p.label( l ).name );
        doc[ "states" ].push_back( { { "state", state.locals }, { "choice", std::move( names ) } } );
    }
    return doc.dump( 1 ) + "\n";
}

std::string serialize_graph( const ExplicitGraph& g, const ControlProblem& p )
{
    nlohmann::ordered_json doc;
    doc[ "problem" ] = p.name();
    doc[ "initial" ] = g.initial();
    doc[ "states" ] = nlohmann::ordered_json::array();
    for ( NodeId i = 0; i < g.num_nodes(); ++i )
    {
        nlohmann::ordered_json node{ { "id", i }, { "marked", g.marked( i ) } };
        if ( i < g.states.size() )
            node[ "state" ] = g.states[ i ].locals;
        doc[ "states" ].push_back( std::move( node ) );
    }
    doc[ "edges" ] = nlohmann::ordered_json::array();
    for ( const auto& e : g.edges() )
        doc[ "edges" ].push_back( nlohmann::ordered_json::array(
            { e.source, e.label < p.labels().size() ? p.label( e.label ).name : std::string{ "<sink>" }, e.target } ) );
    return doc.dump( 1 ) + "\n";
}

} // namespace dcsrl
