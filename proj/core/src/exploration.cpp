#include "dcsrl/exploration.hpp"

#include "dcsrl/error.hpp"

#include <algorithm>
#include <stdexcept>

namespace dcsrl
{

Exploration::Exploration( std::shared_ptr<const ControlProblem> problem, ExplorationOptions options )
    : problem_{ std::move( problem ) }, options_{ options }
{
    if ( !problem_ )
        throw UsageError( "exploration needs a problem" );
    const auto init = intern( problem_->initial_state() );
    discover( init );
    if ( options_.mode == ClassificationMode::Incremental )
        classify_incremental( init, init );
    else
        classify_recompute();
}

VerdictKind Exploration::verdict() const
{
    switch ( states_[ initial() ].status )
    {
    case StateStatus::Winning: return VerdictKind::Winning;
    case StateStatus::Losing: return VerdictKind::Losing;
    case StateStatus::Unknown: break;
    }
    return VerdictKind::Unknown;
}

std::optional<StateId> Exploration::find( const CompositeState& s ) const
{
    const auto it = ids_.find( s );
    if ( it == ids_.end() )
        return std::nullopt;
    return it->second;
}

StateId Exploration::intern( CompositeState s )
{
    const auto it = ids_.find( s );
    if ( it != ids_.end() )
        return it->second;
    const auto id = static_cast<StateId>( states_.size() );
    ExploredState st;
    st.marked = is_marked( s, *problem_ );
    st.composite = s;
    states_.push_back( std::move( st ) );
    ids_.emplace( std::move( s ), id );
    return id;
}

void Exploration::discover( StateId s )
{
    states_[ s ].discovered = true;
    if ( states_[ s ].marked )
        phase_.marked_found = true;
    // copy: interning successors may reallocate states_
    const auto composite = states_[ s ].composite;
    for ( auto& t : enabled_transitions( composite, *problem_ ) )
    {
        const auto target = intern( std::move( t.target ) );
        const auto id = static_cast<TransitionId>( transitions_.size() );
        transitions_.push_back( TransitionRef{ s, t.label, target, id, false } );
        auto& st = states_[ s ];
        st.outgoing.push_back( id );
        if ( !problem_->controllable( t.label ) )
            ++st.uncontrollable_outgoing;
        frontier_.push_back( id );
    }
}

void Exploration::expand( std::size_t frontier_index )
{
    if ( done() && options_.stop_at_verdict )
        throw UsageError( "expand called after the verdict was reached" );
    if ( frontier_index >= frontier_.size() )
        throw UsageError( "frontier index " + std::to_string( frontier_index ) + " out of range (frontier size " +
                          std::to_string( frontier_.size() ) + ")" );

    const auto id = frontier_[ frontier_index ];
    frontier_.erase( frontier_.begin() + static_cast<std::ptrdiff_t>( frontier_index ) );
    history_.push_back( id );
    auto& t = transitions_[ id ];
    t.expanded = true;
    const auto source = t.source;
    const auto target = t.target;

    auto& src = states_[ source ];
    ++src.expanded_outgoing;
    if ( !problem_->controllable( t.label ) )
        ++src.uncontrollable_expanded;
    states_[ target ].incoming_expanded.push_back( id );

    if ( !states_[ target ].discovered )
        discover( target );
    else if ( !phase_.marked_cycle_closed )
        update_marked_cycle( source, target );
    last_expanded_ = id;

    if ( options_.mode == ClassificationMode::Incremental )
        classify_incremental( source, target );
    else
        classify_recompute();
    phase_.winning_set_nonempty = winning_count_ > 0;
}

void Exploration::update_marked_cycle( StateId source, StateId target )
{
    // closing source -> target: look for target ~> source over expanded edges
    // through at least one marked state
    std::vector<bool> forward( states_.size(), false );
    std::vector<StateId> queue{ target };
    forward[ target ] = true;
    for ( std::size_t head = 0; head < queue.size(); ++head )
        for ( const auto tid : states_[ queue[ head ] ].outgoing )
        {
            const auto& t = transitions_[ tid ];
            if ( t.expanded && !forward[ t.target ] )
            {
                forward[ t.target ] = true;
                queue.push_back( t.target );
            }
        }
    if ( !forward[ source ] )
        return;
    if ( states_[ source ].marked || states_[ target ].marked )
    {
        phase_.marked_cycle_closed = true;
        return;
    }
    std::vector<bool> backward( states_.size(), false );
    queue.assign( 1, source );
    backward[ source ] = true;
    for ( std::size_t head = 0; head < queue.size(); ++head )
    {
        const auto s = queue[ head ];
        if ( states_[ s ].marked )
        {
            phase_.marked_cycle_closed = true;
            return;
        }
        for ( const auto tid : states_[ s ].incoming_expanded )
        {
            const auto p = transitions_[ tid ].source;
            if ( forward[ p ] && !backward[ p ] )
            {
                backward[ p ] = true;
                queue.push_back( p );
            }
        }
    }
}

void Exploration::set_status( StateId s, StateStatus status )
{
    auto& st = states_[ s ];
    if ( st.status == status )
        return;
    if ( st.status != StateStatus::Unknown )
        throw std::logic_error( "classification of a state changed after being decided" );
    st.status = status;
    if ( status == StateStatus::Winning )
        ++winning_count_;
    else
        ++losing_count_;
}

void Exploration::classify_incremental( StateId source, StateId target )
{
    // Only unclassified states that reach the changed source (or the newly
    // discovered target) through unclassified states can change. Everything
    // else is collapsed: winning states into a good sink, losing states into
    // a bad sink, and the remaining unclassified states into whichever sink
    // matches the assumption of the graph being solved, since their own
    // classification is unaffected by this expansion.
    scratch_.resize( states_.size(), -1 );
    std::vector<StateId> affected;
    auto add = [ & ]( StateId s ) {
        if ( states_[ s ].discovered && states_[ s ].status == StateStatus::Unknown && scratch_[ s ] < 0 )
        {
            scratch_[ s ] = static_cast<std::int32_t>( affected.size() );
            affected.push_back( s );
        }
    };
    add( source );
    add( target );
    for ( std::size_t head = 0; head < affected.size(); ++head )
        for ( const auto tid : states_[ affected[ head ] ].incoming_expanded )
            add( transitions_[ tid ].source );

    if ( !affected.empty() )
    {
        const auto m = static_cast<NodeId>( affected.size() );
        const NodeId good = m;
        const NodeId bad = m + 1;
        auto build = [ & ]( bool optimistic ) {
            ExplicitGraph g( m + 2, 0 );
            for ( NodeId i = 0; i < m; ++i )
                g.set_marked( i, states_[ affected[ i ] ].marked );
            g.set_marked( good, true );
            g.add_edge( good, sink_label, good, true );
            const auto unknown_sink = optimistic ? good : bad;
            for ( NodeId i = 0; i < m; ++i )
                for ( const auto tid : states_[ affected[ i ] ].outgoing )
                {
                    const auto& t = transitions_[ tid ];
                    NodeId to = unknown_sink;
                    if ( t.expanded )
                    {
                        const auto status = states_[ t.target ].status;
                        if ( status == StateStatus::Winning )
                            to = good;
                        else if ( status == StateStatus::Losing )
                            to = bad;
                        else if ( scratch_[ t.target ] >= 0 )
                            to = static_cast<NodeId>( scratch_[ t.target ] );
                    }
                    g.add_edge( i, t.label, to, problem_->controllable( t.label ) );
                }
            g.build_index();
            return g;
        };
        const auto pessimistic = winning_region( build( false ) );
        const auto optimistic = winning_region( build( true ) );
        for ( NodeId i = 0; i < m; ++i )
        {
            if ( pessimistic[ i ] )
                set_status( affected[ i ], StateStatus::Winning );
            else if ( !optimistic[ i ] )
                set_status( affected[ i ], StateStatus::Losing );
        }
    }
    for ( const auto s : affected )
        scratch_[ s ] = -1;
}

void Exploration::classify_recompute()
{
    const auto c = classify_partial( *this );
    for ( const auto s : c.winning )
        set_status( s, StateStatus::Winning );
    for ( const auto s : c.losing )
        set_status( s, StateStatus::Losing );
    if ( c.winning.size() != winning_count_ || c.losing.size() != losing_count_ )
        throw std::logic_error( "classification shrank between expansions" );
}

namespace
{

ExplicitGraph augmented_graph( const Exploration& e, bool optimistic )
{
    std::vector<NodeId> node( e.num_states(), 0 );
    std::vector<StateId> discovered;
    for ( StateId s = 0; s < e.num_states(); ++s )
        if ( e.state( s ).discovered )
        {
            node[ s ] = static_cast<NodeId>( discovered.size() );
            discovered.push_back( s );
        }
    const auto sink = static_cast<NodeId>( discovered.size() );
    ExplicitGraph g( discovered.size() + 1, node[ e.initial() ] );
    for ( const auto s : discovered )
    {
        g.states.push_back( e.state( s ).composite );
        g.set_marked( node[ s ], e.state( s ).marked );
        for ( const auto tid : e.state( s ).outgoing )
        {
            const auto& t = e.transition( tid );
            g.add_edge( node[ s ], t.label, t.expanded ? node[ t.target ] : sink, e.problem().controllable( t.label ) );
        }
    }
    if ( optimistic )
    {
        g.set_marked( sink, true );
        g.add_edge( sink, sink_label, sink, true );
    }
    g.build_index();
    return g;
}

} // namespace

ExplicitGraph pessimistic_graph( const Exploration& e )
{
    return augmented_graph( e, false );
}

ExplicitGraph optimistic_graph( const Exploration& e )
{
    return augmented_graph( e, true );
}

Classification classify_partial( const Exploration& e )
{
    const auto pess = pessimistic_graph( e );
    const auto opt = optimistic_graph( e );
    const auto w_pess = winning_region( pess );
    const auto w_opt = winning_region( opt );
    Classification c;
    for ( NodeId i = 0; i < pess.states.size(); ++i )
    {
        const auto s = *e.find( pess.states[ i ] );
        if ( w_pess[ i ] )
            c.winning.push_back( s );
        if ( !w_opt[ i ] )
            c.losing.push_back( s );
    }
    std::sort( c.winning.begin(), c.winning.end() );
    std::sort( c.losing.begin(), c.losing.end() );
    return c;
}

Classification current_classification( const Exploration& e )
{
    Classification c;
    for ( StateId s = 0; s < e.num_states(); ++s )
    {
        if ( e.state( s ).status == StateStatus::Winning )
            c.winning.push_back( s );
        else if ( e.state( s ).status == StateStatus::Losing )
            c.losing.push_back( s );
    }
    return c;
}

Controller build_controller( const Exploration& e )
{
    if ( e.verdict() != VerdictKind::Winning )
        throw UsageError( "build_controller requires a winning initial state" );
    const auto g = pessimistic_graph( e );
    NodeSet W( g.num_nodes(), false );
    for ( NodeId i = 0; i < g.states.size(); ++i )
        W[ i ] = e.state( *e.find( g.states[ i ] ) ).status == StateStatus::Winning;
    return extract_director( g, W );
}

std::size_t RandomPolicy::select( const Exploration& e )
{
    return std::uniform_int_distribution<std::size_t>( 0, e.frontier().size() - 1 )( rng_ );
}

std::size_t BfsPolicy::select( const Exploration& )
{
    return 0;
}

std::size_t LifoPolicy::select( const Exploration& e )
{
    return e.frontier().size() - 1;
}

SynthesisResult run_synthesis( std::shared_ptr<const ControlProblem> problem, ExplorationPolicy& policy,
                               const SynthesisOptions& options )
{
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto elapsed = [ & ] { return std::chrono::duration<double>( clock::now() - start ); };
    auto out_of_time = [ & ] { return options.timeout && elapsed() >= *options.timeout; };

    Exploration e( std::move( problem ), options.exploration );
    while ( !e.done() )
    {
        if ( options.budget && e.expanded() >= *options.budget )
            break;
        if ( out_of_time() )
            break;
        e.expand( policy.select( e ) );
    }

    SynthesisResult r;
    r.verdict = e.verdict();
    r.expanded = e.expanded();
    r.solved = e.done() && !out_of_time();
    if ( !r.solved )
        r.verdict = VerdictKind::Unknown;
    if ( r.verdict == VerdictKind::Winning && options.build_controller )
        r.controller = build_controller( e );
    r.time_ms = std::chrono::duration<double, std::milli>( clock::now() - start ).count();
    return r;
}

} // namespace dcsrl
