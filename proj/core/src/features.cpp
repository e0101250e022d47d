#include "dcsrl/features.hpp"

#include "dcsrl/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace dcsrl
{

FeatureSchema::FeatureSchema( std::vector<std::string> base_labels ) : base_labels_{ std::move( base_labels ) }
{
    std::sort( base_labels_.begin(), base_labels_.end() );
    base_labels_.erase( std::unique( base_labels_.begin(), base_labels_.end() ), base_labels_.end() );
}

std::size_t FeatureSchema::index_of( std::string_view base ) const
{
    const auto it = std::lower_bound( base_labels_.begin(), base_labels_.end(), base );
    if ( it == base_labels_.end() || *it != base )
        throw SchemaMismatch( "label base '" + std::string( base ) + "' is not in the feature vocabulary" );
    return static_cast<std::size_t>( it - base_labels_.begin() );
}

std::vector<FeatureBlock> FeatureSchema::blocks() const
{
    return {
        { "event", event_offset(), num_labels() },
        { "incoming", incoming_offset(), num_labels() },
        { "controllable", controllable_offset(), 1 },
        { "marked", marked_offset(), 2 },
        { "phase", phase_offset(), 3 },
        { "child", child_offset(), 3 },
        { "uncontrollable", uncontrollable_offset(), 4 },
        { "explored", explored_offset(), 2 },
        { "last_expanded", last_expanded_offset(), 2 },
    };
}

FeatureSchema build_schema( const ControlProblem& p )
{
    std::set<std::string> bases;
    for ( const auto& l : p.labels() )
        bases.insert( l.base );
    return FeatureSchema( { bases.begin(), bases.end() } );
}

FeatureExtractor::FeatureExtractor( const ControlProblem& p, FeatureSchema schema, FeatureOptions options )
    : schema_{ std::move( schema ) }, options_{ options }
{
    base_index_.reserve( p.labels().size() );
    for ( const auto& l : p.labels() )
        base_index_.push_back( static_cast<std::uint32_t>( schema_.index_of( l.base ) ) );
}

void FeatureExtractor::compute( const Exploration& e, TransitionId t, FeatureVector& out ) const
{
    if ( t >= e.num_transitions() || e.transition( t ).expanded )
        throw UsageError( "features requested for a transition outside the frontier" );
    if ( base_index_.size() != e.problem().labels().size() )
        throw SchemaMismatch( "feature extractor built for a different problem" );

    const auto& tr = e.transition( t );
    const auto& src = e.state( tr.source );
    const auto& tgt = e.state( tr.target );
    const auto& s = schema_;
    out.assign( s.dimension(), 0 );

    out[ s.event_offset() + base_index_[ tr.label ] ] = 1;
    for ( const auto in : src.incoming_expanded )
        out[ s.incoming_offset() + base_index_[ e.transition( in ).label ] ] = 1;
    out[ s.controllable_offset() ] = e.problem().controllable( tr.label );

    out[ s.marked_offset() ] = src.marked;
    out[ s.marked_offset() + 1 ] = tgt.marked;

    const auto& phase = e.phase_flags();
    out[ s.phase_offset() ] = phase.marked_found;
    out[ s.phase_offset() + 1 ] = phase.winning_set_nonempty;
    out[ s.phase_offset() + 2 ] = phase.marked_cycle_closed;

    if ( tgt.status == StateStatus::Winning )
        out[ s.child_offset() ] = 1;
    else if ( tgt.status == StateStatus::Losing )
        out[ s.child_offset() + 1 ] = 1;
    else if ( tgt.expanded_outgoing > 0 )
        out[ s.child_offset() + 2 ] = 1;

    // an undiscovered state has no known uncontrollable transition
    const auto u = s.uncontrollable_offset();
    out[ u ] = src.uncontrollable_outgoing > 0;
    out[ u + 1 ] = src.uncontrollable_expanded == src.uncontrollable_outgoing;
    out[ u + 2 ] = tgt.uncontrollable_outgoing > 0;
    out[ u + 3 ] = tgt.uncontrollable_expanded == tgt.uncontrollable_outgoing;

    out[ s.explored_offset() ] = src.expanded_outgoing > 0;
    out[ s.explored_offset() + 1 ] = tgt.expanded_outgoing > 0;

    if ( const auto last = e.last_expanded() )
    {
        const auto& lt = e.transition( *last );
        const auto probe = options_.last_expanded_uses_target ? tr.target : tr.source;
        out[ s.last_expanded_offset() ] = probe == lt.target;
        out[ s.last_expanded_offset() + 1 ] = probe == lt.source;
    }
}

FeatureVector FeatureExtractor::compute( const Exploration& e, TransitionId t ) const
{
    FeatureVector out;
    compute( e, t, out );
    return out;
}

std::vector<FeatureVector> FeatureExtractor::frontier_features( const Exploration& e ) const
{
    std::vector<FeatureVector> out( e.frontier().size() );
    for ( std::size_t i = 0; i < out.size(); ++i )
        compute( e, e.frontier()[ i ], out[ i ] );
    return out;
}

FeatureVector compute_features( const Exploration& e, TransitionId t, const FeatureSchema& schema,
                                const FeatureOptions& options )
{
    return FeatureExtractor( e.problem(), schema, options ).compute( e, t );
}

std::string format_features( const FeatureVector& v, const FeatureSchema& schema )
{
    std::string out;
    for ( const auto& b : schema.blocks() )
    {
        if ( !out.empty() )
            out += '|';
        for ( std::size_t i = b.offset; i < b.offset + b.size && i < v.size(); ++i )
            out += v[ i ] ? '1' : '0';
    }
    return out;
}

std::string dump_feature_layout( const FeatureSchema& schema )
{
    nlohmann::ordered_json doc;
    doc[ "dimension" ] = schema.dimension();
    doc[ "base_labels" ] = schema.base_labels();
    doc[ "blocks" ] = nlohmann::ordered_json::array();
    for ( const auto& b : schema.blocks() )
        doc[ "blocks" ].push_back( { { "name", b.name }, { "offset", b.offset }, { "size", b.size } } );
    return doc.dump();
}

std::string dump_frontier_features( const Exploration& e, const FeatureExtractor& fx )
{
    nlohmann::ordered_json doc;
    doc[ "step" ] = e.expanded();
    doc[ "frontier" ] = nlohmann::ordered_json::array();
    FeatureVector bits;
    for ( const auto t : e.frontier() )
    {
        fx.compute( e, t, bits );
        const auto& tr = e.transition( t );
        doc[ "frontier" ].push_back( { { "id", t },
                                       { "source", e.state( tr.source ).composite.locals },
                                       { "label", e.problem().label( tr.label ).name },
                                       { "target", e.state( tr.target ).composite.locals },
                                       { "bits", format_features( bits, fx.schema() ) } } );
    }
    return doc.dump();
}

} // namespace dcsrl
