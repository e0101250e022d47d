#include "dcsrl/des.hpp"

#include "dcsrl/error.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace dcsrl
{

std::string base_label( std::string_view name )
{
    for ( ;; )
    {
        const auto dot = name.rfind( '.' );
        if ( dot == std::string_view::npos || dot == 0 || dot + 1 == name.size() )
            break;
        const auto suffix = name.substr( dot + 1 );
        if ( !std::all_of( suffix.begin(), suffix.end(), []( char c ) { return c >= '0' && c <= '9'; } ) )
            break;
        name = name.substr( 0, dot );
    }
    return std::string{ name };
}

bool ComponentAutomaton::in_alphabet( LabelId l ) const
{
    return std::binary_search( alphabet_.begin(), alphabet_.end(), l );
}

std::optional<LocalState> ComponentAutomaton::successor( LocalState s, LabelId l ) const
{
    const auto& out = outgoing_[ s ];
    const auto it = std::lower_bound( out.begin(), out.end(), l,
                                      []( const LocalTransition& t, LabelId x ) { return t.label < x; } );
    if ( it == out.end() || it->label != l )
        return std::nullopt;
    return it->target;
}

std::size_t ComponentAutomaton::num_transitions() const
{
    std::size_t total = 0;
    for ( const auto& out : outgoing_ )
        total += out.size();
    return total;
}

std::size_t CompositeStateHash::operator()( const CompositeState& s ) const noexcept
{
    // FNV-1a over the local indexes
    std::uint64_t h = 1469598103934665603ULL;
    for ( const auto v : s.locals )
    {
        h ^= v;
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>( h );
}

std::optional<LabelId> ControlProblem::find_label( std::string_view name ) const
{
    const auto it = std::lower_bound( labels_.begin(), labels_.end(), name,
                                      []( const EventLabel& l, std::string_view x ) { return l.name < x; } );
    if ( it == labels_.end() || it->name != name )
        return std::nullopt;
    return static_cast<LabelId>( it - labels_.begin() );
}

std::vector<std::string> ControlProblem::base_labels() const
{
    std::set<std::string> bases;
    for ( const auto& l : labels_ )
        bases.insert( l.base );
    return { bases.begin(), bases.end() };
}

CompositeState ControlProblem::initial_state() const
{
    CompositeState s;
    s.locals.reserve( components_.size() );
    for ( const auto& c : components_ )
        s.locals.push_back( c.initial() );
    return s;
}

void ControlProblem::check_state( const CompositeState& s ) const
{
    if ( s.locals.size() != components_.size() )
        throw StructuralError( "composite state has " + std::to_string( s.locals.size() ) +
                               " locals, problem has " + std::to_string( components_.size() ) + " components" );
    for ( std::size_t i = 0; i < s.locals.size(); ++i )
        if ( s.locals[ i ] >= components_[ i ].num_states() )
            throw StructuralError( "local state " + std::to_string( s.locals[ i ] ) + " out of range for component " +
                                   components_[ i ].name() );
}

std::vector<CompositeTransition> enabled_transitions( const CompositeState& s, const ControlProblem& p )
{
    p.check_state( s );

    struct Offer
    {
        LabelId label;
        std::uint32_t component;
        LocalState target;
    };
    std::vector<Offer> offers;
    const auto components = p.components();
    for ( std::uint32_t c = 0; c < components.size(); ++c )
        for ( const auto& t : components[ c ].outgoing( s.locals[ c ] ) )
            offers.push_back( { t.label, c, t.target } );
    std::sort( offers.begin(), offers.end(), []( const Offer& a, const Offer& b ) {
        return a.label != b.label ? a.label < b.label : a.component < b.component;
    } );

    std::vector<CompositeTransition> result;
    for ( std::size_t i = 0; i < offers.size(); )
    {
        std::size_t j = i;
        while ( j < offers.size() && offers[ j ].label == offers[ i ].label )
            ++j;
        const auto label = offers[ i ].label;
        // every owner offers the label at most once (determinism), so a full
        // group means all owners agree
        if ( j - i == p.owners( label ).size() )
        {
            CompositeTransition t{ label, s };
            for ( std::size_t x = i; x < j; ++x )
                t.target.locals[ offers[ x ].component ] = offers[ x ].target;
            result.push_back( std::move( t ) );
        }
        i = j;
    }
    return result;
}

bool is_marked( const CompositeState& s, const ControlProblem& p )
{
    p.check_state( s );
    const auto components = p.components();
    for ( std::size_t c = 0; c < components.size(); ++c )
        if ( !components[ c ].is_marked( s.locals[ c ] ) )
            return false;
    return true;
}

// ---------------------------------------------------------------------------
// ProblemBuilder

ProblemBuilder::ProblemBuilder( std::string name ) : name_{ std::move( name ) } {}

ProblemBuilder& ProblemBuilder::params( int n, int k )
{
    params_ = ProblemParams{ n, k };
    return *this;
}

ProblemBuilder& ProblemBuilder::label( std::string_view name, bool controllable )
{
    declared_.emplace_back( std::string{ name }, controllable );
    return *this;
}

ProblemBuilder::Component& ProblemBuilder::Component::transition( LocalState src, std::string_view label,
                                                                   LocalState dst )
{
    transitions_.emplace_back( src, std::string{ label }, dst );
    return *this;
}

ProblemBuilder::Component& ProblemBuilder::Component::alphabet( std::string_view label )
{
    alphabet_.emplace_back( label );
    return *this;
}

ProblemBuilder::Component& ProblemBuilder::Component::alphabet( std::string_view label, bool controllable )
{
    alphabet_.emplace_back( label );
    declared_.emplace_back( std::string{ label }, controllable );
    return *this;
}

ProblemBuilder::Component& ProblemBuilder::Component::initial( LocalState s )
{
    initial_ = s;
    return *this;
}

ProblemBuilder::Component& ProblemBuilder::Component::mark( LocalState s )
{
    marked_.push_back( s );
    return *this;
}

ProblemBuilder::Component& ProblemBuilder::component( std::string name, std::size_t num_states )
{
    auto& c = components_.emplace_back();
    c.name_ = std::move( name );
    c.num_states_ = num_states;
    return c;
}

ControlProblem ProblemBuilder::build() &&
{
    if ( components_.empty() )
        throw SemanticError( "problem '" + name_ + "' has no components" );

    // controllability must agree across every declaration of a label
    std::map<std::string, bool> controllability;
    auto declare = [ & ]( const std::string& label, bool c, const std::string& where ) {
        const auto [ it, inserted ] = controllability.emplace( label, c );
        if ( !inserted && it->second != c )
            throw SemanticError( "inconsistent controllability for label '" + label + "' (" + where + ")" );
    };
    for ( const auto& [ l, c ] : declared_ )
        declare( l, c, "label declarations" );
    for ( const auto& comp : components_ )
        for ( const auto& [ l, c ] : comp.declared_ )
            declare( l, c, "component " + comp.name_ );

    std::set<std::string> used;
    for ( const auto& comp : components_ )
    {
        used.insert( comp.alphabet_.begin(), comp.alphabet_.end() );
        for ( const auto& t : comp.transitions_ )
            used.insert( std::get<1>( t ) );
    }
    for ( const auto& l : used )
        if ( !controllability.contains( l ) )
            throw SemanticError( "label '" + l + "' is used but its controllability is never declared" );

    ControlProblem p;
    p.name_ = name_;
    p.params_ = params_;
    // the problem alphabet is the union of component alphabets
    for ( const auto& [ l, c ] : controllability )
        if ( used.contains( l ) )
            p.labels_.push_back( EventLabel{ l, c, base_label( l ) } );
    std::map<std::string, LabelId> ids;
    for ( LabelId i = 0; i < p.labels_.size(); ++i )
        ids.emplace( p.labels_[ i ].name, i );

    p.owners_.assign( p.labels_.size(), {} );
    for ( std::uint32_t ci = 0; ci < components_.size(); ++ci )
    {
        const auto& src = components_[ ci ];
        const auto where = "component '" + src.name_ + "'";
        if ( src.num_states_ == 0 )
            throw SemanticError( where + " has no states" );
        if ( src.initial_ >= src.num_states_ )
            throw SemanticError( where + ": initial state " + std::to_string( src.initial_ ) + " out of range" );

        ComponentAutomaton a;
        a.name_ = src.name_;
        a.initial_ = src.initial_;
        a.marked_.assign( src.num_states_, false );
        for ( const auto m : src.marked_ )
        {
            if ( m >= src.num_states_ )
                throw SemanticError( where + ": marked state " + std::to_string( m ) + " out of range" );
            a.marked_[ m ] = true;
        }

        std::set<LabelId> alphabet;
        for ( const auto& l : src.alphabet_ )
            alphabet.insert( ids.at( l ) );
        a.outgoing_.assign( src.num_states_, {} );
        for ( const auto& [ s, l, d ] : src.transitions_ )
        {
            if ( s >= src.num_states_ || d >= src.num_states_ )
                throw SemanticError( where + ": transition " + std::to_string( s ) + " -" + l + "-> " +
                                     std::to_string( d ) + " references a state out of range" );
            const auto id = ids.at( l );
            alphabet.insert( id );
            a.outgoing_[ s ].push_back( { id, d } );
        }
        for ( std::size_t s = 0; s < a.outgoing_.size(); ++s )
        {
            auto& out = a.outgoing_[ s ];
            std::sort( out.begin(), out.end(), []( const LocalTransition& x, const LocalTransition& y ) {
                return x.label != y.label ? x.label < y.label : x.target < y.target;
            } );
            out.erase( std::unique( out.begin(), out.end() ), out.end() );
            for ( std::size_t i = 1; i < out.size(); ++i )
                if ( out[ i ].label == out[ i - 1 ].label )
                    throw SemanticError( where + " is nondeterministic: state " + std::to_string( s ) +
                                         " has two successors on '" + p.labels_[ out[ i ].label ].name + "'" );
        }
        a.alphabet_.assign( alphabet.begin(), alphabet.end() );
        for ( const auto l : a.alphabet_ )
            p.owners_[ l ].push_back( ci );
        p.components_.push_back( std::move( a ) );
    }
    return p;
}

} // namespace dcsrl
