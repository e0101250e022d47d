#include "dcsrl/spec_io.hpp"

#include "dcsrl/error.hpp"
#include "dcsrl/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace dcsrl
{

namespace
{

using nlohmann::json;
using nlohmann::ordered_json;

std::pair<std::size_t, std::size_t> line_column( std::string_view text, std::size_t byte )
{
    std::size_t line = 1;
    std::size_t column = 1;
    const auto end = std::min( byte, text.size() );
    for ( std::size_t i = 0; i + 1 < end; ++i )
    {
        if ( text[ i ] == '\n' )
        {
            ++line;
            column = 1;
        }
        else
            ++column;
    }
    return { line, column };
}

const json& field( const json& obj, const char* name, const std::string& where )
{
    if ( !obj.is_object() )
        throw SemanticError( where + " must be an object" );
    const auto it = obj.find( name );
    if ( it == obj.end() )
        throw SemanticError( where + " is missing field '" + name + "'" );
    return *it;
}

std::uint32_t as_index( const json& v, const std::string& what )
{
    if ( !v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > UINT32_MAX )
        throw SemanticError( what + " must be a non-negative integer" );
    return v.get<std::uint32_t>();
}

const std::string& as_string( const json& v, const std::string& what )
{
    if ( !v.is_string() )
        throw SemanticError( what + " must be a string" );
    return v.get_ref<const std::string&>();
}

bool as_bool( const json& v, const std::string& what )
{
    if ( !v.is_boolean() )
        throw SemanticError( what + " must be a boolean" );
    return v.get<bool>();
}

ControlProblem problem_from_json( const json& doc )
{
    const std::string name = doc.is_object() && doc.contains( "name" ) ? as_string( doc[ "name" ], "name" ) : "";
    ProblemBuilder b( name );

    if ( doc.contains( "params" ) && !doc[ "params" ].is_null() )
    {
        const auto& params = doc[ "params" ];
        b.params( static_cast<int>( as_index( field( params, "n", "params" ), "params.n" ) ),
                  static_cast<int>( as_index( field( params, "k", "params" ), "params.k" ) ) );
    }

    const auto& labels = field( doc, "labels", "document" );
    if ( !labels.is_array() )
        throw SemanticError( "labels must be an array" );
    for ( const auto& l : labels )
        b.label( as_string( field( l, "name", "label" ), "label name" ),
                 as_bool( field( l, "controllable", "label" ), "label controllable" ) );

    const auto& components = field( doc, "components", "document" );
    if ( !components.is_array() )
        throw SemanticError( "components must be an array" );
    std::size_t index = 0;
    for ( const auto& c : components )
    {
        const auto where = "component " + std::to_string( index++ );
        std::string cname = c.is_object() && c.contains( "name" ) ? as_string( c[ "name" ], where + " name" )
                                                                    : "c" + std::to_string( index - 1 );
        auto& comp = b.component( std::move( cname ), as_index( field( c, "states", where ), where + " states" ) );
        comp.initial( as_index( field( c, "initial", where ), where + " initial" ) );
        const auto& marked = field( c, "marked", where );
        if ( !marked.is_array() )
            throw SemanticError( where + " marked must be an array" );
        for ( const auto& m : marked )
            comp.mark( as_index( m, where + " marked state" ) );
        if ( c.contains( "alphabet" ) )
        {
            const auto& alphabet = c[ "alphabet" ];
            if ( !alphabet.is_array() )
                throw SemanticError( where + " alphabet must be an array" );
            for ( const auto& a : alphabet )
            {
                if ( a.is_object() )
                    comp.alphabet( as_string( field( a, "name", where + " alphabet entry" ), where + " label" ),
                                   as_bool( field( a, "controllable", where + " alphabet entry" ),
                                            where + " controllable" ) );
                else
                    comp.alphabet( as_string( a, where + " alphabet entry" ) );
            }
        }
        const auto& transitions = field( c, "transitions", where );
        if ( !transitions.is_array() )
            throw SemanticError( where + " transitions must be an array" );
        for ( const auto& t : transitions )
        {
            if ( !t.is_array() || t.size() != 3 )
                throw SemanticError( where + " transitions must be [src, label, dst] triples" );
            comp.transition( as_index( t[ 0 ], where + " transition source" ),
                             as_string( t[ 1 ], where + " transition label" ),
                             as_index( t[ 2 ], where + " transition target" ) );
        }
    }
    return std::move( b ).build();
}

} // namespace

ControlProblem parse_spec( std::string_view document )
{
    json doc;
    try
    {
        doc = json::parse( document.begin(), document.end() );
    }
    catch ( const json::parse_error& e )
    {
        const auto [ line, column ] = line_column( document, e.byte );
        throw ParseError( e.what(), line, column );
    }
    return problem_from_json( doc );
}

ControlProblem load_spec( const std::filesystem::path& path )
{
    std::ifstream in( path, std::ios::binary );
    if ( !in )
        throw SemanticError( "cannot open spec file " + path.string() );
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_spec( buffer.str() );
}

std::string serialize_spec( const ControlProblem& p )
{
    ordered_json doc;
    doc[ "name" ] = p.name();
    doc[ "labels" ] = ordered_json::array();
    for ( const auto& l : p.labels() )
        doc[ "labels" ].push_back( ordered_json{ { "name", l.name }, { "controllable", l.controllable } } );
    doc[ "components" ] = ordered_json::array();
    for ( const auto& c : p.components() )
    {
        ordered_json comp;
        comp[ "name" ] = c.name();
        comp[ "states" ] = c.num_states();
        comp[ "initial" ] = c.initial();
        comp[ "marked" ] = ordered_json::array();
        for ( LocalState s = 0; s < c.num_states(); ++s )
            if ( c.is_marked( s ) )
                comp[ "marked" ].push_back( s );
        comp[ "alphabet" ] = ordered_json::array();
        for ( const auto l : c.alphabet() )
            comp[ "alphabet" ].push_back( p.label( l ).name );
        comp[ "transitions" ] = ordered_json::array();
        for ( LocalState s = 0; s < c.num_states(); ++s )
            for ( const auto& t : c.outgoing( s ) )
                comp[ "transitions" ].push_back( ordered_json::array( { s, p.label( t.label ).name, t.target } ) );
        doc[ "components" ].push_back( std::move( comp ) );
    }
    if ( p.params() )
        doc[ "params" ] = ordered_json{ { "n", p.params()->n }, { "k", p.params()->k } };
    return doc.dump( 1 ) + "\n";
}

void save_spec( const ControlProblem& p, const std::filesystem::path& path )
{
    write_file_atomic( path, serialize_spec( p ) );
}

std::string to_string( Domain d )
{
    switch ( d )
    {
    case Domain::TransferLine: return "TransferLine";
    case Domain::DiningPhilosophers: return "DiningPhilosophers";
    case Domain::CraftedGate: return "CraftedGate";
    case Domain::Random: return "Random";
    }
    return "?";
}

Domain parse_domain( std::string_view name )
{
    std::string lower;
    for ( const char c : name )
        lower.push_back( static_cast<char>( std::tolower( static_cast<unsigned char>( c ) ) ) );
    if ( lower == "transferline" || lower == "tl" )
        return Domain::TransferLine;
    if ( lower == "diningphilosophers" || lower == "dp" )
        return Domain::DiningPhilosophers;
    if ( lower == "craftedgate" || lower == "cg" )
        return Domain::CraftedGate;
    if ( lower == "random" )
        return Domain::Random;
    throw UsageError( "unknown domain '" + std::string{ name } + "'" );
}

namespace
{

std::string indexed( std::string_view base, int i )
{
    return std::string{ base } + "." + std::to_string( i );
}

ControlProblem transfer_line( int n, int k )
{
    ProblemBuilder b( "TransferLine(" + std::to_string( n ) + "," + std::to_string( k ) + ")" );
    b.params( n, k );
    for ( int i = 1; i <= n; ++i )
        b.label( indexed( "start", i ), true ).label( indexed( "finish", i ), false );
    b.label( "take", true ).label( "accept", false ).label( "reject", false );

    for ( int i = 1; i <= n; ++i )
    {
        b.component( indexed( "machine", i ), 2 )
            .transition( 0, indexed( "start", i ), 1 )
            .transition( 1, indexed( "finish", i ), 0 )
            .mark( 0 );
    }

    // buffer i sits between machine i and machine i+1 (or the test unit);
    // count 0..k, state k+1 is the overflow error
    for ( int i = 1; i <= n; ++i )
    {
        const auto consumer = i < n ? indexed( "start", i + 1 ) : std::string{ "take" };
        auto& buf = b.component( indexed( "buffer", i ), static_cast<std::size_t>( k ) + 2 );
        buf.mark( 0 ).alphabet( consumer );
        for ( LocalState c = 0; c <= static_cast<LocalState>( k ); ++c )
        {
            buf.transition( c, indexed( "finish", i ), c + 1 );
            if ( i == 1 )
                buf.transition( c, "reject", c + 1 );
            if ( c > 0 )
                buf.transition( c, consumer, c - 1 );
        }
    }

    b.component( "test", 2 ).transition( 0, "take", 1 ).transition( 1, "accept", 0 ).transition( 1, "reject", 0 ).mark(
        0 );
    return std::move( b ).build();
}

ControlProblem dining_philosophers( int n, int k )
{
    ProblemBuilder b( "DiningPhilosophers(" + std::to_string( n ) + "," + std::to_string( k ) + ")" );
    b.params( n, k );
    const int forks = std::max( n, 2 );
    auto right_of = [ & ]( int p ) { return p % forks + 1; };

    for ( int p = 1; p <= n; ++p )
    {
        b.label( indexed( "hungry", p ), false )
            .label( indexed( "grab_left", p ), true )
            .label( indexed( "grab_right", p ), true )
            .label( indexed( "eat", p ), false )
            .label( indexed( "etiquette", p ), true )
            .label( indexed( "release", p ), true );

        // 0 thinking, 1 hungry, 2 left fork, 3 both forks, 4..4+k etiquette
        const auto done = static_cast<LocalState>( 4 + k );
        auto& phil = b.component( indexed( "philosopher", p ), static_cast<std::size_t>( done ) + 1 );
        phil.transition( 0, indexed( "hungry", p ), 1 )
            .transition( 1, indexed( "grab_left", p ), 2 )
            .transition( 2, indexed( "grab_right", p ), 3 )
            .transition( 3, indexed( "eat", p ), 4 )
            .transition( done, indexed( "release", p ), 0 )
            .mark( 0 );
        for ( LocalState s = 4; s < done; ++s )
            phil.transition( s, indexed( "etiquette", p ), s + 1 );
    }

    for ( int f = 1; f <= forks; ++f )
    {
        std::vector<std::pair<std::string, std::string>> holders; // (grab, release)
        for ( int p = 1; p <= n; ++p )
        {
            if ( p == f )
                holders.emplace_back( indexed( "grab_left", p ), indexed( "release", p ) );
            if ( right_of( p ) == f )
                holders.emplace_back( indexed( "grab_right", p ), indexed( "release", p ) );
        }
        auto& fork = b.component( indexed( "fork", f ), holders.size() + 1 );
        fork.mark( 0 );
        for ( std::size_t h = 0; h < holders.size(); ++h )
        {
            const auto held = static_cast<LocalState>( h + 1 );
            fork.transition( 0, holders[ h ].first, held ).transition( held, holders[ h ].second, 0 );
        }
    }
    return std::move( b ).build();
}

ControlProblem crafted_gate( int n, int k )
{
    ProblemBuilder b( "CraftedGate(" + std::to_string( n ) + "," + std::to_string( k ) + ")" );
    b.params( n, k );
    b.label( "reset", true );
    for ( int i = 1; i <= n; ++i )
        b.label( indexed( "request", i ), false ).label( indexed( "serve", i ), true );

    // 0 idle, 1 waiting, 2 served; reset is blocked while waiting
    for ( int i = 1; i <= n; ++i )
    {
        b.component( indexed( "client", i ), 3 )
            .transition( 0, indexed( "request", i ), 1 )
            .transition( 1, indexed( "serve", i ), 2 )
            .transition( 0, "reset", 0 )
            .transition( 2, "reset", 0 )
            .mark( 0 )
            .mark( 2 );
    }

    // the server counts serves since the last reset and refuses the (k+1)-th
    auto& server = b.component( "server", static_cast<std::size_t>( k ) + 1 );
    for ( LocalState c = 0; c <= static_cast<LocalState>( k ); ++c )
    {
        server.transition( c, "reset", 0 ).mark( c );
        for ( int i = 1; i <= n; ++i )
        {
            if ( c < static_cast<LocalState>( k ) )
                server.transition( c, indexed( "serve", i ), c + 1 );
            else
                server.alphabet( indexed( "serve", i ) );
        }
    }
    return std::move( b ).build();
}

} // namespace

ControlProblem generate_instance( Domain d, int n, int k )
{
    if ( n < 1 || k < 1 || n > max_instance_parameter || k > max_instance_parameter )
        throw UsageError( "instance parameters out of range: n=" + std::to_string( n ) + ", k=" + std::to_string( k ) );
    switch ( d )
    {
    case Domain::TransferLine: return transfer_line( n, k );
    case Domain::DiningPhilosophers: return dining_philosophers( n, k );
    case Domain::CraftedGate: return crafted_gate( n, k );
    case Domain::Random: break;
    }
    throw UsageError( "the Random domain is generated from a seed, not from (n, k)" );
}

ControlProblem generate_random( std::uint64_t seed, int max_components, int max_states, int max_labels )
{
    if ( max_components < 1 || max_states < 1 || max_labels < 1 )
        throw UsageError( "random generator bounds must be >= 1" );
    std::mt19937_64 rng( seed );
    auto uniform = [ &rng ]( int lo, int hi ) { return std::uniform_int_distribution<int>( lo, hi )( rng ); };
    auto coin = [ &rng ]( double p ) { return std::bernoulli_distribution( p )( rng ); };

    ProblemBuilder b( "Random(" + std::to_string( seed ) + ")" );
    const int num_labels = uniform( 1, max_labels );
    std::vector<std::string> names;
    for ( int l = 0; l < num_labels; ++l )
    {
        names.push_back( "e" + std::to_string( l ) );
        b.label( names.back(), coin( 0.6 ) );
    }

    const int num_components = uniform( 1, max_components );
    for ( int c = 0; c < num_components; ++c )
    {
        const int num_states = uniform( 1, max_states );
        std::vector<int> alphabet;
        for ( int l = 0; l < num_labels; ++l )
            if ( coin( 0.5 ) )
                alphabet.push_back( l );
        if ( alphabet.empty() )
            alphabet.push_back( uniform( 0, num_labels - 1 ) );

        auto& comp = b.component( "c" + std::to_string( c ), static_cast<std::size_t>( num_states ) );
        bool any = false;
        for ( int s = 0; s < num_states; ++s )
        {
            if ( coin( 0.5 ) )
                comp.mark( static_cast<LocalState>( s ) );
            for ( const int l : alphabet )
            {
                if ( coin( 0.55 ) )
                {
                    comp.transition( static_cast<LocalState>( s ), names[ l ],
                                     static_cast<LocalState>( uniform( 0, num_states - 1 ) ) );
                    any = true;
                }
                else
                    comp.alphabet( names[ l ] );
            }
        }
        if ( !any )
            comp.transition( 0, names[ alphabet[ 0 ] ], static_cast<LocalState>( uniform( 0, num_states - 1 ) ) );
    }
    return std::move( b ).build();
}

} // namespace dcsrl
