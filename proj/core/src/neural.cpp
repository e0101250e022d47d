#include "dcsrl/neural.hpp"

#include "dcsrl/error.hpp"
#include "dcsrl/util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

namespace dcsrl
{

namespace
{

bool all_finite( const std::vector<double>& v )
{
    for ( const auto x : v )
        if ( !std::isfinite( x ) )
            return false;
    return true;
}

void check_dimension( const QNetwork& q, std::size_t n )
{
    if ( n != q.d_in )
        throw UsageError( "input of size " + std::to_string( n ) + " for a network with d_in " +
                          std::to_string( q.d_in ) );
}

// pre-activations of the hidden layer
void hidden_layer( const QNetwork& q, std::span<const double> x, std::vector<double>& z )
{
    z = q.b1;
    for ( std::size_t j = 0; j < q.hidden; ++j )
    {
        const auto* row = &q.W1[ j * q.d_in ];
        double acc = 0.0;
        for ( std::size_t i = 0; i < q.d_in; ++i )
            acc += row[ i ] * x[ i ];
        z[ j ] += acc;
    }
}

void hidden_layer( const QNetwork& q, std::span<const std::uint8_t> bits, std::vector<double>& z )
{
    z = q.b1;
    for ( std::size_t i = 0; i < q.d_in; ++i )
        if ( bits[ i ] )
            for ( std::size_t j = 0; j < q.hidden; ++j )
                z[ j ] += q.W1[ j * q.d_in + i ];
}

double output( const QNetwork& q, const std::vector<double>& z )
{
    double y = q.b2;
    for ( std::size_t j = 0; j < q.hidden; ++j )
        if ( z[ j ] > 0.0 )
            y += q.W2[ j ] * z[ j ];
    return y;
}

template <typename SampleT>
double loss_impl( const QNetwork& q, std::span<const SampleT> batch )
{
    if ( batch.empty() )
        throw UsageError( "empty batch" );
    double sum = 0.0;
    for ( const auto& s : batch )
    {
        const auto e = forward( q, s.x ) - s.target;
        sum += e * e;
    }
    return sum / static_cast<double>( batch.size() );
}

template <typename SampleT>
Gradient gradient_impl( const QNetwork& q, std::span<const SampleT> batch )
{
    if ( batch.empty() )
        throw UsageError( "empty batch" );
    auto g = zero_gradient( q );
    std::vector<double> z;
    const auto scale = 2.0 / static_cast<double>( batch.size() );
    for ( const auto& s : batch )
    {
        check_dimension( q, s.x.size() );
        hidden_layer( q, s.x, z );
        const auto dy = scale * ( output( q, z ) - s.target );
        g.b2 += dy;
        for ( std::size_t j = 0; j < q.hidden; ++j )
        {
            if ( z[ j ] <= 0.0 )
                continue;
            g.W2[ j ] += dy * z[ j ];
            const auto dz = dy * q.W2[ j ];
            g.b1[ j ] += dz;
            auto* row = &g.W1[ j * q.d_in ];
            for ( std::size_t i = 0; i < q.d_in; ++i )
                if ( s.x[ i ] )
                    row[ i ] += dz * static_cast<double>( s.x[ i ] );
        }
    }
    return g;
}

} // namespace

bool QNetwork::finite() const
{
    return all_finite( W1 ) && all_finite( b1 ) && all_finite( W2 ) && std::isfinite( b2 );
}

QNetwork init_network( std::size_t d_in, std::uint64_t seed, std::size_t hidden )
{
    if ( d_in == 0 || hidden == 0 )
        throw UsageError( "network dimensions must be positive" );
    QNetwork q;
    q.d_in = d_in;
    q.hidden = hidden;
    q.W1.resize( hidden * d_in );
    q.b1.assign( hidden, 0.0 );
    q.W2.resize( hidden );
    std::mt19937_64 rng{ seed };
    const auto bound1 = std::sqrt( 6.0 / static_cast<double>( d_in + hidden ) );
    const auto bound2 = std::sqrt( 6.0 / static_cast<double>( hidden + 1 ) );
    std::uniform_real_distribution<double> u1( -bound1, bound1 );
    std::uniform_real_distribution<double> u2( -bound2, bound2 );
    for ( auto& w : q.W1 )
        w = u1( rng );
    for ( auto& w : q.W2 )
        w = u2( rng );
    return q;
}

double forward( const QNetwork& q, std::span<const double> x )
{
    check_dimension( q, x.size() );
    std::vector<double> z;
    hidden_layer( q, x, z );
    return output( q, z );
}

double forward( const QNetwork& q, std::span<const std::uint8_t> bits )
{
    check_dimension( q, bits.size() );
    std::vector<double> z;
    hidden_layer( q, bits, z );
    return output( q, z );
}

Gradient zero_gradient( const QNetwork& q )
{
    Gradient g;
    g.W1.assign( q.W1.size(), 0.0 );
    g.b1.assign( q.b1.size(), 0.0 );
    g.W2.assign( q.W2.size(), 0.0 );
    return g;
}

double mse_loss( const QNetwork& q, std::span<const Sample> batch )
{
    return loss_impl( q, batch );
}

double mse_loss( const QNetwork& q, std::span<const DenseSample> batch )
{
    return loss_impl( q, batch );
}

Gradient mse_gradient( const QNetwork& q, std::span<const Sample> batch )
{
    return gradient_impl( q, batch );
}

Gradient mse_gradient( const QNetwork& q, std::span<const DenseSample> batch )
{
    return gradient_impl( q, batch );
}

Optimizer::Optimizer( const QNetwork& q, OptimizerConfig config ) : config_{ config }, velocity_{ zero_gradient( q ) }
{
    if ( !( config.learning_rate > 0.0 ) || config.weight_decay < 0.0 || config.momentum < 0.0 )
        throw UsageError( "optimizer needs lr > 0, weight_decay >= 0 and momentum >= 0" );
}

void Optimizer::step( QNetwork& q, const Gradient& g )
{
    const auto lr = config_.learning_rate;
    const auto mu = config_.momentum;
    const auto wd = config_.weight_decay;
    auto update = [ & ]( std::vector<double>& w, const std::vector<double>& grad, std::vector<double>& v, double decay ) {
        for ( std::size_t i = 0; i < w.size(); ++i )
        {
            v[ i ] = mu * v[ i ] + grad[ i ] + decay * w[ i ];
            w[ i ] -= lr * v[ i ];
        }
    };
    update( q.W1, g.W1, velocity_.W1, wd );
    update( q.b1, g.b1, velocity_.b1, 0.0 );
    update( q.W2, g.W2, velocity_.W2, wd );
    velocity_.b2 = mu * velocity_.b2 + g.b2;
    q.b2 -= lr * velocity_.b2;
}

double batch_update( QNetwork& q, Optimizer& opt, std::span<const Sample> batch )
{
    const auto loss = mse_loss( q, batch );
    if ( !std::isfinite( loss ) )
        throw DivergenceError( "non-finite training loss" );
    auto next = q;
    auto next_opt = opt;
    next_opt.step( next, mse_gradient( q, batch ) );
    if ( !next.finite() )
        throw DivergenceError( "non-finite network weights after update" );
    q = std::move( next );
    opt = std::move( next_opt );
    return loss;
}

std::string serialize_checkpoint( const Checkpoint& c )
{
    const auto& q = c.network;
    const auto& o = c.optimizer;
    nlohmann::ordered_json doc;
    doc[ "version" ] = checkpoint_version;
    doc[ "d_in" ] = q.d_in;
    doc[ "hidden" ] = q.hidden;
    doc[ "base_labels" ] = c.schema.base_labels();
    doc[ "step" ] = c.step;
    doc[ "W1" ] = q.W1;
    doc[ "b1" ] = q.b1;
    doc[ "W2" ] = q.W2;
    doc[ "b2" ] = q.b2;
    doc[ "optimizer" ] = {
        { "learning_rate", o.config().learning_rate },
        { "weight_decay", o.config().weight_decay },
        { "momentum", o.config().momentum },
        { "velocity",
          { { "W1", o.velocity().W1 }, { "b1", o.velocity().b1 }, { "W2", o.velocity().W2 }, { "b2", o.velocity().b2 } } },
    };
    return doc.dump() + "\n";
}

void save_checkpoint( const std::filesystem::path& path, const Checkpoint& c )
{
    write_file_atomic( path, serialize_checkpoint( c ) );
}

Checkpoint parse_checkpoint( std::string_view text )
{
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse( text );
    }
    catch ( const nlohmann::json::exception& e )
    {
        throw CheckpointError( std::string( "malformed checkpoint: " ) + e.what() );
    }
    try
    {
        const auto version = doc.at( "version" ).get<int>();
        if ( version != checkpoint_version )
            throw CheckpointError( "unsupported checkpoint version " + std::to_string( version ) );

        Checkpoint c;
        auto& q = c.network;
        q.d_in = doc.at( "d_in" ).get<std::size_t>();
        q.hidden = doc.at( "hidden" ).get<std::size_t>();
        q.W1 = doc.at( "W1" ).get<std::vector<double>>();
        q.b1 = doc.at( "b1" ).get<std::vector<double>>();
        q.W2 = doc.at( "W2" ).get<std::vector<double>>();
        q.b2 = doc.at( "b2" ).get<double>();
        c.schema = FeatureSchema( doc.at( "base_labels" ).get<std::vector<std::string>>() );
        c.step = doc.at( "step" ).get<std::uint64_t>();
        if ( q.d_in == 0 || q.hidden == 0 || q.W1.size() != q.d_in * q.hidden || q.b1.size() != q.hidden ||
             q.W2.size() != q.hidden )
            throw CheckpointError( "checkpoint weight shapes are inconsistent" );
        if ( q.d_in != c.schema.dimension() )
            throw CheckpointError( "checkpoint d_in does not match its feature vocabulary" );

        const auto& o = doc.at( "optimizer" );
        OptimizerConfig config{ o.at( "learning_rate" ).get<double>(), o.at( "weight_decay" ).get<double>(),
                                o.at( "momentum" ).get<double>() };
        c.optimizer = Optimizer( q, config );
        const auto& v = o.at( "velocity" );
        auto& vel = c.optimizer.velocity();
        vel.W1 = v.at( "W1" ).get<std::vector<double>>();
        vel.b1 = v.at( "b1" ).get<std::vector<double>>();
        vel.W2 = v.at( "W2" ).get<std::vector<double>>();
        vel.b2 = v.at( "b2" ).get<double>();
        if ( vel.W1.size() != q.W1.size() || vel.b1.size() != q.b1.size() || vel.W2.size() != q.W2.size() )
            throw CheckpointError( "checkpoint optimizer state has the wrong shape" );
        return c;
    }
    catch ( const nlohmann::json::exception& e )
    {
        throw CheckpointError( std::string( "malformed checkpoint: " ) + e.what() );
    }
    catch ( const UsageError& e )
    {
        throw CheckpointError( std::string( "invalid checkpoint: " ) + e.what() );
    }
}

Checkpoint load_checkpoint( const std::filesystem::path& path )
{
    std::string text;
    try
    {
        text = read_file( path );
    }
    catch ( const Error& e )
    {
        throw CheckpointError( e.what() );
    }
    return parse_checkpoint( text );
}

Checkpoint load_checkpoint( const std::filesystem::path& path, const FeatureSchema& expected )
{
    auto c = load_checkpoint( path );
    if ( c.schema != expected )
        throw SchemaMismatch( "checkpoint " + path.string() + " was trained with a different feature vocabulary (d_in " +
                              std::to_string( c.network.d_in ) + ", expected " +
                              std::to_string( expected.dimension() ) + ")" );
    return c;
}

} // namespace dcsrl
