#include "dcsrl/rl.hpp"

#include "dcsrl/error.hpp"
#include "dcsrl/util.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace dcsrl
{

ReplayBuffer::ReplayBuffer( std::size_t capacity ) : capacity_{ capacity }
{
    if ( capacity == 0 )
        throw UsageError( "replay buffer capacity must be positive" );
    data_.reserve( capacity );
}

void ReplayBuffer::push( Experience e )
{
    if ( data_.size() < capacity_ )
    {
        data_.push_back( std::move( e ) );
        return;
    }
    data_[ head_ ] = std::move( e );
    head_ = ( head_ + 1 ) % capacity_;
}

const Experience& ReplayBuffer::at( std::size_t i ) const
{
    if ( i >= data_.size() )
        throw UsageError( "replay buffer index out of range" );
    return data_[ ( head_ + i ) % data_.size() ];
}

std::vector<std::size_t> ReplayBuffer::sample( std::mt19937_64& rng, std::size_t n ) const
{
    n = std::min( n, data_.size() );
    std::vector<std::size_t> picked;
    picked.reserve( n );
    if ( n == 0 )
        return picked;
    std::uniform_int_distribution<std::size_t> pick( 0, data_.size() - 1 );
    if ( 2 * n > data_.size() )
    {
        std::vector<std::size_t> all( data_.size() );
        for ( std::size_t i = 0; i < all.size(); ++i )
            all[ i ] = i;
        std::shuffle( all.begin(), all.end(), rng );
        all.resize( n );
        return all;
    }
    while ( picked.size() < n )
    {
        const auto i = pick( rng );
        if ( std::find( picked.begin(), picked.end(), i ) == picked.end() )
            picked.push_back( i );
    }
    return picked;
}

void TrainConfig::validate() const
{
    if ( epsilon_decay_steps == 0 || batch_size == 0 || buffer_capacity == 0 || target_reset_every == 0 ||
         checkpoint_every == 0 || hidden == 0 )
        throw UsageError( "training counts must be positive" );
    if ( !( 0.0 <= epsilon_end && epsilon_end <= epsilon_start && epsilon_start <= 1.0 ) )
        throw UsageError( "epsilon schedule must satisfy 0 <= end <= start <= 1" );
    if ( !( optimizer.learning_rate > 0.0 ) || optimizer.weight_decay < 0.0 || optimizer.momentum < 0.0 )
        throw UsageError( "optimizer needs lr > 0, weight_decay >= 0 and momentum >= 0" );
}

double epsilon( std::uint64_t step, const TrainConfig& cfg )
{
    if ( step >= cfg.epsilon_decay_steps )
        return cfg.epsilon_end;
    const auto f = static_cast<double>( step ) / static_cast<double>( cfg.epsilon_decay_steps );
    return cfg.epsilon_start + f * ( cfg.epsilon_end - cfg.epsilon_start );
}

double td_target( const QNetwork& target, const Experience& e )
{
    if ( e.terminal || e.next_frontier.empty() )
        return -1.0;
    auto best = forward( target, e.next_frontier.front() );
    for ( std::size_t i = 1; i < e.next_frontier.size(); ++i )
        best = std::max( best, forward( target, e.next_frontier[ i ] ) );
    return -1.0 + best;
}

std::size_t greedy_action( const QNetwork& q, const std::vector<FeatureVector>& candidates )
{
    if ( candidates.empty() )
        throw UsageError( "greedy action over an empty frontier" );
    std::size_t best = 0;
    auto best_q = forward( q, candidates[ 0 ] );
    for ( std::size_t i = 1; i < candidates.size(); ++i )
    {
        const auto v = forward( q, candidates[ i ] );
        if ( v > best_q )
        {
            best = i;
            best_q = v;
        }
    }
    return best;
}

std::size_t greedy_action( const QNetwork& q, const Exploration& e, const FeatureExtractor& fx )
{
    return greedy_action( q, fx.frontier_features( e ) );
}

SynthesisEnv::SynthesisEnv( std::shared_ptr<const ControlProblem> problem, ExplorationOptions options )
    : problem_{ std::move( problem ) }, options_{ options }
{
    reset();
}

void SynthesisEnv::reset()
{
    exploration_.emplace( problem_, options_ );
}

double SynthesisEnv::step( std::size_t index )
{
    exploration_->expand( index );
    return -1.0;
}

AgentPolicy::AgentPolicy( QNetwork q, const ControlProblem& p, const FeatureSchema& schema, FeatureOptions options )
    : q_{ std::move( q ) }, fx_{ p, schema, options }
{
    if ( q_.d_in != schema.dimension() )
        throw SchemaMismatch( "network input size " + std::to_string( q_.d_in ) + " does not match feature dimension " +
                              std::to_string( schema.dimension() ) );
}

std::size_t AgentPolicy::select( const Exploration& e )
{
    const auto frontier = e.frontier();
    if ( frontier.empty() )
        throw UsageError( "greedy action over an empty frontier" );
    std::size_t best = 0;
    double best_q = 0.0;
    std::string key;
    for ( std::size_t i = 0; i < frontier.size(); ++i )
    {
        fx_.compute( e, frontier[ i ], scratch_ );
        key.assign( scratch_.begin(), scratch_.end() );
        auto it = cache_.find( key );
        if ( it == cache_.end() )
            it = cache_.emplace( key, forward( q_, scratch_ ) ).first;
        if ( i == 0 || it->second > best_q )
        {
            best = i;
            best_q = it->second;
        }
    }
    return best;
}

std::string checkpoint_file_name( std::uint64_t step )
{
    char buf[ 48 ];
    std::snprintf( buf, sizeof buf, "checkpoint_%08llu.json", static_cast<unsigned long long>( step ) );
    return buf;
}

std::string format_training_log( const std::vector<EpisodeRecord>& episodes )
{
    std::string out = "episode,end_step,expansions,epsilon\n";
    for ( const auto& r : episodes )
        out += std::to_string( r.episode ) + "," + std::to_string( r.end_step ) + "," + std::to_string( r.expansions ) +
               "," + format_double( r.epsilon ) + "\n";
    return out;
}

TrainResult train( std::shared_ptr<const ControlProblem> problem, const TrainConfig& cfg,
                   const std::filesystem::path& out_dir )
{
    cfg.validate();
    if ( !problem )
        throw UsageError( "train needs a problem" );

    const auto schema = build_schema( *problem );
    const FeatureExtractor fx( *problem, schema, cfg.features );

    // independent streams: initial weights, behaviour, replay sampling
    std::seed_seq seq{ static_cast<std::uint32_t>( cfg.seed ), static_cast<std::uint32_t>( cfg.seed >> 32 ) };
    std::array<std::uint32_t, 3> seeds{};
    seq.generate( seeds.begin(), seeds.end() );
    std::mt19937_64 act_rng{ seeds[ 1 ] };
    std::mt19937_64 replay_rng{ seeds[ 2 ] };

    auto q = init_network( schema.dimension(), seeds[ 0 ], cfg.hidden );
    auto target = q;
    Optimizer opt( q, cfg.optimizer );
    ReplayBuffer buffer( cfg.buffer_capacity );
    SynthesisEnv env( problem );

    TrainResult result;
    const auto checkpoint_dir = out_dir / "checkpoints";
    const auto log_path = out_dir / "training_log.csv";
    std::filesystem::create_directories( checkpoint_dir );

    auto save = [ & ]( std::uint64_t step ) {
        const auto path = checkpoint_dir / checkpoint_file_name( step );
        save_checkpoint( path, Checkpoint{ q, opt, schema, step } );
        result.checkpoints.push_back( path );
        write_file_atomic( log_path, format_training_log( result.episodes ) );
    };

    auto random_index = [ & ]( std::size_t n ) { return std::uniform_int_distribution<std::size_t>( 0, n - 1 )( act_rng ); };

    // prefill with a random policy
    {
        std::size_t episodes = 0;
        auto features = fx.frontier_features( env.exploration() );
        while ( !buffer.full() && ( episodes == 0 || result.prefill_steps < cfg.prefill_min_steps ) )
        {
            if ( env.terminal() )
            {
                // a problem decided before any expansion has nothing to learn
                ++episodes;
                env.reset();
                features = fx.frontier_features( env.exploration() );
                if ( env.terminal() )
                    break;
                continue;
            }
            const auto a = random_index( features.size() );
            Experience x;
            x.taken = std::move( features[ a ] );
            env.step( a );
            x.terminal = env.terminal();
            if ( !x.terminal )
                x.next_frontier = fx.frontier_features( env.exploration() );
            features = x.next_frontier;
            buffer.push( std::move( x ) );
            ++result.prefill_steps;
            if ( env.terminal() )
            {
                ++episodes;
                env.reset();
                features = fx.frontier_features( env.exploration() );
            }
        }
    }

    env.reset();
    save( 0 );
    if ( env.terminal() )
    {
        result.network = q;
        return result;
    }

    std::optional<std::uint64_t> best_expansions;
    std::uint64_t best_step = 0;
    auto features = fx.frontier_features( env.exploration() );
    std::vector<Sample> batch;
    std::uint64_t step = 0;

    auto keep_going = [ & ] {
        if ( step < cfg.total_steps )
            return true;
        if ( !cfg.early_stop || !best_expansions )
            return false;
        // stop once the last improvement is older than a third of the run
        return 3 * ( step - best_step ) < step;
    };

    try
    {
        while ( keep_going() )
        {
            const auto eps = epsilon( step, cfg );
            const auto explore = std::uniform_real_distribution<double>( 0.0, 1.0 )( act_rng ) < eps;
            const auto a = explore ? random_index( features.size() ) : greedy_action( q, features );

            Experience x;
            x.taken = std::move( features[ a ] );
            env.step( a );
            x.terminal = env.terminal();
            if ( !x.terminal )
                x.next_frontier = fx.frontier_features( env.exploration() );
            features = x.next_frontier;
            buffer.push( std::move( x ) );

            batch.clear();
            std::vector<double> targets;
            const auto picked = buffer.sample( replay_rng, cfg.batch_size );
            targets.reserve( picked.size() );
            for ( const auto i : picked )
                targets.push_back( td_target( target, buffer.at( i ) ) );
            for ( std::size_t j = 0; j < picked.size(); ++j )
                batch.push_back( { buffer.at( picked[ j ] ).taken, targets[ j ] } );
            batch_update( q, opt, batch );
            ++step;

            if ( step % cfg.target_reset_every == 0 )
                target = q;

            if ( env.terminal() )
            {
                const auto expansions = static_cast<std::uint64_t>( env.exploration().expanded() );
                result.episodes.push_back( { result.episodes.size(), step, expansions, eps } );
                if ( !best_expansions || expansions < *best_expansions )
                {
                    best_expansions = expansions;
                    best_step = step;
                }
                env.reset();
                features = fx.frontier_features( env.exploration() );
            }

            if ( step % cfg.checkpoint_every == 0 )
                save( step );
        }
    }
    catch ( const DivergenceError& )
    {
        result.steps = step;
        write_file_atomic( log_path, format_training_log( result.episodes ) );
        throw;
    }

    result.steps = step;
    if ( step % cfg.checkpoint_every != 0 )
        save( step );
    else
        write_file_atomic( log_path, format_training_log( result.episodes ) );
    result.network = q;
    return result;
}

} // namespace dcsrl
