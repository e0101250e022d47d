#include "dcsrl/error.hpp"
#include "dcsrl/rl.hpp"
#include "dcsrl/spec_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dcsrl;

namespace
{

std::shared_ptr<const ControlProblem> self_loop()
{
    ProblemBuilder b( "self_loop" );
    b.label( "c", true );
    b.component( "T", 2 ).transition( 0, "c", 1 ).transition( 1, "c", 1 ).mark( 1 );
    return std::make_shared<const ControlProblem>( std::move( b ).build() );
}

// Q(x) = b2 + sum_i x_i * w_i with a single identity-like hidden unit per input.
QNetwork linear( std::vector<double> w, double bias )
{
    QNetwork q;
    q.d_in = w.size();
    q.hidden = w.size();
    q.W1.assign( q.d_in * q.hidden, 0.0 );
    for ( std::size_t i = 0; i < q.d_in; ++i )
        q.W1[ i * q.d_in + i ] = 1.0;
    q.b1.assign( q.hidden, 0.0 );
    q.W2 = std::move( w );
    q.b2 = bias;
    return q;
}

std::string slurp( const std::filesystem::path& p )
{
    std::ifstream in( p, std::ios::binary );
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Experience with_next( std::vector<FeatureVector> next )
{
    Experience e;
    e.taken = { 0, 0 };
    e.next_frontier = std::move( next );
    return e;
}

} // namespace

TEST( Epsilon, LinearScheduleWithDefaults )
{
    const TrainConfig cfg;
    EXPECT_DOUBLE_EQ( epsilon( 0, cfg ), 1.0 );
    EXPECT_NEAR( epsilon( 125'000, cfg ), 0.505, 1e-12 );
    EXPECT_DOUBLE_EQ( epsilon( 250'000, cfg ), 0.01 );
    EXPECT_DOUBLE_EQ( epsilon( 900'000, cfg ), 0.01 );
}

TEST( TdTarget, TerminalIsMinusOne )
{
    Experience e;
    e.taken = { 1, 0 };
    e.terminal = true;
    EXPECT_EQ( td_target( linear( { 5, 5 }, 7 ), e ), -1.0 );
}

TEST( TdTarget, BootstrapsOnBestSuccessor )
{
    // Q({1,0}) = -3, Q({0,1}) = -5
    const auto q = linear( { 0, -2 }, -3 );
    EXPECT_DOUBLE_EQ( td_target( q, with_next( { { 1, 0 }, { 0, 1 } } ) ), -4.0 );
}

TEST( Greedy, PicksMaximumWithLowestIndexOnTies )
{
    const auto q = linear( { 1, 2 }, 0 );
    EXPECT_EQ( greedy_action( q, { { 1, 0 }, { 0, 1 }, { 1, 0 } } ), 1U );
    EXPECT_EQ( greedy_action( q, { { 1, 0 }, { 1, 0 } } ), 0U );
    EXPECT_THROW( (void)greedy_action( q, std::vector<FeatureVector>{} ), UsageError );
}

TEST( Replay, EvictsOldestFirst )
{
    ReplayBuffer b( 3 );
    for ( std::uint8_t i = 0; i < 5; ++i )
    {
        Experience e;
        e.taken = { i };
        b.push( std::move( e ) );
    }
    EXPECT_TRUE( b.full() );
    EXPECT_EQ( b.size(), 3U );
    EXPECT_EQ( b.at( 0 ).taken[ 0 ], 2 );
    EXPECT_EQ( b.at( 2 ).taken[ 0 ], 4 );
}

TEST( Replay, SampleIsDistinctAndUniform )
{
    ReplayBuffer b( 20 );
    for ( std::uint8_t i = 0; i < 20; ++i )
    {
        Experience e;
        e.taken = { i };
        b.push( std::move( e ) );
    }
    std::mt19937_64 rng( 9 );
    std::vector<double> counts( 20, 0.0 );
    constexpr int rounds = 20'000;
    for ( int r = 0; r < rounds; ++r )
    {
        auto s = b.sample( rng, r % 2 == 0 ? 5 : 15 );
        std::sort( s.begin(), s.end() );
        ASSERT_TRUE( std::adjacent_find( s.begin(), s.end() ) == s.end() );
        for ( const auto i : s )
            counts[ i ] += 1;
    }
    const double expected = rounds * 10.0 / 20.0;
    double chi2 = 0.0;
    for ( const auto c : counts )
        chi2 += ( c - expected ) * ( c - expected ) / expected;
    // 19 degrees of freedom, p = 0.001 critical value
    EXPECT_LT( chi2, 43.82 );
    EXPECT_EQ( b.sample( rng, 50 ).size(), 20U );
}

TEST( Env, SelfLoopEpisodeRewardIsMinusTwo )
{
    SynthesisEnv env( self_loop() );
    EXPECT_EQ( env.step( 0 ), -1.0 );
    EXPECT_FALSE( env.terminal() );
    EXPECT_EQ( env.step( 0 ), -1.0 );
    EXPECT_TRUE( env.terminal() );
    EXPECT_EQ( env.accumulated_reward(), -2.0 );
    EXPECT_THROW( (void)env.step( 0 ), UsageError );
    env.reset();
    EXPECT_EQ( env.accumulated_reward(), 0.0 );
}

TEST( Env, MatchesExplorationStepByStep )
{
    const auto p = std::make_shared<const ControlProblem>( generate_instance( Domain::TransferLine, 2, 1 ) );
    SynthesisEnv env( p );
    Exploration e( p );
    std::mt19937_64 rng( 4 );
    while ( !e.done() )
    {
        const auto i = std::uniform_int_distribution<std::size_t>( 0, e.frontier().size() - 1 )( rng );
        e.expand( i );
        (void)env.step( i );
        ASSERT_EQ( current_classification( e ), current_classification( env.exploration() ) );
    }
    EXPECT_TRUE( env.terminal() );
    EXPECT_EQ( env.accumulated_reward(), -static_cast<double>( e.expanded() ) );
}

TEST( Agent, RejectsWrongDimension )
{
    const auto p = self_loop();
    EXPECT_THROW( AgentPolicy( init_network( 5, 0 ), *p, build_schema( *p ) ), SchemaMismatch );
}

TEST( Config, Validation )
{
    TrainConfig cfg;
    EXPECT_NO_THROW( cfg.validate() );
    cfg.epsilon_end = 1.5;
    EXPECT_THROW( cfg.validate(), UsageError );
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW( cfg.validate(), UsageError );
}

TEST( Train, DeterministicAndCheckpointed )
{
    const auto root = std::filesystem::temp_directory_path() / "dcsrl_rl_train";
    std::filesystem::remove_all( root );
    const auto p = std::make_shared<const ControlProblem>( generate_instance( Domain::TransferLine, 1, 1 ) );
    TrainConfig cfg;
    cfg.total_steps = 2000;
    cfg.epsilon_decay_steps = 1000;
    cfg.checkpoint_every = 700;
    cfg.target_reset_every = 300;
    cfg.buffer_capacity = 500;
    cfg.prefill_min_steps = 100;
    cfg.early_stop = false;
    cfg.seed = 12;
    const auto a = train( p, cfg, root / "a" );
    const auto b = train( p, cfg, root / "b" );
    EXPECT_EQ( a.steps, 2000U );
    ASSERT_EQ( a.checkpoints.size(), 4U ); // 0, 700, 1400 and the final 2000
    EXPECT_EQ( a.checkpoints.front().filename(), checkpoint_file_name( 0 ) );
    EXPECT_EQ( a.checkpoints.back().filename(), checkpoint_file_name( 2000 ) );
    EXPECT_EQ( a.episodes, b.episodes );
    EXPECT_EQ( a.network, b.network );
    EXPECT_EQ( slurp( root / "a" / "training_log.csv" ), slurp( root / "b" / "training_log.csv" ) );
    for ( std::size_t i = 0; i < a.checkpoints.size(); ++i )
        EXPECT_EQ( slurp( a.checkpoints[ i ] ), slurp( b.checkpoints[ i ] ) );
    EXPECT_FALSE( a.episodes.empty() );
    EXPECT_EQ( load_checkpoint( a.checkpoints.back() ).network, a.network );
    std::filesystem::remove_all( root );
}

TEST( Train, ZeroStepsOnlyPrefills )
{
    const auto dir = std::filesystem::temp_directory_path() / "dcsrl_rl_zero";
    std::filesystem::remove_all( dir );
    TrainConfig cfg;
    cfg.total_steps = 0;
    cfg.early_stop = false;
    const auto r = train( self_loop(), cfg, dir );
    EXPECT_EQ( r.steps, 0U );
    ASSERT_EQ( r.checkpoints.size(), 1U );
    EXPECT_EQ( r.checkpoints[ 0 ].filename(), checkpoint_file_name( 0 ) );
    EXPECT_GE( r.prefill_steps, 1000U );
    std::filesystem::remove_all( dir );
}

TEST( Train, LogFormat )
{
    const std::vector<EpisodeRecord> eps{ { 0, 12, 12, 1.0 }, { 1, 20, 8, 0.5 } };
    const auto log = format_training_log( eps );
    EXPECT_EQ( log.substr( 0, log.find( '\n' ) ), "episode,end_step,expansions,epsilon" );
    EXPECT_EQ( std::count( log.begin(), log.end(), '\n' ), 3 );
}
