#include "dcsrl/error.hpp"
#include "dcsrl/exploration.hpp"
#include "dcsrl/spec_io.hpp"

#include "test_oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

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

std::shared_ptr<const ControlProblem> marked_deadlock()
{
    ProblemBuilder b( "marked_deadlock" );
    b.label( "c", true );
    b.component( "T", 2 ).transition( 0, "c", 1 ).mark( 1 );
    return std::make_shared<const ControlProblem>( std::move( b ).build() );
}

std::vector<std::shared_ptr<const ControlProblem>> corpus( std::size_t fuzz )
{
    auto out = ref::fuzz_corpus( fuzz );
    for ( const auto& p : ref::domain_corpus() )
        out.push_back( p );
    return out;
}

bool subset( const std::vector<StateId>& a, const std::vector<StateId>& b )
{
    return std::includes( b.begin(), b.end(), a.begin(), a.end() );
}

// Oracle classification of every discovered state, keyed by composite state.
Classification oracle_classification( const Exploration& e )
{
    const auto g = full_compose( e.problem() );
    const auto w = winning_region( g );
    Classification out;
    for ( StateId s = 0; s < e.num_states(); ++s )
    {
        if ( !e.state( s ).discovered )
            continue;
        const auto n = *g.find( e.state( s ).composite );
        ( w[ n ] ? out.winning : out.losing ).push_back( s );
    }
    return out;
}

} // namespace

TEST( Exploration, InitialFrontier )
{
    const Exploration e( self_loop() );
    ASSERT_EQ( e.frontier().size(), 1U );
    const auto& t = e.transition( e.frontier()[ 0 ] );
    EXPECT_EQ( t.source, 0U );
    EXPECT_EQ( t.insertion_index, 0U );
    EXPECT_EQ( e.verdict(), VerdictKind::Unknown );
    EXPECT_EQ( current_classification( e ), Classification{} );
    EXPECT_EQ( classify_partial( e ), Classification{} );
}

TEST( Exploration, InitialDeadlockLosesImmediately )
{
    ProblemBuilder b( "dead" );
    b.label( "c", true );
    b.component( "T", 2 ).transition( 1, "c", 0 ).mark( 1 );
    const Exploration e( std::make_shared<const ControlProblem>( std::move( b ).build() ) );
    EXPECT_TRUE( e.frontier().empty() );
    EXPECT_EQ( e.verdict(), VerdictKind::Losing );
}

TEST( Exploration, FrontierOfTwoComponents )
{
    ProblemBuilder b( "pair" );
    b.label( "a", true ).label( "b", false ).label( "s", true );
    b.component( "T", 2 ).transition( 0, "a", 1 ).transition( 0, "s", 1 );
    b.component( "Q", 2 ).transition( 0, "b", 1 ).transition( 0, "s", 1 );
    const Exploration e( std::make_shared<const ControlProblem>( std::move( b ).build() ) );
    EXPECT_EQ( e.frontier().size(), 3U );
}

TEST( Exploration, ExpandDiscoversTarget )
{
    Exploration e( self_loop() );
    e.expand( 0 );
    ASSERT_EQ( e.frontier().size(), 1U );
    const auto& t = e.transition( e.frontier()[ 0 ] );
    EXPECT_EQ( t.source, 1U );
    EXPECT_EQ( t.target, 1U );
    EXPECT_TRUE( e.state( 0 ).discovered );
    EXPECT_TRUE( e.state( 1 ).discovered );
    EXPECT_TRUE( e.phase_flags().marked_found );
    EXPECT_FALSE( e.phase_flags().winning_set_nonempty );
    EXPECT_EQ( e.last_expanded(), std::optional<TransitionId>{ 0U } );
}

TEST( Exploration, SelfLoopWins )
{
    Exploration e( self_loop() );
    e.expand( 0 );
    e.expand( 0 );
    EXPECT_EQ( e.verdict(), VerdictKind::Winning );
    EXPECT_EQ( current_classification( e ).winning, ( std::vector<StateId>{ 0, 1 } ) );
    EXPECT_TRUE( e.phase_flags().winning_set_nonempty );
    EXPECT_TRUE( e.phase_flags().marked_cycle_closed );
    EXPECT_THROW( e.expand( 0 ), UsageError );
}

TEST( Exploration, MarkedDeadlockLoses )
{
    Exploration e( marked_deadlock() );
    e.expand( 0 );
    EXPECT_EQ( e.verdict(), VerdictKind::Losing );
    EXPECT_EQ( current_classification( e ).losing, ( std::vector<StateId>{ 0, 1 } ) );
}

TEST( Exploration, BadIndexIsUsageError )
{
    Exploration e( self_loop() );
    EXPECT_THROW( e.expand( 1 ), UsageError );
}

TEST( Exploration, IncrementalMatchesRecomputeAtEveryStep )
{
    std::mt19937_64 rng( 7 );
    for ( const auto& p : corpus( 150 ) )
    {
        // recomputation is quadratic; the largest domain instances add nothing
        if ( full_compose( *p ).num_edges() > 1500 )
            continue;
        Exploration inc( p, { ClassificationMode::Incremental, false } );
        Exploration rec( p, { ClassificationMode::Recompute, false } );
        while ( !inc.frontier().empty() )
        {
            ASSERT_EQ( current_classification( inc ), classify_partial( inc ) ) << p->name();
            ASSERT_EQ( current_classification( inc ), current_classification( rec ) ) << p->name();
            ASSERT_EQ( inc.phase_flags(), rec.phase_flags() ) << p->name();
            const auto i = std::uniform_int_distribution<std::size_t>( 0, inc.frontier().size() - 1 )( rng );
            inc.expand( i );
            rec.expand( i );
        }
        ASSERT_EQ( current_classification( inc ), classify_partial( inc ) ) << p->name();
        ASSERT_EQ( current_classification( inc ), current_classification( rec ) ) << p->name();
    }
}

TEST( Exploration, MonotoneAndStable )
{
    std::mt19937_64 rng( 11 );
    for ( const auto& p : corpus( 150 ) )
    {
        Exploration e( p, { ClassificationMode::Incremental, false } );
        auto prev = current_classification( e );
        std::optional<VerdictKind> first;
        while ( !e.frontier().empty() )
        {
            e.expand( std::uniform_int_distribution<std::size_t>( 0, e.frontier().size() - 1 )( rng ) );
            const auto now = current_classification( e );
            ASSERT_TRUE( subset( prev.winning, now.winning ) ) << p->name();
            ASSERT_TRUE( subset( prev.losing, now.losing ) ) << p->name();
            if ( !first && e.done() )
                first = e.verdict();
            if ( first )
                ASSERT_EQ( e.verdict(), *first ) << p->name();
            prev = now;
        }
    }
}

TEST( Exploration, CompleteExplorationMatchesOracle )
{
    for ( const auto& p : corpus( 150 ) )
    {
        Exploration e( p, { ClassificationMode::Incremental, false } );
        while ( !e.frontier().empty() )
            e.expand( 0 );
        const auto c = current_classification( e );
        EXPECT_EQ( c, oracle_classification( e ) ) << p->name();
        EXPECT_EQ( c.winning.size() + c.losing.size(), full_compose( *p ).num_nodes() ) << p->name();
        EXPECT_EQ( e.expanded(), full_compose( *p ).num_edges() ) << p->name();
    }
}

TEST( Synthesis, AnyPolicySolvesSelfLoopInTwo )
{
    RandomPolicy r( 5 );
    BfsPolicy b;
    LifoPolicy l;
    for ( ExplorationPolicy* policy : std::initializer_list<ExplorationPolicy*>{ &r, &b, &l } )
    {
        const auto res = run_synthesis( self_loop(), *policy );
        EXPECT_EQ( res.verdict, VerdictKind::Winning );
        EXPECT_EQ( res.expanded, 2U );
        EXPECT_TRUE( res.solved );
    }
}

TEST( Synthesis, ZeroBudgetIsUnsolved )
{
    BfsPolicy b;
    SynthesisOptions o;
    o.budget = 0;
    const auto res =
        run_synthesis( std::make_shared<const ControlProblem>( generate_instance( Domain::TransferLine, 2, 2 ) ), b, o );
    EXPECT_FALSE( res.solved );
    EXPECT_EQ( res.expanded, 0U );
    EXPECT_EQ( res.verdict, VerdictKind::Unknown );
}

TEST( Synthesis, ZeroTimeoutIsUnsolved )
{
    BfsPolicy b;
    SynthesisOptions o;
    o.timeout = std::chrono::duration<double>( 0.0 );
    const auto res =
        run_synthesis( std::make_shared<const ControlProblem>( generate_instance( Domain::TransferLine, 2, 2 ) ), b, o );
    EXPECT_FALSE( res.solved );
}

TEST( Synthesis, CraftedGateRandomLoses )
{
    RandomPolicy r( 1 );
    const auto res =
        run_synthesis( std::make_shared<const ControlProblem>( generate_instance( Domain::CraftedGate, 3, 2 ) ), r );
    EXPECT_EQ( res.verdict, VerdictKind::Losing );
}

TEST( Synthesis, VerdictInvariantAcrossPolicies )
{
    for ( const auto& p : corpus( 100 ) )
    {
        const auto expected = monolithic_synthesis( *p ).kind;
        std::vector<std::unique_ptr<ExplorationPolicy>> policies;
        for ( std::uint64_t s = 0; s < 10; ++s )
            policies.push_back( std::make_unique<RandomPolicy>( s ) );
        policies.push_back( std::make_unique<BfsPolicy>() );
        policies.push_back( std::make_unique<LifoPolicy>() );
        const auto total = full_compose( *p ).num_edges();
        for ( auto& policy : policies )
        {
            const auto res = run_synthesis( p, *policy );
            EXPECT_EQ( res.verdict, expected ) << p->name() << " " << policy->name();
            EXPECT_LE( res.expanded, total );
        }
    }
}

TEST( Synthesis, DeterministicForFixedSeed )
{
    const auto p = std::make_shared<const ControlProblem>( generate_instance( Domain::DiningPhilosophers, 2, 2 ) );
    RandomPolicy a( 42 ), b( 42 );
    const auto ra = run_synthesis( p, a );
    const auto rb = run_synthesis( p, b );
    EXPECT_EQ( ra.expanded, rb.expanded );
    EXPECT_EQ( ra.controller, rb.controller );
}

TEST( Controller, ValidOnCorpus )
{
    std::size_t winning = 0;
    for ( const auto& p : corpus( 150 ) )
    {
        RandomPolicy r( 3 );
        const auto res = run_synthesis( p, r );
        if ( res.verdict != VerdictKind::Winning )
            continue;
        ++winning;
        ASSERT_TRUE( res.controller.has_value() );
        EXPECT_TRUE( res.controller->is_director() ) << p->name();
        EXPECT_TRUE( validate_nonblocking( full_compose( *p ), *res.controller ) ) << p->name();
    }
    EXPECT_GT( winning, 20U );
}

TEST( Controller, SelfLoopChoices )
{
    Exploration e( self_loop() );
    e.expand( 0 );
    e.expand( 0 );
    const auto c = build_controller( e );
    for ( StateId s = 0; s < 2; ++s )
    {
        const auto ch = c.choice( e.state( s ).composite );
        ASSERT_EQ( ch.size(), 1U );
        EXPECT_EQ( e.problem().label( ch[ 0 ] ).name, "c" );
    }
}

TEST( Controller, UncontrollableOnlyStateHasNoChoice )
{
    ProblemBuilder b( "u" );
    b.label( "c", true ).label( "u", false );
    b.component( "T", 2 ).transition( 0, "u", 1 ).transition( 1, "c", 0 ).mark( 1 );
    const auto p = std::make_shared<const ControlProblem>( std::move( b ).build() );
    BfsPolicy policy;
    const auto res = run_synthesis( p, policy );
    ASSERT_EQ( res.verdict, VerdictKind::Winning );
    const Exploration e( p );
    EXPECT_TRUE( res.controller->choice( e.state( 0 ).composite ).empty() );
}

TEST( Controller, RefusedBeforeWinning )
{
    const Exploration e( self_loop() );
    EXPECT_THROW( (void)build_controller( e ), UsageError );
}
