#include "dcsrl/exploration.hpp"
#include "dcsrl/features.hpp"
#include "dcsrl/neural.hpp"
#include "dcsrl/oracle.hpp"
#include "dcsrl/spec_io.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace dcsrl;

namespace
{

std::shared_ptr<const ControlProblem> instance( Domain d, int n, int k )
{
    return std::make_shared<const ControlProblem>( generate_instance( d, n, k ) );
}

void BM_FullCompose( benchmark::State& state )
{
    const auto p = instance( Domain::TransferLine, static_cast<int>( state.range( 0 ) ), 3 );
    std::size_t nodes = 0;
    for ( auto _ : state )
    {
        const auto g = full_compose( *p );
        nodes = g.num_nodes();
        benchmark::DoNotOptimize( nodes );
    }
    state.counters[ "states" ] = static_cast<double>( nodes );
}
BENCHMARK( BM_FullCompose )->Arg( 1 )->Arg( 2 )->Arg( 3 )->Unit( benchmark::kMillisecond );

void BM_WinningRegion( benchmark::State& state )
{
    const auto g = full_compose( *instance( Domain::TransferLine, static_cast<int>( state.range( 0 ) ), 3 ) );
    for ( auto _ : state )
        benchmark::DoNotOptimize( winning_region( g ) );
}
BENCHMARK( BM_WinningRegion )->Arg( 2 )->Arg( 3 )->Unit( benchmark::kMillisecond );

void BM_Synthesis( benchmark::State& state )
{
    const auto mode = state.range( 0 ) == 0 ? ClassificationMode::Incremental : ClassificationMode::Recompute;
    const auto p = instance( Domain::DiningPhilosophers, 3, 3 );
    SynthesisOptions o;
    o.build_controller = false;
    o.exploration.mode = mode;
    std::size_t expanded = 0;
    for ( auto _ : state )
    {
        BfsPolicy bfs;
        expanded = run_synthesis( p, bfs, o ).expanded;
    }
    state.counters[ "expanded" ] = static_cast<double>( expanded );
    state.SetLabel( state.range( 0 ) == 0 ? "incremental" : "recompute" );
}
BENCHMARK( BM_Synthesis )->Arg( 0 )->Arg( 1 )->Unit( benchmark::kMillisecond );

void BM_FrontierFeatures( benchmark::State& state )
{
    const auto p = instance( Domain::TransferLine, 3, 3 );
    const FeatureExtractor fx( *p, build_schema( *p ) );
    Exploration e( p );
    std::mt19937_64 rng( 1 );
    for ( int i = 0; i < 30 && !e.done(); ++i )
        e.expand( std::uniform_int_distribution<std::size_t>( 0, e.frontier().size() - 1 )( rng ) );
    for ( auto _ : state )
        benchmark::DoNotOptimize( fx.frontier_features( e ) );
    state.counters[ "frontier" ] = static_cast<double>( e.frontier().size() );
}
BENCHMARK( BM_FrontierFeatures );

void BM_Forward( benchmark::State& state )
{
    const auto q = init_network( 2 * 10 + 17, 1 );
    std::mt19937_64 rng( 2 );
    std::bernoulli_distribution bit( 0.3 );
    std::vector<std::uint8_t> x( q.d_in );
    for ( auto& v : x )
        v = bit( rng ) ? 1 : 0;
    for ( auto _ : state )
        benchmark::DoNotOptimize( forward( q, std::span<const std::uint8_t>( x ) ) );
}
BENCHMARK( BM_Forward );

void BM_BatchUpdate( benchmark::State& state )
{
    auto q = init_network( 37, 1 );
    Optimizer opt( q, {} );
    std::mt19937_64 rng( 3 );
    std::bernoulli_distribution bit( 0.3 );
    std::vector<std::vector<std::uint8_t>> xs( 10, std::vector<std::uint8_t>( q.d_in ) );
    std::vector<Sample> batch;
    for ( auto& x : xs )
    {
        for ( auto& v : x )
            v = bit( rng ) ? 1 : 0;
        batch.push_back( { x, -5.0 } );
    }
    for ( auto _ : state )
        benchmark::DoNotOptimize( batch_update( q, opt, batch ) );
}
BENCHMARK( BM_BatchUpdate );

} // namespace

BENCHMARK_MAIN();
