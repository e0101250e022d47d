// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Arguments select a subset of criteria by number.

#include "dcsrl/error.hpp"
#include "dcsrl/exploration.hpp"
#include "dcsrl/features.hpp"
#include "dcsrl/harness.hpp"
#include "dcsrl/neural.hpp"
#include "dcsrl/oracle.hpp"
#include "dcsrl/rl.hpp"
#include "dcsrl/spec_io.hpp"

#include "test_oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

using namespace dcsrl;
namespace fs = std::filesystem;

namespace
{

// Pinned tolerances.
constexpr std::size_t fuzz_count = 200;
constexpr std::size_t max_corpus_states = 20'000;
constexpr double gradient_h = 1e-4;
constexpr double gradient_tol = 1e-3;
constexpr double gradient_seconds = 10.0;
constexpr double overfit_q_tol = 0.5;
constexpr double overfit_seconds = 300.0;
constexpr double trend_ratio = 0.8;
constexpr std::uint64_t trend_steps = 100'000;

const fs::path work = fs::temp_directory_path() / "dcsrl_acceptance";

struct Outcome
{
    bool pass = true;
    std::string detail;
};

std::string slurp( const fs::path& p )
{
    std::ifstream in( p, std::ios::binary );
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Relative paths and contents of every regular file under `root`.
std::map<std::string, std::string> tree( const fs::path& root )
{
    std::map<std::string, std::string> out;
    for ( const auto& entry : fs::recursive_directory_iterator( root ) )
        if ( entry.is_regular_file() )
            out[ fs::relative( entry.path(), root ).string() ] = slurp( entry.path() );
    return out;
}

std::vector<std::shared_ptr<const ControlProblem>> corpus()
{
    auto out = ref::fuzz_corpus( fuzz_count );
    for ( const auto& p : ref::domain_corpus() )
        if ( full_compose( *p ).num_nodes() <= max_corpus_states )
            out.push_back( p );
    return out;
}

const std::vector<std::shared_ptr<const ControlProblem>>& shared_corpus()
{
    static const auto c = corpus();
    return c;
}

std::string mismatch( const std::string& what, const ControlProblem& p )
{
    return what + " on " + p.name();
}

// 1
Outcome oracle_equivalence()
{
    std::size_t runs = 0;
    for ( const auto& p : shared_corpus() )
    {
        const auto expected = monolithic_synthesis( *p ).kind;
        std::vector<std::unique_ptr<ExplorationPolicy>> policies;
        for ( std::uint64_t s = 0; s < 10; ++s )
            policies.push_back( std::make_unique<RandomPolicy>( s ) );
        policies.push_back( std::make_unique<BfsPolicy>() );
        policies.push_back( std::make_unique<LifoPolicy>() );
        for ( auto& policy : policies )
        {
            SynthesisOptions o;
            o.build_controller = false;
            const auto r = run_synthesis( p, *policy, o );
            ++runs;
            if ( r.verdict != expected )
                return { false, mismatch( policy->name() + " verdict differs", *p ) };
        }
    }
    return { true, std::to_string( shared_corpus().size() ) + " problems, " + std::to_string( runs ) + " runs" };
}

// Oracle classification of every discovered state.
Classification oracle_classification( const Exploration& e, const ExplicitGraph& g, const NodeSet& w )
{
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

// 2
Outcome full_exploration()
{
    std::mt19937_64 rng( 2 );
    for ( const auto& p : shared_corpus() )
    {
        const auto g = full_compose( *p );
        const auto w = winning_region( g );
        Exploration e( p, { ClassificationMode::Incremental, false } );
        std::vector<StateStatus> seen;
        while ( !e.frontier().empty() )
        {
            e.expand( std::uniform_int_distribution<std::size_t>( 0, e.frontier().size() - 1 )( rng ) );
            seen.resize( e.num_states(), StateStatus::Unknown );
            for ( StateId s = 0; s < e.num_states(); ++s )
            {
                const auto now = e.state( s ).status;
                if ( seen[ s ] != StateStatus::Unknown && seen[ s ] != now )
                    return { false, mismatch( "classification changed", *p ) };
                seen[ s ] = now;
            }
        }
        const auto c = current_classification( e );
        if ( c.winning.size() + c.losing.size() != g.num_nodes() )
            return { false, mismatch( "unclassified states remain", *p ) };
        if ( c != oracle_classification( e, g, w ) )
            return { false, mismatch( "classification differs from the oracle", *p ) };
    }
    return { true, std::to_string( shared_corpus().size() ) + " problems explored completely" };
}

// 3
Outcome director_validity()
{
    std::size_t checked = 0;
    for ( const auto& p : shared_corpus() )
    {
        const auto g = full_compose( *p );
        BfsPolicy bfs;
        RandomPolicy random( 3 );
        for ( ExplorationPolicy* policy : std::initializer_list<ExplorationPolicy*>{ &bfs, &random } )
        {
            const auto r = run_synthesis( p, *policy );
            if ( r.verdict != VerdictKind::Winning )
                continue;
            ++checked;
            if ( !r.controller || !r.controller->is_director() || !validate_nonblocking( g, *r.controller ) )
                return { false, mismatch( "invalid director", *p ) };
        }
        const auto m = monolithic_synthesis( *p );
        if ( m.kind == VerdictKind::Winning )
        {
            ++checked;
            if ( !m.controller || !m.controller->is_director() || !validate_nonblocking( g, *m.controller ) )
                return { false, mismatch( "invalid oracle director", *p ) };
        }
    }
    if ( checked == 0 )
        return { false, "no winning instance in the corpus" };
    return { true, std::to_string( checked ) + " controllers validated" };
}

// 4
Outcome director_existence()
{
    std::size_t checked = 0;
    std::size_t realizable = 0;
    for ( const auto& p : ref::fuzz_corpus( 3000 ) )
    {
        const auto g = full_compose( *p );
        if ( g.num_nodes() > 8 )
            continue;
        ++checked;
        const auto brute = ref::exists_nonblocking_director( ref::game_from_graph( g ) );
        if ( static_cast<bool>( winning_region( g )[ g.initial() ] ) != brute )
            return { false, mismatch( "winning region disagrees with enumeration", *p ) };
        realizable += brute ? 1 : 0;
    }
    return { checked > 0, std::to_string( checked ) + " instances, " + std::to_string( realizable ) + " realizable" };
}

bool near_kink( const QNetwork& q, const std::vector<double>& x )
{
    for ( std::size_t j = 0; j < q.hidden; ++j )
    {
        double z = q.b1[ j ];
        for ( std::size_t i = 0; i < q.d_in; ++i )
            z += q.W1[ j * q.d_in + i ] * x[ i ];
        if ( std::abs( z ) <= gradient_h )
            return true;
    }
    return false;
}

// 5
Outcome gradient_check()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng( 5 );
    std::uniform_real_distribution<double> u( -1.0, 1.0 );
    double worst = 0.0;
    std::size_t draws = 0;
    for ( int sample = 0; sample < 100; ++sample )
    {
        const std::size_t d = 5 + sample % 20;
        const auto q = init_network( d, 1000 + sample );
        std::vector<double> x( d );
        // central differences are only valid when no hidden unit sits within h of its kink
        do
        {
            for ( auto& v : x )
                v = u( rng );
            ++draws;
        } while ( near_kink( q, x ) );
        const std::vector<DenseSample> batch{ { x, 3.0 * u( rng ) } };
        const auto g = mse_gradient( q, batch );
        auto check = [ & ]( const std::function<double&( QNetwork& )>& param, double analytic ) {
            auto plus = q;
            auto minus = q;
            param( plus ) += gradient_h;
            param( minus ) -= gradient_h;
            const auto numeric = ( mse_loss( plus, batch ) - mse_loss( minus, batch ) ) / ( 2 * gradient_h );
            worst = std::max( worst, std::abs( numeric - analytic ) /
                                         std::max( { std::abs( numeric ), std::abs( analytic ), 1e-7 } ) );
        };
        for ( std::size_t i = 0; i < q.W1.size(); ++i )
            check( [ i ]( QNetwork& n ) -> double& { return n.W1[ i ]; }, g.W1[ i ] );
        for ( std::size_t i = 0; i < q.b1.size(); ++i )
            check( [ i ]( QNetwork& n ) -> double& { return n.b1[ i ]; }, g.b1[ i ] );
        for ( std::size_t i = 0; i < q.W2.size(); ++i )
            check( [ i ]( QNetwork& n ) -> double& { return n.W2[ i ]; }, g.W2[ i ] );
        check( []( QNetwork& n ) -> double& { return n.b2; }, g.b2 );
    }
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    std::ostringstream s;
    s << "max relative error " << worst << " over 100 samples (" << draws - 100 << " redrawn near a kink), "
      << took.count() << " s";
    return { worst < gradient_tol && took.count() < gradient_seconds, s.str() };
}

// A loop 0-1-2-0 through the marked state 2, plus an unmarked loop and a
// deadlock as distractors.
std::shared_ptr<const ControlProblem> chain_plant()
{
    ProblemBuilder b( "chain" );
    for ( const auto* l : { "a", "b", "c", "w", "x", "y", "z" } )
        b.label( l, true );
    b.component( "C", 6 )
        .transition( 0, "a", 1 )
        .transition( 1, "b", 2 )
        .transition( 2, "c", 0 )
        .transition( 0, "x", 3 )
        .transition( 3, "y", 4 )
        .transition( 4, "z", 3 )
        .transition( 1, "w", 5 )
        .mark( 2 );
    return std::make_shared<const ControlProblem>( std::move( b ).build() );
}

// 6
Outcome overfit()
{
    const auto start = std::chrono::steady_clock::now();
    const auto p = chain_plant();
    const auto best = ref::minimum_expansions( *p, 12 );
    if ( !best )
        return { false, "chain plant exceeds the search bound" };
    TrainConfig cfg;
    cfg.total_steps = 20'000;
    cfg.epsilon_end = 0.0;
    cfg.epsilon_decay_steps = 10'000;
    cfg.buffer_capacity = 2'000;
    cfg.target_reset_every = 500;
    cfg.checkpoint_every = 20'000;
    cfg.prefill_min_steps = 200;
    cfg.optimizer.learning_rate = 1e-3;
    cfg.early_stop = false;
    cfg.seed = 6;
    const auto r = train( p, cfg, work / "overfit" );

    AgentPolicy agent( r.network, *p, build_schema( *p ) );
    const auto run = run_synthesis( p, agent );
    const Exploration e( p );
    const FeatureExtractor fx( *p, build_schema( *p ) );
    const auto candidates = fx.frontier_features( e );
    const auto q0 = forward( r.network, std::span<const std::uint8_t>( candidates[ greedy_action( r.network, candidates ) ] ) );
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;

    const auto target = -static_cast<double>( *best );
    std::ostringstream s;
    s << "L* = " << *best << ", greedy length " << run.expanded << ", Q(initial, best) = " << q0 << ", "
      << took.count() << " s";
    const bool pass = run.solved && run.expanded == *best && std::abs( q0 - target ) <= overfit_q_tol &&
                      took.count() < overfit_seconds;
    return { pass, s.str() };
}

struct TrendRun
{
    std::shared_ptr<const ControlProblem> problem;
    TrainResult result;
};

const TrendRun& trend_run()
{
    static const TrendRun run = [] {
        auto p = std::make_shared<const ControlProblem>( generate_instance( Domain::TransferLine, 2, 2 ) );
        TrainConfig cfg;
        cfg.total_steps = trend_steps;
        cfg.early_stop = false;
        cfg.seed = 0;
        auto r = train( p, cfg, work / "trend" );
        return TrendRun{ std::move( p ), std::move( r ) };
    }();
    return run;
}

// 7
Outcome learning_trend()
{
    const auto& t = trend_run();
    double greedy = 0.0;
    for ( int episode = 0; episode < 100; ++episode )
    {
        AgentPolicy agent( t.result.network, *t.problem, build_schema( *t.problem ) );
        greedy += static_cast<double>( run_synthesis( t.problem, agent ).expanded ) / 100.0;
    }
    double random = 0.0;
    for ( std::uint64_t seed = 0; seed < 100; ++seed )
    {
        RandomPolicy policy( seed );
        random += static_cast<double>( run_synthesis( t.problem, policy ).expanded ) / 100.0;
    }
    std::ostringstream s;
    s << "greedy mean " << greedy << ", random mean " << random << ", ratio " << greedy / random;
    return { greedy <= trend_ratio * random, s.str() };
}

// 8
Outcome transfer()
{
    const auto& t = trend_run();
    const GeneratorSource source( Domain::TransferLine );
    std::size_t evaluated = 0;
    for ( const auto& path : t.result.checkpoints )
    {
        try
        {
            const auto c = load_checkpoint( path, build_schema( *t.problem ) );
            for ( int n = 1; n <= 15; ++n )
                for ( int k = 1; k <= 15; ++k )
                {
                    const auto p = source.instance( n, k );
                    AgentPolicy agent( c.network, *p, c.schema );
                    const Exploration e( p );
                    (void)agent.select( e );
                    ++evaluated;
                }
        }
        catch ( const SchemaMismatch& ex )
        {
            return { false, path.filename().string() + ": " + ex.what() };
        }
    }

    auto score = []( std::uint64_t step, std::size_t solved, std::size_t expanded ) {
        CheckpointScore s;
        s.path = checkpoint_file_name( step );
        s.step = step;
        s.solved = solved;
        s.total_expanded = expanded;
        return s;
    };
    // argmax of solved, then fewest expanded, then earliest
    const std::vector<CheckpointScore> fixture{ score( 0, 4, 10 ),  score( 5, 7, 300 ), score( 10, 7, 120 ),
                                                score( 15, 7, 120 ), score( 20, 6, 1 ),  score( 25, 7, 121 ) };
    SelectionReport report{ fixture, select_best( fixture ) };
    const auto csv = selection_csv( report );
    const bool rule = report.selected == 2 && select_best( { score( 0, 1, 5 ), score( 1, 1, 5 ) } ) == 0 &&
                      csv.find( "checkpoint_00000010.json,10,7,120,1" ) != std::string::npos &&
                      std::count( csv.begin(), csv.end(), '\n' ) == 7;
    return { rule, std::to_string( t.result.checkpoints.size() ) + " checkpoints x 225 instances (" +
                       std::to_string( evaluated ) + " evaluations), selection fixture " +
                       ( rule ? "reproduced" : "mismatched" ) };
}

// 9
Outcome pipeline()
{
    const auto cfg = parse_pipeline_config( R"({
        "domain": "TransferLine",
        "deterministic": true,
        "train": {"total_steps": 100000, "early_stop": false, "seed": 1},
        "selection": {"max_n": 5, "max_k": 5, "budget": 2000, "jobs": 4},
        "evaluation": {"timeout_s": 60, "max_n": 5, "max_k": 5}
    })" );
    const auto a = run_pipeline( cfg, work / "pipeline_a" );
    const auto b = run_pipeline( cfg, work / "pipeline_b" );
    const auto ta = tree( work / "pipeline_a" );
    if ( ta != tree( work / "pipeline_b" ) )
        return { false, "pipeline outputs differ between runs" };
    const auto summary = ta.count( "summary.csv" ) ? ta.at( "summary.csv" ) : std::string();
    const bool both = summary.find( "\nrl," ) != std::string::npos && summary.find( "\nrlns," ) != std::string::npos &&
                      !a.rl.runs.empty() && !a.rlns.runs.empty();
    std::ostringstream s;
    s << ta.size() << " files identical; rl solved " << ( a.rl.runs.empty() ? 0 : a.rl.runs[ 0 ].solved )
      << ", rlns solved " << ( a.rlns.runs.empty() ? 0 : a.rlns.runs[ 0 ].solved );
    (void)b;
    return { both, s.str() };
}

// 10
Outcome defaults()
{
    const TrainConfig t;
    const SelectionConfig s;
    const EvaluationConfig e;
    std::vector<std::string> wrong;
    auto expect = [ & ]( bool ok, const char* name ) {
        if ( !ok )
            wrong.emplace_back( name );
    };
    expect( t.hidden == 20 && default_hidden == 20, "hidden" );
    expect( t.optimizer.learning_rate == 1e-5, "learning_rate" );
    expect( t.optimizer.weight_decay == 1e-4, "weight_decay" );
    expect( t.optimizer.momentum == 0.9, "momentum" );
    expect( t.epsilon_start == 1.0 && t.epsilon_end == 0.01, "epsilon range" );
    expect( t.epsilon_decay_steps == 250'000, "epsilon_decay_steps" );
    expect( t.buffer_capacity == 10'000, "buffer_capacity" );
    expect( t.batch_size == 10, "batch_size" );
    expect( t.target_reset_every == 10'000, "target_reset_every" );
    expect( t.checkpoint_every == 5'000, "checkpoint_every" );
    expect( s.sample_count == 100, "sample_count" );
    expect( s.budget == 5'000, "selection budget" );
    expect( e.timeout_s == 600.0, "timeout" );
    const auto parsed = parse_pipeline_config( R"({"domain": "TransferLine", "selection": {}})" );
    expect( parsed.train == t && parsed.selection == s && parsed.evaluation == e, "pipeline defaults" );
    std::string detail = "defaults snapshot";
    for ( const auto& w : wrong )
        detail += " " + w;
    return { wrong.empty(), wrong.empty() ? "all defaults match" : detail };
}

int shell( const std::string& args )
{
    const auto cmd = std::string( DCSRL_CLI ) + " " + args + " > /dev/null 2> " + ( work / "cli_stderr.txt" ).string();
    const auto status = std::system( cmd.c_str() );
    return WIFEXITED( status ) ? WEXITSTATUS( status ) : -1;
}

// 11
Outcome cli_determinism()
{
    const std::vector<std::pair<std::string, std::string>> commands{
        { "train", "train --domain DiningPhilosophers --n 2 --k 1 --steps 6000 --checkpoint-every 2000 "
                   "--epsilon-decay-steps 4000 --seed 3 --no-early-stop --out {}" },
        { "select", "select --domain DiningPhilosophers --checkpoints {train}/checkpoints --max-n 3 --max-k 3 "
                    "--budget 500 --jobs 2 --out {}/selection.csv" },
        { "evaluate", "evaluate --domain DiningPhilosophers --weights {train}/checkpoints/checkpoint_00006000.json "
                      "--max-n 3 --max-k 3 --random 3 --bfs --lifo --no-timeout --deterministic "
                      "--out {}/results.csv --summary {}/summary.csv" },
        { "synth", "synth --domain TransferLine --n 3 --k 2 --policy random --seed 7 --deterministic "
                   "--out {}/synth.json --controller {}/director.json" },
    };
    auto expand = []( std::string s, const fs::path& out, const fs::path& train_dir ) {
        for ( std::size_t at; ( at = s.find( "{train}" ) ) != std::string::npos; )
            s.replace( at, 7, train_dir.string() );
        for ( std::size_t at; ( at = s.find( "{}" ) ) != std::string::npos; )
            s.replace( at, 2, out.string() );
        return s;
    };
    for ( const auto* run : { "a", "b" } )
    {
        const auto root = work / "cli" / run;
        for ( const auto& [ name, args ] : commands )
        {
            fs::create_directories( root / name );
            if ( const auto code = shell( expand( args, root / name, root / "train" ) ); code != 0 )
                return { false, name + " exited with " + std::to_string( code ) + ": " + slurp( work / "cli_stderr.txt" ) };
        }
    }
    const auto a = tree( work / "cli" / "a" );
    const auto b = tree( work / "cli" / "b" );
    if ( a != b )
    {
        for ( const auto& [ file, content ] : a )
            if ( !b.count( file ) || b.at( file ) != content )
                return { false, file + " differs between runs" };
        return { false, "file sets differ between runs" };
    }
    std::size_t checkpoints = 0;
    for ( const auto& [ file, content ] : a )
        checkpoints += file.find( "checkpoint_" ) != std::string::npos ? 1 : 0;
    return { true, std::to_string( a.size() ) + " files byte-identical (" + std::to_string( checkpoints ) +
                       " checkpoints)" };
}

struct Criterion
{
    int id;
    const char* name;
    Outcome ( *run )();
};

} // namespace

int main( int argc, char** argv )
{
    const std::vector<Criterion> criteria{
        { 1, "oracle equivalence", oracle_equivalence },
        { 2, "full-exploration classification", full_exploration },
        { 3, "director validity", director_validity },
        { 4, "director existence by enumeration", director_existence },
        { 5, "gradient check", gradient_check },
        { 6, "Q-value overfit on a chain plant", overfit },
        { 7, "learning trend on TransferLine(2,2)", learning_trend },
        { 8, "transfer across the (15,15) grid", transfer },
        { 9, "pipeline rl/rlns plumbing", pipeline },
        { 10, "default hyperparameters", defaults },
        { 11, "CLI determinism", cli_determinism },
    };
    std::set<int> selected;
    for ( int i = 1; i < argc; ++i )
        selected.insert( std::atoi( argv[ i ] ) );

    fs::remove_all( work );
    fs::create_directories( work );
    int failures = 0;
    for ( const auto& c : criteria )
    {
        if ( !selected.empty() && !selected.count( c.id ) )
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = c.run();
        }
        catch ( const std::exception& e )
        {
            o = { false, std::string( "exception: " ) + e.what() };
        }
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
        failures += o.pass ? 0 : 1;
        std::cout << ( o.pass ? "PASS" : "FAIL" ) << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
                  << static_cast<long>( took.count() ) << " s)" << std::endl;
    }
    return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
