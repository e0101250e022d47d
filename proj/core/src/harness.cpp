#include "dcsrl/harness.hpp"

#include "dcsrl/error.hpp"
#include "dcsrl/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace dcsrl
{

GeneratorSource::GeneratorSource( Domain d ) : domain_{ d }
{
    if ( d == Domain::Random )
        throw UsageError( "the random domain has no (n, k) family" );
}

std::shared_ptr<const ControlProblem> GeneratorSource::instance( int n, int k ) const
{
    if ( n < 1 || k < 1 || n > max_instance_parameter || k > max_instance_parameter )
        return nullptr;
    return std::make_shared<const ControlProblem>( generate_instance( domain_, n, k ) );
}

SpecDirectorySource::SpecDirectorySource( const std::filesystem::path& dir ) : name_{ dir.filename().string() }
{
    if ( !std::filesystem::is_directory( dir ) )
        throw UsageError( "not a directory: " + dir.string() );
    std::vector<std::filesystem::path> files;
    for ( const auto& entry : std::filesystem::directory_iterator( dir ) )
        if ( entry.is_regular_file() && entry.path().extension() == ".json" )
            files.push_back( entry.path() );
    std::sort( files.begin(), files.end() );
    for ( const auto& f : files )
    {
        auto p = std::make_shared<const ControlProblem>( load_spec( f ) );
        if ( !p->params() )
            throw SemanticError( f.string() + ": instance without params {n, k}" );
        const auto key = std::make_pair( p->params()->n, p->params()->k );
        if ( !instances_.emplace( key, std::move( p ) ).second )
            throw SemanticError( f.string() + ": duplicate instance (" + std::to_string( key.first ) + ", " +
                                 std::to_string( key.second ) + ")" );
    }
    if ( name_.empty() )
        name_ = dir.string();
}

std::shared_ptr<const ControlProblem> SpecDirectorySource::instance( int n, int k ) const
{
    const auto it = instances_.find( { n, k } );
    return it == instances_.end() ? nullptr : it->second;
}

std::unique_ptr<InstanceSource> make_source( const std::string& domain,
                                             const std::optional<std::filesystem::path>& spec_dir )
{
    if ( spec_dir )
        return std::make_unique<SpecDirectorySource>( *spec_dir );
    return std::make_unique<GeneratorSource>( parse_domain( domain ) );
}

PruningRule parse_pruning_rule( std::string_view s )
{
    if ( s == "neighbors" )
        return PruningRule::Neighbors;
    if ( s == "literal" )
        return PruningRule::Literal;
    throw UsageError( "unknown pruning rule '" + std::string( s ) + "' (expected neighbors or literal)" );
}

std::string to_string( PruningRule r )
{
    return r == PruningRule::Neighbors ? "neighbors" : "literal";
}

std::vector<InstanceOutcome> walk_grid( int max_n, int max_k, PruningRule rule,
                                        const std::function<std::optional<InstanceOutcome>( int n, int k )>& attempt )
{
    std::set<std::pair<int, int>> solved;
    auto satisfied = [ & ]( int n, int k ) { return n < 1 || k < 1 || solved.count( { n, k } ) > 0; };
    auto allowed = [ & ]( int n, int k ) {
        if ( !satisfied( n - 1, k ) )
            return false;
        return rule == PruningRule::Neighbors ? satisfied( n, k - 1 ) : satisfied( k - 1, n );
    };

    std::vector<InstanceOutcome> out;
    for ( int d = 2; d <= max_n + max_k; ++d )
    {
        bool attempted = false;
        for ( int n = std::max( 1, d - max_k ); n <= std::min( max_n, d - 1 ); ++n )
        {
            const auto k = d - n;
            if ( !allowed( n, k ) )
                continue;
            auto o = attempt( n, k );
            if ( !o )
                continue;
            attempted = true;
            if ( o->solved )
                solved.insert( { n, k } );
            out.push_back( *o );
        }
        if ( !attempted )
            break;
    }
    return out;
}

std::vector<std::size_t> sample_checkpoints( std::size_t total, std::size_t count )
{
    if ( total == 0 )
        throw UsageError( "no checkpoints to sample" );
    if ( count == 0 )
        throw UsageError( "sample count must be positive" );
    std::vector<std::size_t> out;
    if ( total <= count )
    {
        for ( std::size_t i = 0; i < total; ++i )
            out.push_back( i );
        return out;
    }
    if ( count == 1 )
        return { total - 1 };
    // round(i * (total - 1) / (count - 1)) in exact integer arithmetic
    for ( std::size_t i = 0; i < count; ++i )
        out.push_back( ( 2 * i * ( total - 1 ) + ( count - 1 ) ) / ( 2 * ( count - 1 ) ) );
    return out;
}

std::size_t select_best( const std::vector<CheckpointScore>& scores )
{
    if ( scores.empty() )
        throw UsageError( "no checkpoint scores to select from" );
    std::size_t best = 0;
    for ( std::size_t i = 1; i < scores.size(); ++i )
    {
        const auto& a = scores[ i ];
        const auto& b = scores[ best ];
        if ( a.solved > b.solved || ( a.solved == b.solved && a.total_expanded < b.total_expanded ) )
            best = i;
    }
    return best;
}

namespace
{

InstanceOutcome run_instance( int n, int k, std::shared_ptr<const ControlProblem> p, ExplorationPolicy& policy,
                              const SynthesisOptions& options )
{
    const auto r = run_synthesis( std::move( p ), policy, options );
    return { n, k, r.verdict, r.expanded, r.time_ms, r.solved };
}

SynthesisOptions bounded_options( std::optional<std::size_t> budget, std::optional<double> timeout_s )
{
    SynthesisOptions o;
    o.budget = budget;
    if ( timeout_s )
        o.timeout = std::chrono::duration<double>( *timeout_s );
    o.build_controller = false;
    return o;
}

std::uint64_t derived_seed( std::uint64_t seed, int n, int k )
{
    std::seed_seq seq{ static_cast<std::uint32_t>( seed ), static_cast<std::uint32_t>( seed >> 32 ),
                       static_cast<std::uint32_t>( n ), static_cast<std::uint32_t>( k ) };
    std::array<std::uint32_t, 2> out{};
    seq.generate( out.begin(), out.end() );
    return ( std::uint64_t{ out[ 0 ] } << 32 ) | out[ 1 ];
}

// runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error
void parallel_for( std::size_t n, std::size_t jobs, const std::function<void( std::size_t )>& fn )
{
    jobs = std::max<std::size_t>( 1, std::min( jobs, n ) );
    if ( jobs == 1 )
    {
        for ( std::size_t i = 0; i < n; ++i )
            fn( i );
        return;
    }
    std::atomic<std::size_t> next{ 0 };
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for ( std::size_t w = 0; w < jobs; ++w )
        workers.emplace_back( [ & ] {
            for ( auto i = next++; i < n; i = next++ )
            {
                try
                {
                    fn( i );
                }
                catch ( ... )
                {
                    std::lock_guard lock( error_mutex );
                    if ( !error )
                        error = std::current_exception();
                    next = n;
                }
            }
        } );
    for ( auto& t : workers )
        t.join();
    if ( error )
        std::rethrow_exception( error );
}

} // namespace

CheckpointScore score_checkpoint( const Checkpoint& c, const std::filesystem::path& path, const InstanceSource& source,
                                  const SelectionConfig& cfg )
{
    CheckpointScore score;
    score.path = path;
    score.step = c.step;
    const auto options = bounded_options( cfg.budget, std::nullopt );
    score.outcomes = walk_grid( cfg.max_n, cfg.max_k, cfg.rule, [ & ]( int n, int k ) -> std::optional<InstanceOutcome> {
        auto p = source.instance( n, k );
        if ( !p )
            return std::nullopt;
        AgentPolicy policy( c.network, *p, c.schema, cfg.features );
        return run_instance( n, k, std::move( p ), policy, options );
    } );
    for ( const auto& o : score.outcomes )
    {
        score.solved += o.solved ? 1 : 0;
        score.total_expanded += o.expanded;
    }
    return score;
}

SelectionReport select_agent( const std::vector<std::filesystem::path>& checkpoints, const InstanceSource& source,
                              const SelectionConfig& cfg )
{
    const auto picked = sample_checkpoints( checkpoints.size(), cfg.sample_count );
    SelectionReport report;
    report.scores.resize( picked.size() );
    parallel_for( picked.size(), cfg.jobs, [ & ]( std::size_t i ) {
        const auto& path = checkpoints[ picked[ i ] ];
        report.scores[ i ] = score_checkpoint( load_checkpoint( path ), path, source, cfg );
    } );
    report.selected = select_best( report.scores );
    return report;
}

std::vector<RewardEntry> training_rewards( const std::vector<std::filesystem::path>& checkpoints,
                                           std::shared_ptr<const ControlProblem> training_instance,
                                           std::size_t budget, const FeatureOptions& features )
{
    const auto options = bounded_options( budget, std::nullopt );
    std::vector<RewardEntry> out;
    for ( const auto& path : checkpoints )
    {
        const auto c = load_checkpoint( path );
        AgentPolicy policy( c.network, *training_instance, c.schema, features );
        const auto r = run_synthesis( training_instance, policy, options );
        RewardEntry e{ path, c.step, std::nullopt };
        if ( r.solved )
            e.reward = -static_cast<double>( r.expanded );
        out.push_back( std::move( e ) );
    }
    return out;
}

std::size_t select_by_reward( const std::vector<RewardEntry>& entries )
{
    if ( entries.empty() )
        throw UsageError( "no checkpoints to select from" );
    std::size_t best = 0;
    for ( std::size_t i = 1; i < entries.size(); ++i )
    {
        const auto& a = entries[ i ].reward;
        const auto& b = entries[ best ].reward;
        if ( !b || ( a && *a >= *b ) )
            best = i;
    }
    return best;
}

std::vector<PolicySummary> EvaluationReport::summary() const
{
    std::vector<PolicySummary> out;
    for ( const auto& run : runs )
    {
        auto it = std::find_if( out.begin(), out.end(), [ & ]( const auto& s ) { return s.policy == run.policy; } );
        if ( it == out.end() )
        {
            out.push_back( { run.policy, 0, 0.0, 0.0 } );
            it = out.end() - 1;
        }
        ++it->runs;
    }
    for ( auto& s : out )
    {
        std::vector<double> xs;
        for ( const auto& run : runs )
            if ( run.policy == s.policy )
                xs.push_back( static_cast<double>( run.solved ) );
        double mean = 0.0;
        for ( const auto x : xs )
            mean += x;
        mean /= static_cast<double>( xs.size() );
        double var = 0.0;
        for ( const auto x : xs )
            var += ( x - mean ) * ( x - mean );
        s.solved_mean = mean;
        s.solved_std = xs.size() > 1 ? std::sqrt( var / static_cast<double>( xs.size() - 1 ) ) : 0.0;
    }
    return out;
}

EvaluationReport evaluate( const std::optional<Checkpoint>& agent, const std::string& agent_label,
                           const InstanceSource& source, const EvaluationConfig& cfg,
                           const std::function<void( const PolicyRun&, const InstanceOutcome& )>& on_row )
{
    const auto max_n = cfg.max_n.value_or( max_instance_parameter );
    const auto max_k = cfg.max_k.value_or( max_instance_parameter );
    const auto options = bounded_options( cfg.budget, cfg.timeout_s );

    EvaluationReport report;
    auto play = [ & ]( PolicyRun run, const std::function<std::unique_ptr<ExplorationPolicy>(
                                          const ControlProblem&, int n, int k )>& make_policy ) {
        run.outcomes =
            walk_grid( max_n, max_k, cfg.rule, [ & ]( int n, int k ) -> std::optional<InstanceOutcome> {
                auto p = source.instance( n, k );
                if ( !p )
                    return std::nullopt;
                auto policy = make_policy( *p, n, k );
                auto o = run_instance( n, k, std::move( p ), *policy, options );
                if ( on_row )
                    on_row( run, o );
                return o;
            } );
        for ( const auto& o : run.outcomes )
            run.solved += o.solved ? 1 : 0;
        report.runs.push_back( std::move( run ) );
    };

    if ( agent )
        play( PolicyRun{ agent_label, 0, {}, 0 }, [ & ]( const ControlProblem& p, int, int ) {
            return std::make_unique<AgentPolicy>( agent->network, p, agent->schema, cfg.features );
        } );
    for ( const auto seed : cfg.random_seeds )
        play( PolicyRun{ "random", seed, {}, 0 }, [ & ]( const ControlProblem&, int n, int k ) {
            return std::make_unique<RandomPolicy>( derived_seed( seed, n, k ) );
        } );
    if ( cfg.bfs )
        play( PolicyRun{ "bfs", 0, {}, 0 }, []( const ControlProblem&, int, int ) { return std::make_unique<BfsPolicy>(); } );
    if ( cfg.lifo )
        play( PolicyRun{ "lifo", 0, {}, 0 },
              []( const ControlProblem&, int, int ) { return std::make_unique<LifoPolicy>(); } );
    return report;
}

std::string results_csv_header()
{
    return "domain,n,k,policy,seed,verdict,expanded,time_ms,solved";
}

std::string results_csv_row( const std::string& domain, const std::string& policy, std::uint64_t seed,
                             const InstanceOutcome& o, bool deterministic )
{
    return domain + "," + std::to_string( o.n ) + "," + std::to_string( o.k ) + "," + policy + "," +
           std::to_string( seed ) + "," + to_string( o.verdict ) + "," + std::to_string( o.expanded ) + "," +
           ( deterministic ? std::string{ "0" } : format_double( o.time_ms ) ) + "," + ( o.solved ? "1" : "0" );
}

std::string summary_csv( const std::vector<PolicySummary>& rows )
{
    std::string out = "policy,runs,solved_mean,solved_std\n";
    for ( const auto& r : rows )
        out += r.policy + "," + std::to_string( r.runs ) + "," + format_double( r.solved_mean ) + "," +
               format_double( r.solved_std ) + "\n";
    return out;
}

std::string selection_csv( const SelectionReport& r )
{
    std::string out = "checkpoint,step,solved,total_expanded,selected\n";
    for ( std::size_t i = 0; i < r.scores.size(); ++i )
    {
        const auto& s = r.scores[ i ];
        out += s.path.filename().string() + "," + std::to_string( s.step ) + "," + std::to_string( s.solved ) + "," +
               std::to_string( s.total_expanded ) + "," + ( i == r.selected ? "1" : "0" ) + "\n";
    }
    return out;
}

CsvAppender::CsvAppender( const std::filesystem::path& path, const std::string& header ) : path_{ path }
{
    if ( path.has_parent_path() )
        std::filesystem::create_directories( path.parent_path() );
    std::ofstream out( path, std::ios::trunc );
    if ( !out )
        throw Error( "cannot write " + path.string() );
    out << header << '\n';
}

void CsvAppender::append( const std::string& line )
{
    std::ofstream out( path_, std::ios::app );
    out << line << '\n';
    out.flush();
    if ( !out )
        throw Error( "cannot append to " + path_.string() );
}

namespace
{

using json = nlohmann::json;

void check_keys( const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where )
{
    if ( !obj.is_object() )
        throw UsageError( where + " must be a JSON object" );
    for ( const auto& [ key, value ] : obj.items() )
        if ( std::find( allowed.begin(), allowed.end(), key ) == allowed.end() )
            throw UsageError( "unknown key '" + key + "' in " + where );
}

template <typename T>
void read( const json& obj, const char* key, T& into )
{
    if ( obj.contains( key ) )
        into = obj.at( key ).get<T>();
}

} // namespace

PipelineConfig parse_pipeline_config( std::string_view text )
{
    json doc;
    try
    {
        doc = json::parse( text );
    }
    catch ( const json::parse_error& e )
    {
        throw UsageError( std::string( "pipeline config: " ) + e.what() );
    }
    PipelineConfig cfg;
    try
    {
        check_keys( doc,
                    { "domain", "spec_dir", "train_instance", "deterministic", "features", "train", "selection",
                      "evaluation" },
                    "pipeline config" );
        if ( !doc.contains( "selection" ) )
            throw UsageError( "pipeline config has no \"selection\" section; checkpoint selection is mandatory" );
        read( doc, "domain", cfg.domain );
        if ( doc.contains( "spec_dir" ) )
            cfg.spec_dir = doc.at( "spec_dir" ).get<std::string>();
        if ( cfg.domain.empty() && !cfg.spec_dir )
            throw UsageError( "pipeline config needs \"domain\" or \"spec_dir\"" );
        if ( doc.contains( "train_instance" ) )
        {
            const auto nk = doc.at( "train_instance" ).get<std::vector<int>>();
            if ( nk.size() != 2 )
                throw UsageError( "train_instance must be [n, k]" );
            cfg.train_n = nk[ 0 ];
            cfg.train_k = nk[ 1 ];
        }
        read( doc, "deterministic", cfg.deterministic );

        FeatureOptions features;
        if ( doc.contains( "features" ) )
        {
            const auto& f = doc.at( "features" );
            check_keys( f, { "last_expanded_uses_target" }, "features" );
            read( f, "last_expanded_uses_target", features.last_expanded_uses_target );
        }
        cfg.train.features = features;
        cfg.selection.features = features;
        cfg.evaluation.features = features;

        if ( doc.contains( "train" ) )
        {
            const auto& t = doc.at( "train" );
            check_keys( t,
                        { "total_steps", "epsilon_start", "epsilon_end", "epsilon_decay_steps", "batch_size",
                          "buffer_capacity", "target_reset_every", "checkpoint_every", "hidden", "learning_rate",
                          "weight_decay", "momentum", "seed", "early_stop", "prefill_min_steps" },
                        "train" );
            auto& c = cfg.train;
            read( t, "total_steps", c.total_steps );
            read( t, "epsilon_start", c.epsilon_start );
            read( t, "epsilon_end", c.epsilon_end );
            read( t, "epsilon_decay_steps", c.epsilon_decay_steps );
            read( t, "batch_size", c.batch_size );
            read( t, "buffer_capacity", c.buffer_capacity );
            read( t, "target_reset_every", c.target_reset_every );
            read( t, "checkpoint_every", c.checkpoint_every );
            read( t, "hidden", c.hidden );
            read( t, "learning_rate", c.optimizer.learning_rate );
            read( t, "weight_decay", c.optimizer.weight_decay );
            read( t, "momentum", c.optimizer.momentum );
            read( t, "seed", c.seed );
            read( t, "early_stop", c.early_stop );
            read( t, "prefill_min_steps", c.prefill_min_steps );
        }

        const auto& s = doc.at( "selection" );
        check_keys( s, { "sample_count", "max_n", "max_k", "budget", "rule", "jobs" }, "selection" );
        read( s, "sample_count", cfg.selection.sample_count );
        read( s, "max_n", cfg.selection.max_n );
        read( s, "max_k", cfg.selection.max_k );
        read( s, "budget", cfg.selection.budget );
        read( s, "jobs", cfg.selection.jobs );
        if ( s.contains( "rule" ) )
            cfg.selection.rule = parse_pruning_rule( s.at( "rule" ).get<std::string>() );

        if ( doc.contains( "evaluation" ) )
        {
            const auto& e = doc.at( "evaluation" );
            check_keys( e, { "timeout_s", "budget", "max_n", "max_k", "rule", "random_seeds", "bfs", "lifo" },
                        "evaluation" );
            auto& c = cfg.evaluation;
            if ( e.contains( "timeout_s" ) )
                c.timeout_s = e.at( "timeout_s" ).is_null() ? std::nullopt
                                                            : std::optional<double>( e.at( "timeout_s" ).get<double>() );
            if ( e.contains( "budget" ) && !e.at( "budget" ).is_null() )
                c.budget = e.at( "budget" ).get<std::size_t>();
            if ( e.contains( "max_n" ) && !e.at( "max_n" ).is_null() )
                c.max_n = e.at( "max_n" ).get<int>();
            if ( e.contains( "max_k" ) && !e.at( "max_k" ).is_null() )
                c.max_k = e.at( "max_k" ).get<int>();
            if ( e.contains( "rule" ) )
                c.rule = parse_pruning_rule( e.at( "rule" ).get<std::string>() );
            read( e, "random_seeds", c.random_seeds );
            read( e, "bfs", c.bfs );
            read( e, "lifo", c.lifo );
        }
    }
    catch ( const json::exception& e )
    {
        throw UsageError( std::string( "pipeline config: " ) + e.what() );
    }
    cfg.train.validate();
    if ( cfg.selection.sample_count == 0 || cfg.selection.max_n < 1 || cfg.selection.max_k < 1 )
        throw UsageError( "selection needs sample_count >= 1 and a non-empty grid" );
    return cfg;
}

PipelineReport run_pipeline( const PipelineConfig& cfg, const std::filesystem::path& out_dir )
{
    const auto source = make_source( cfg.domain, cfg.spec_dir );
    const auto training_instance = source->instance( cfg.train_n, cfg.train_k );
    if ( !training_instance )
        throw UsageError( "no training instance (" + std::to_string( cfg.train_n ) + ", " +
                          std::to_string( cfg.train_k ) + ") in " + source->name() );

    PipelineReport report;
    report.checkpoints = train( training_instance, cfg.train, out_dir / "train" ).checkpoints;

    report.selection = select_agent( report.checkpoints, *source, cfg.selection );
    write_file_atomic( out_dir / "selection.csv", selection_csv( report.selection ) );

    report.rewards =
        training_rewards( report.checkpoints, training_instance, cfg.selection.budget, cfg.selection.features );
    report.reward_selected = select_by_reward( report.rewards );
    {
        std::string csv = "checkpoint,step,reward,selected\n";
        for ( std::size_t i = 0; i < report.rewards.size(); ++i )
        {
            const auto& r = report.rewards[ i ];
            csv += r.path.filename().string() + "," + std::to_string( r.step ) + "," +
                   ( r.reward ? format_double( *r.reward ) : std::string{} ) + "," +
                   ( i == report.reward_selected ? "1" : "0" ) + "\n";
        }
        write_file_atomic( out_dir / "training_rewards.csv", csv );
    }

    auto run_eval = [ & ]( const std::filesystem::path& checkpoint, const std::string& label,
                           const EvaluationConfig& ecfg, const std::filesystem::path& csv_path ) {
        CsvAppender csv( csv_path, results_csv_header() );
        return evaluate( load_checkpoint( checkpoint ), label, *source, ecfg,
                         [ & ]( const PolicyRun& run, const InstanceOutcome& o ) {
                             csv.append( results_csv_row( source->name(), run.policy, run.seed, o, cfg.deterministic ) );
                         } );
    };
    report.rl = run_eval( report.selection.scores[ report.selection.selected ].path, "rl", cfg.evaluation,
                          out_dir / "results_rl.csv" );
    auto ablation = cfg.evaluation;
    ablation.random_seeds.clear();
    ablation.bfs = false;
    ablation.lifo = false;
    report.rlns =
        run_eval( report.rewards[ report.reward_selected ].path, "rlns", ablation, out_dir / "results_rlns.csv" );

    auto rows = report.rl.summary();
    for ( const auto& r : report.rlns.summary() )
        rows.push_back( r );
    write_file_atomic( out_dir / "summary.csv", summary_csv( rows ) );
    return report;
}

} // namespace dcsrl
