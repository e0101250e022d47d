#include "dcsrl/error.hpp"
#include "dcsrl/exploration.hpp"
#include "dcsrl/features.hpp"
#include "dcsrl/harness.hpp"
#include "dcsrl/neural.hpp"
#include "dcsrl/oracle.hpp"
#include "dcsrl/rl.hpp"
#include "dcsrl/spec_io.hpp"
#include "dcsrl/util.hpp"

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace
{

using namespace dcsrl;

enum ExitCode
{
    exit_ok = 0,
    exit_usage = 1,
    exit_input = 2,
    exit_resource = 3,
};

struct InstanceArgs
{
    std::string spec;
    std::string domain;
    int n = 0;
    int k = 0;

    void add( CLI::App& app )
    {
        app.add_option( "--spec", spec, "Problem file (JSON)" );
        app.add_option( "--domain", domain, "Benchmark domain: TransferLine, DiningPhilosophers, CraftedGate" );
        app.add_option( "--n", n, "Domain parameter n" );
        app.add_option( "--k", k, "Domain parameter k" );
    }

    [[nodiscard]] std::shared_ptr<const ControlProblem> load() const
    {
        if ( !spec.empty() )
        {
            if ( !domain.empty() )
                throw UsageError( "--spec and --domain are mutually exclusive" );
            return std::make_shared<const ControlProblem>( load_spec( spec ) );
        }
        if ( domain.empty() )
            throw UsageError( "an instance needs --spec or --domain with --n and --k" );
        return std::make_shared<const ControlProblem>( generate_instance( parse_domain( domain ), n, k ) );
    }
};

struct GridArgs
{
    std::string domain;
    std::string spec_dir;

    void add( CLI::App& app )
    {
        app.add_option( "--domain", domain, "Benchmark domain" );
        app.add_option( "--spec-dir", spec_dir, "Directory of instance files carrying params {n, k}" );
    }

    [[nodiscard]] std::unique_ptr<InstanceSource> source() const
    {
        if ( domain.empty() == spec_dir.empty() )
            throw UsageError( "give exactly one of --domain and --spec-dir" );
        return make_source( domain, spec_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>( spec_dir ) );
    }
};

void emit( const std::string& text, const std::string& out )
{
    if ( out.empty() || out == "-" )
        std::cout << text;
    else
        write_file_atomic( out, text );
}

std::unique_ptr<ExplorationPolicy> make_policy( const std::string& name, std::uint64_t seed, const std::string& weights,
                                                const ControlProblem& p, bool last_target )
{
    if ( name == "random" )
        return std::make_unique<RandomPolicy>( seed );
    if ( name == "bfs" )
        return std::make_unique<BfsPolicy>();
    if ( name == "lifo" )
        return std::make_unique<LifoPolicy>();
    if ( name == "agent" )
    {
        if ( weights.empty() )
            throw UsageError( "--policy agent needs --weights" );
        const auto c = load_checkpoint( weights );
        return std::make_unique<AgentPolicy>( c.network, p, c.schema, FeatureOptions{ last_target } );
    }
    throw UsageError( "unknown policy '" + name + "' (random, bfs, lifo, agent)" );
}

std::vector<std::filesystem::path> list_checkpoints( const std::filesystem::path& dir )
{
    if ( !std::filesystem::is_directory( dir ) )
        throw UsageError( "not a directory: " + dir.string() );
    std::vector<std::filesystem::path> out;
    for ( const auto& e : std::filesystem::directory_iterator( dir ) )
        if ( e.is_regular_file() && e.path().extension() == ".json" &&
             e.path().filename().string().starts_with( "checkpoint_" ) )
            out.push_back( e.path() );
    std::sort( out.begin(), out.end() );
    if ( out.empty() )
        throw UsageError( "no checkpoint_*.json files in " + dir.string() );
    return out;
}

int run( int argc, char** argv )
{
    CLI::App app{ "Directed controller synthesis with learned exploration heuristics" };
    app.require_subcommand( 1 );

    // synth
    InstanceArgs synth_instance;
    std::string synth_policy = "bfs", synth_weights, synth_out, synth_controller, synth_mode = "incremental";
    std::optional<std::size_t> synth_budget;
    std::optional<double> synth_timeout;
    std::uint64_t synth_seed = 0;
    bool synth_deterministic = false, synth_last_target = false;
    auto* synth = app.add_subcommand( "synth", "Run on-the-fly synthesis with an exploration policy" );
    synth_instance.add( *synth );
    synth->add_option( "--policy", synth_policy, "random, bfs, lifo or agent" );
    synth->add_option( "--weights", synth_weights, "Checkpoint for --policy agent" );
    synth->add_option( "--budget", synth_budget, "Maximum expanded transitions" );
    synth->add_option( "--timeout", synth_timeout, "Wall-clock limit in seconds" );
    synth->add_option( "--seed", synth_seed, "Seed of the random policy" );
    synth->add_option( "--out", synth_out, "Result JSON path (default stdout)" );
    synth->add_option( "--controller", synth_controller, "Write the director here when realizable" );
    synth->add_option( "--classification", synth_mode, "incremental or recompute" );
    synth->add_flag( "--deterministic", synth_deterministic, "Report time_ms as 0" );
    synth->add_flag( "--last-expanded-target", synth_last_target, "Alternative last-expanded feature reading" );

    // oracle
    InstanceArgs oracle_instance;
    std::string oracle_out, oracle_controller;
    std::size_t oracle_cap = default_state_cap;
    auto* oracle = app.add_subcommand( "oracle", "Monolithic synthesis on the full composition" );
    oracle_instance.add( *oracle );
    oracle->add_option( "--cap", oracle_cap, "Composed state cap" );
    oracle->add_option( "--out", oracle_out, "Result JSON path (default stdout)" );
    oracle->add_option( "--controller", oracle_controller, "Write the director here when realizable" );

    // compose
    InstanceArgs compose_instance;
    std::string compose_out;
    std::size_t compose_cap = default_state_cap;
    auto* compose = app.add_subcommand( "compose", "Export the full composition as JSON" );
    compose_instance.add( *compose );
    compose->add_option( "--cap", compose_cap, "Composed state cap" );
    compose->add_option( "--out", compose_out, "Output path (default stdout)" );

    // features
    InstanceArgs features_instance;
    std::string features_policy = "bfs", features_weights, features_out;
    std::optional<std::size_t> features_budget;
    std::uint64_t features_seed = 0;
    bool features_last_target = false;
    auto* features = app.add_subcommand( "features", "Dump frontier feature vectors step by step (JSON lines)" );
    features_instance.add( *features );
    features->add_option( "--policy", features_policy, "Policy driving the exploration" );
    features->add_option( "--weights", features_weights, "Checkpoint for --policy agent" );
    features->add_option( "--budget", features_budget, "Stop after this many expansions" );
    features->add_option( "--seed", features_seed, "Seed of the random policy" );
    features->add_option( "--out", features_out, "Output path (default stdout)" );
    features->add_flag( "--last-expanded-target", features_last_target, "Alternative last-expanded feature reading" );

    // train
    InstanceArgs train_instance;
    TrainConfig train_cfg;
    std::string train_out;
    bool train_no_early_stop = false, train_last_target = false;
    auto* train_cmd = app.add_subcommand( "train", "Train a Q network on one instance" );
    train_instance.add( *train_cmd );
    train_cmd->add_option( "--steps", train_cfg.total_steps, "Minimum training steps" );
    train_cmd->add_option( "--seed", train_cfg.seed, "Training seed" );
    train_cmd->add_option( "--lr", train_cfg.optimizer.learning_rate, "Learning rate" );
    train_cmd->add_option( "--weight-decay", train_cfg.optimizer.weight_decay, "L2 weight decay" );
    train_cmd->add_option( "--momentum", train_cfg.optimizer.momentum, "SGD momentum" );
    train_cmd->add_option( "--epsilon-end", train_cfg.epsilon_end, "Final exploration rate" );
    train_cmd->add_option( "--epsilon-decay-steps", train_cfg.epsilon_decay_steps, "Steps of linear decay" );
    train_cmd->add_option( "--checkpoint-every", train_cfg.checkpoint_every, "Checkpoint interval in steps" );
    train_cmd->add_option( "--target-reset-every", train_cfg.target_reset_every, "Target network copy interval" );
    train_cmd->add_option( "--buffer", train_cfg.buffer_capacity, "Replay capacity" );
    train_cmd->add_option( "--batch", train_cfg.batch_size, "Minibatch size" );
    train_cmd->add_flag( "--no-early-stop", train_no_early_stop, "Stop exactly at --steps" );
    train_cmd->add_flag( "--last-expanded-target", train_last_target, "Alternative last-expanded feature reading" );
    train_cmd->add_option( "--out", train_out, "Output directory" )->required();

    // select
    GridArgs select_grid;
    SelectionConfig select_cfg;
    std::string select_checkpoints, select_out, select_rule = "neighbors";
    auto* select = app.add_subcommand( "select", "Score sampled checkpoints on the instance grid" );
    select_grid.add( *select );
    select->add_option( "--checkpoints", select_checkpoints, "Directory of checkpoint_*.json" )->required();
    select->add_option( "--samples", select_cfg.sample_count, "Number of checkpoints sampled" );
    select->add_option( "--max-n", select_cfg.max_n, "Grid bound on n" );
    select->add_option( "--max-k", select_cfg.max_k, "Grid bound on k" );
    select->add_option( "--budget", select_cfg.budget, "Expansion budget per instance" );
    select->add_option( "--rule", select_rule, "Pruning rule: neighbors or literal" );
    select->add_option( "--jobs", select_cfg.jobs, "Worker threads" );
    select->add_option( "--out", select_out, "Selection CSV (default stdout)" );

    // evaluate
    GridArgs eval_grid;
    EvaluationConfig eval_cfg;
    std::string eval_weights, eval_out, eval_summary, eval_rule = "neighbors";
    std::optional<double> eval_timeout = 600.0;
    std::size_t eval_random = 0;
    bool eval_no_timeout = false, eval_deterministic = false;
    auto* evaluate_cmd = app.add_subcommand( "evaluate", "Evaluate an agent and baselines over the grid" );
    eval_grid.add( *evaluate_cmd );
    evaluate_cmd->add_option( "--weights", eval_weights, "Agent checkpoint" );
    evaluate_cmd->add_option( "--timeout", eval_timeout, "Per-instance wall-clock limit in seconds" );
    evaluate_cmd->add_flag( "--no-timeout", eval_no_timeout, "Disable the wall-clock limit" );
    evaluate_cmd->add_option( "--budget", eval_cfg.budget, "Expansion budget per instance" );
    evaluate_cmd->add_option( "--max-n", eval_cfg.max_n, "Grid bound on n" );
    evaluate_cmd->add_option( "--max-k", eval_cfg.max_k, "Grid bound on k" );
    evaluate_cmd->add_option( "--rule", eval_rule, "Pruning rule: neighbors or literal" );
    evaluate_cmd->add_option( "--random", eval_random, "Random baseline runs (seeds 0..N-1)" );
    evaluate_cmd->add_flag( "--bfs", eval_cfg.bfs, "Add the bfs baseline" );
    evaluate_cmd->add_flag( "--lifo", eval_cfg.lifo, "Add the lifo baseline" );
    evaluate_cmd->add_option( "--out", eval_out, "Results CSV (default stdout)" );
    evaluate_cmd->add_option( "--summary", eval_summary, "Per-policy summary CSV" );
    evaluate_cmd->add_flag( "--deterministic", eval_deterministic, "Report time_ms as 0" );

    // pipeline
    std::string pipeline_config, pipeline_out;
    auto* pipeline = app.add_subcommand( "pipeline", "Train, select and evaluate from a JSON config" );
    pipeline->add_option( "--config", pipeline_config, "Pipeline config file" )->required();
    pipeline->add_option( "--out", pipeline_out, "Output directory" )->required();

    // generate
    InstanceArgs gen_instance;
    std::optional<std::uint64_t> gen_random;
    int gen_components = 3, gen_states = 4, gen_labels = 4;
    std::string gen_out;
    auto* generate = app.add_subcommand( "generate", "Write a domain instance or a random problem as JSON" );
    gen_instance.add( *generate );
    generate->add_option( "--random-seed", gen_random, "Generate a random problem with this seed" );
    generate->add_option( "--components", gen_components, "Random: maximum components" );
    generate->add_option( "--states", gen_states, "Random: maximum states per component" );
    generate->add_option( "--labels", gen_labels, "Random: maximum labels" );
    generate->add_option( "--out", gen_out, "Output path (default stdout)" );

    try
    {
        app.parse( argc, argv );
    }
    catch ( const CLI::ParseError& e )
    {
        const auto code = app.exit( e );
        return code == 0 ? exit_ok : exit_usage;
    }

    if ( *synth )
    {
        const auto p = synth_instance.load();
        auto policy = make_policy( synth_policy, synth_seed, synth_weights, *p, synth_last_target );
        SynthesisOptions options;
        options.budget = synth_budget;
        if ( synth_timeout )
            options.timeout = std::chrono::duration<double>( *synth_timeout );
        if ( synth_mode == "recompute" )
            options.exploration.mode = ClassificationMode::Recompute;
        else if ( synth_mode != "incremental" )
            throw UsageError( "--classification must be incremental or recompute" );
        const auto r = run_synthesis( p, *policy, options );
        nlohmann::ordered_json doc{ { "instance", p->name() },
                                    { "policy", synth_policy },
                                    { "seed", synth_seed },
                                    { "verdict", to_string( r.verdict ) },
                                    { "expanded", r.expanded },
                                    { "time_ms", synth_deterministic ? 0.0 : r.time_ms },
                                    { "solved", r.solved } };
        emit( doc.dump( 1 ) + "\n", synth_out );
        if ( !synth_controller.empty() && r.controller )
            write_file_atomic( synth_controller, serialize_controller( *r.controller, *p ) );
    }
    else if ( *oracle )
    {
        const auto p = oracle_instance.load();
        const auto g = full_compose( *p, oracle_cap );
        const auto W = winning_region( g );
        const auto realizable = W[ g.initial() ];
        std::size_t winning = 0;
        for ( NodeId i = 0; i < g.num_nodes(); ++i )
            winning += W[ i ] ? 1 : 0;
        nlohmann::ordered_json doc{ { "instance", p->name() },
                                    { "verdict", to_string( realizable ? VerdictKind::Winning : VerdictKind::Losing ) },
                                    { "states", g.num_nodes() },
                                    { "transitions", g.num_edges() },
                                    { "winning_states", winning } };
        emit( doc.dump( 1 ) + "\n", oracle_out );
        if ( !oracle_controller.empty() && realizable )
            write_file_atomic( oracle_controller, serialize_controller( extract_director( g, W ), *p ) );
    }
    else if ( *compose )
    {
        const auto p = compose_instance.load();
        emit( serialize_graph( full_compose( *p, compose_cap ), *p ), compose_out );
    }
    else if ( *features )
    {
        const auto p = features_instance.load();
        auto policy = make_policy( features_policy, features_seed, features_weights, *p, features_last_target );
        const FeatureOptions fo{ features_last_target };
        auto schema = build_schema( *p );
        if ( features_policy == "agent" )
            schema = load_checkpoint( features_weights ).schema;
        const FeatureExtractor fx( *p, schema, fo );
        Exploration e( p );
        std::string text = dump_feature_layout( schema ) + "\n";
        while ( !e.done() && ( !features_budget || e.expanded() < *features_budget ) )
        {
            text += dump_frontier_features( e, fx ) + "\n";
            e.expand( policy->select( e ) );
        }
        text += nlohmann::ordered_json{ { "step", e.expanded() }, { "verdict", to_string( e.verdict() ) } }.dump() + "\n";
        emit( text, features_out );
    }
    else if ( *train_cmd )
    {
        const auto p = train_instance.load();
        train_cfg.early_stop = !train_no_early_stop;
        train_cfg.features.last_expanded_uses_target = train_last_target;
        const auto r = train( p, train_cfg, train_out );
        std::cout << "trained " << r.steps << " steps, " << r.episodes.size() << " episodes, "
                  << r.checkpoints.size() << " checkpoints in " << train_out << "\n";
    }
    else if ( *select )
    {
        const auto source = select_grid.source();
        select_cfg.rule = parse_pruning_rule( select_rule );
        const auto report = select_agent( list_checkpoints( select_checkpoints ), *source, select_cfg );
        emit( selection_csv( report ), select_out );
        std::cerr << "selected " << report.scores[ report.selected ].path.string() << "\n";
    }
    else if ( *evaluate_cmd )
    {
        const auto source = eval_grid.source();
        eval_cfg.rule = parse_pruning_rule( eval_rule );
        eval_cfg.timeout_s = eval_no_timeout ? std::nullopt : eval_timeout;
        for ( std::size_t s = 0; s < eval_random; ++s )
            eval_cfg.random_seeds.push_back( s );
        std::optional<Checkpoint> agent;
        if ( !eval_weights.empty() )
            agent = load_checkpoint( eval_weights );
        if ( !agent && eval_cfg.random_seeds.empty() && !eval_cfg.bfs && !eval_cfg.lifo )
            throw UsageError( "nothing to evaluate: give --weights or a baseline" );

        std::optional<CsvAppender> csv;
        if ( !eval_out.empty() && eval_out != "-" )
            csv.emplace( eval_out, results_csv_header() );
        else
            std::cout << results_csv_header() << "\n";
        const auto report = evaluate( agent, "agent", *source, eval_cfg, [ & ]( const PolicyRun& run, const InstanceOutcome& o ) {
            const auto row = results_csv_row( source->name(), run.policy, run.seed, o, eval_deterministic );
            if ( csv )
                csv->append( row );
            else
                std::cout << row << "\n" << std::flush;
        } );
        if ( !eval_summary.empty() )
            write_file_atomic( eval_summary, summary_csv( report.summary() ) );
    }
    else if ( *pipeline )
    {
        const auto cfg = parse_pipeline_config( read_file( pipeline_config ) );
        const auto r = run_pipeline( cfg, pipeline_out );
        for ( const auto& [ label, report ] : { std::pair{ "rl", &r.rl }, std::pair{ "rlns", &r.rlns } } )
            for ( const auto& s : report->summary() )
                if ( s.policy == label )
                    std::cout << label << " solved " << format_double( s.solved_mean ) << "\n";
    }
    else if ( *generate )
    {
        const auto p = gen_random ? generate_random( *gen_random, gen_components, gen_states, gen_labels )
                                  : *gen_instance.load();
        emit( serialize_spec( p ), gen_out );
    }
    return exit_ok;
}

} // namespace

int main( int argc, char** argv )
{
    try
    {
        return run( argc, argv );
    }
    catch ( const UsageError& e )
    {
        std::cerr << "usage error: " << e.what() << "\n";
        return exit_usage;
    }
    catch ( const ResourceError& e )
    {
        std::cerr << "resource cap: " << e.what() << "\n";
        return exit_resource;
    }
    catch ( const std::exception& e )
    {
        std::cerr << "error: " << e.what() << "\n";
        return exit_input;
    }
}
