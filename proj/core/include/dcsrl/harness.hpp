#pragma once

// Experiment protocol: train on one small instance, pick the checkpoint that
// generalizes best over a grid of larger instances under a small transition
// budget, then evaluate it (and baselines) under a wall-clock budget.

#include "dcsrl/exploration.hpp"
#include "dcsrl/neural.hpp"
#include "dcsrl/rl.hpp"
#include "dcsrl/spec_io.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dcsrl
{

/// Family of instances indexed by (n, k).
class InstanceSource
{
public:
    virtual ~InstanceSource() = default;

    [[nodiscard]] virtual std::string name() const = 0;
    /// nullptr when the family has no instance at (n, k).
    [[nodiscard]] virtual std::shared_ptr<const ControlProblem> instance( int n, int k ) const = 0;
};

class GeneratorSource final : public InstanceSource
{
public:
    explicit GeneratorSource( Domain d );
    std::string name() const override { return to_string( domain_ ); }
    std::shared_ptr<const ControlProblem> instance( int n, int k ) const override;

private:
    Domain domain_;
};

/// Every *.json spec in a directory that carries params {n, k}. Throws
/// SemanticError on two files with the same parameters.
class SpecDirectorySource final : public InstanceSource
{
public:
    explicit SpecDirectorySource( const std::filesystem::path& dir );
    std::string name() const override { return name_; }
    std::shared_ptr<const ControlProblem> instance( int n, int k ) const override;

private:
    std::string name_;
    std::map<std::pair<int, int>, std::shared_ptr<const ControlProblem>> instances_;
};

/// Which already-solved instances unlock (n, k).
enum class PruningRule
{
    /// (n-1, k) and (n, k-1).
    Neighbors,
    /// (n-1, k) and (k-1, n).
    Literal,
};

[[nodiscard]] PruningRule parse_pruning_rule( std::string_view s );
[[nodiscard]] std::string to_string( PruningRule r );

struct InstanceOutcome
{
    int n = 0;
    int k = 0;
    VerdictKind verdict = VerdictKind::Unknown;
    std::size_t expanded = 0;
    double time_ms = 0.0;
    bool solved = false;

    friend bool operator==( const InstanceOutcome&, const InstanceOutcome& ) = default;
};

/// Visits (n, k) in nondecreasing n + k (then increasing n), attempting an
/// instance only if the rule's neighbors were solved; neighbors with a zero
/// coordinate do not exist. Stops after a diagonal with no attempt, or past
/// the bounds. `attempt` returns nullopt when there is no such instance.
[[nodiscard]] std::vector<InstanceOutcome> walk_grid(
    int max_n, int max_k, PruningRule rule, const std::function<std::optional<InstanceOutcome>( int n, int k )>& attempt );

/// Evenly spaced positions over `total` items, first and last included; all
/// of them when total <= count, only the last when count == 1. Throws
/// UsageError for total == 0 or count == 0.
[[nodiscard]] std::vector<std::size_t> sample_checkpoints( std::size_t total, std::size_t count = 100 );

struct CheckpointScore
{
    std::filesystem::path path;
    std::uint64_t step = 0;
    std::size_t solved = 0;
    std::size_t total_expanded = 0;
    std::vector<InstanceOutcome> outcomes;
};

struct SelectionConfig
{
    std::size_t sample_count = 100;
    int max_n = 15;
    int max_k = 15;
    std::size_t budget = 5'000;
    PruningRule rule = PruningRule::Neighbors;
    std::size_t jobs = 1;
    FeatureOptions features;

    friend bool operator==( const SelectionConfig&, const SelectionConfig& ) = default;
};

struct SelectionReport
{
    std::vector<CheckpointScore> scores;
    /// Index into scores.
    std::size_t selected = 0;
};

/// Most solved; ties by least total expanded, then earliest in the list.
[[nodiscard]] std::size_t select_best( const std::vector<CheckpointScore>& scores );

/// Greedy play of one checkpoint over the grid, each instance capped at
/// cfg.budget expansions. Throws SchemaMismatch if the network cannot read
/// an instance of the source.
[[nodiscard]] CheckpointScore score_checkpoint( const Checkpoint& c, const std::filesystem::path& path,
                                                const InstanceSource& source, const SelectionConfig& cfg );

/// Scores a sample of `checkpoints` (in step order) and applies select_best.
[[nodiscard]] SelectionReport select_agent( const std::vector<std::filesystem::path>& checkpoints,
                                            const InstanceSource& source, const SelectionConfig& cfg );

struct RewardEntry
{
    std::filesystem::path path;
    std::uint64_t step = 0;
    /// -expansions of a greedy episode; nullopt if the budget ran out.
    std::optional<double> reward;
};

/// Greedy reward of every checkpoint on the training instance.
[[nodiscard]] std::vector<RewardEntry> training_rewards( const std::vector<std::filesystem::path>& checkpoints,
                                                         std::shared_ptr<const ControlProblem> training_instance,
                                                         std::size_t budget, const FeatureOptions& features = {} );

/// Highest reward, ties to the latest entry. Throws UsageError if empty.
[[nodiscard]] std::size_t select_by_reward( const std::vector<RewardEntry>& entries );

struct EvaluationConfig
{
    /// Per-instance wall-clock limit; nullopt disables it.
    std::optional<double> timeout_s = 600.0;
    std::optional<std::size_t> budget;
    /// Unset bounds stop only at the first fully pruned diagonal.
    std::optional<int> max_n;
    std::optional<int> max_k;
    PruningRule rule = PruningRule::Neighbors;
    std::vector<std::uint64_t> random_seeds;
    bool bfs = false;
    bool lifo = false;
    FeatureOptions features;

    friend bool operator==( const EvaluationConfig&, const EvaluationConfig& ) = default;
};

struct PolicyRun
{
    std::string policy;
    std::uint64_t seed = 0;
    std::vector<InstanceOutcome> outcomes;
    std::size_t solved = 0;
};

struct PolicySummary
{
    std::string policy;
    std::size_t runs = 0;
    double solved_mean = 0.0;
    double solved_std = 0.0;
};

struct EvaluationReport
{
    std::vector<PolicyRun> runs;

    /// One row per policy name; std is the sample standard deviation (0 for
    /// a single run).
    [[nodiscard]] std::vector<PolicySummary> summary() const;
};

/// Plays the agent (if given) and the requested baselines over the grid.
/// The random baseline for seed s on (n, k) uses its own stream derived from
/// (s, n, k). Rows stream to `on_row` as they are produced.
[[nodiscard]] EvaluationReport evaluate( const std::optional<Checkpoint>& agent, const std::string& agent_label,
                                         const InstanceSource& source, const EvaluationConfig& cfg,
                                         const std::function<void( const PolicyRun&, const InstanceOutcome& )>& on_row =
                                             {} );

// ---------------------------------------------------------------------------
// CSV

[[nodiscard]] std::string results_csv_header();
[[nodiscard]] std::string results_csv_row( const std::string& domain, const std::string& policy, std::uint64_t seed,
                                           const InstanceOutcome& o, bool deterministic );
[[nodiscard]] std::string summary_csv( const std::vector<PolicySummary>& rows );
[[nodiscard]] std::string selection_csv( const SelectionReport& r );

/// Appends lines and flushes after each, so an interrupted run leaves a
/// valid prefix. Truncates on open.
class CsvAppender
{
public:
    CsvAppender( const std::filesystem::path& path, const std::string& header );
    void append( const std::string& line );

private:
    std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig
{
    std::string domain;
    /// Instance directory used instead of the generator when set.
    std::optional<std::filesystem::path> spec_dir;
    int train_n = 2;
    int train_k = 2;
    TrainConfig train;
    SelectionConfig selection;
    EvaluationConfig evaluation;
    bool deterministic = false;
};

/// JSON object with "domain" (or "spec_dir"), optional "train_instance"
/// [n, k], and sections "train", "selection", "evaluation". Missing keys keep
/// their defaults; a missing "selection" section is a UsageError.
[[nodiscard]] PipelineConfig parse_pipeline_config( std::string_view json );

struct PipelineReport
{
    std::vector<std::filesystem::path> checkpoints;
    SelectionReport selection;
    std::vector<RewardEntry> rewards;
    std::size_t reward_selected = 0;
    EvaluationReport rl;
    EvaluationReport rlns;
};

/// train -> sample -> select -> evaluate, plus the reward-selected ablation.
/// Writes under out_dir: train/, selection.csv, results_rl.csv,
/// results_rlns.csv, summary.csv. Artifacts of finished stages are kept if a
/// later stage throws.
PipelineReport run_pipeline( const PipelineConfig& cfg, const std::filesystem::path& out_dir );

[[nodiscard]] std::unique_ptr<InstanceSource> make_source( const std::string& domain,
                                                           const std::optional<std::filesystem::path>& spec_dir );

} // namespace dcsrl
