#pragma once

// Exploration as an episodic task: an action is a frontier transition, every
// expansion costs -1, and the episode ends once the initial state is
// classified. Trained with a replay buffer and a periodically frozen target
// network.

#include "dcsrl/exploration.hpp"
#include "dcsrl/features.hpp"
#include "dcsrl/neural.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace dcsrl
{

struct Experience
{
    FeatureVector taken;
    /// Features of every frontier transition after the step; empty iff terminal.
    std::vector<FeatureVector> next_frontier;
    bool terminal = false;
};

/// Fixed-capacity ring buffer; the oldest experience is overwritten first.
class ReplayBuffer
{
public:
    explicit ReplayBuffer( std::size_t capacity );

    void push( Experience e );
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] bool full() const { return data_.size() == capacity_; }
    /// i-th oldest experience.
    [[nodiscard]] const Experience& at( std::size_t i ) const;

    /// min(n, size()) distinct positions, uniformly at random.
    [[nodiscard]] std::vector<std::size_t> sample( std::mt19937_64& rng, std::size_t n ) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Experience> data_;
};

struct TrainConfig
{
    /// Minimum number of training steps; with early_stop off, the exact number.
    std::uint64_t total_steps = 500'000;
    double epsilon_start = 1.0;
    double epsilon_end = 0.01;
    std::uint64_t epsilon_decay_steps = 250'000;
    std::size_t batch_size = 10;
    std::size_t buffer_capacity = 10'000;
    std::uint64_t target_reset_every = 10'000;
    std::uint64_t checkpoint_every = 5'000;
    std::size_t hidden = default_hidden;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    /// Past total_steps, keep training while the best episode improved
    /// within the last third of the steps taken.
    bool early_stop = true;
    /// Random-policy steps stored before training (at least one episode,
    /// never more than buffer_capacity).
    std::uint64_t prefill_min_steps = 1'000;
    FeatureOptions features;

    /// Throws UsageError unless every count is positive, 0 <= epsilon_end <=
    /// epsilon_start <= 1 and the optimizer settings are valid.
    void validate() const;

    friend bool operator==( const TrainConfig&, const TrainConfig& ) = default;
};

/// Linear from epsilon_start at step 0 to epsilon_end at epsilon_decay_steps,
/// then constant.
[[nodiscard]] double epsilon( std::uint64_t step, const TrainConfig& cfg );

/// -1 if terminal, else -1 + max over next_frontier of target(x).
[[nodiscard]] double td_target( const QNetwork& target, const Experience& e );

/// Index of the maximal Q value; ties go to the lowest index, which is the
/// earliest frontier insertion. Throws UsageError on an empty set.
[[nodiscard]] std::size_t greedy_action( const QNetwork& q, const std::vector<FeatureVector>& candidates );
[[nodiscard]] std::size_t greedy_action( const QNetwork& q, const Exploration& e, const FeatureExtractor& fx );

/// One episode of the task. Reward per step is -1.
class SynthesisEnv
{
public:
    explicit SynthesisEnv( std::shared_ptr<const ControlProblem> problem, ExplorationOptions options = {} );

    void reset();
    /// Expands frontier()[index]; returns the reward. UsageError if terminal.
    double step( std::size_t index );

    [[nodiscard]] bool terminal() const { return exploration_->done(); }
    [[nodiscard]] double accumulated_reward() const { return -static_cast<double>( exploration_->expanded() ); }
    [[nodiscard]] const Exploration& exploration() const { return *exploration_; }

private:
    std::shared_ptr<const ControlProblem> problem_;
    ExplorationOptions options_;
    std::optional<Exploration> exploration_;
};

/// Greedy (epsilon = 0) policy of a trained network. Q values are memoized
/// per feature vector; the network never changes during the policy's life.
class AgentPolicy final : public ExplorationPolicy
{
public:
    AgentPolicy( QNetwork q, const ControlProblem& p, const FeatureSchema& schema, FeatureOptions options = {} );

    std::size_t select( const Exploration& e ) override;
    std::string name() const override { return "agent"; }

    [[nodiscard]] const QNetwork& network() const { return q_; }

private:
    QNetwork q_;
    FeatureExtractor fx_;
    FeatureVector scratch_;
    std::unordered_map<std::string, double> cache_;
};

struct EpisodeRecord
{
    std::uint64_t episode;
    std::uint64_t end_step;
    std::uint64_t expansions;
    double epsilon;

    friend bool operator==( const EpisodeRecord&, const EpisodeRecord& ) = default;
};

struct TrainResult
{
    /// Checkpoint files in step order, starting with step 0.
    std::vector<std::filesystem::path> checkpoints;
    std::vector<EpisodeRecord> episodes;
    std::uint64_t steps = 0;
    std::size_t prefill_steps = 0;
    QNetwork network;
};

[[nodiscard]] std::string checkpoint_file_name( std::uint64_t step );

/// CSV "episode,end_step,expansions,epsilon".
[[nodiscard]] std::string format_training_log( const std::vector<EpisodeRecord>& episodes );

/// Trains on repeated episodes of `problem`. Writes out_dir/checkpoints/ and
/// out_dir/training_log.csv. Throws DivergenceError on non-finite weights,
/// after writing the log; earlier checkpoints are kept.
TrainResult train( std::shared_ptr<const ControlProblem> problem, const TrainConfig& cfg,
                   const std::filesystem::path& out_dir );

} // namespace dcsrl
