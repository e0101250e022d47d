#pragma once

// On-the-fly exploration of the composed plant. Transitions are added one at
// a time from the frontier; after each addition every discovered state is
// classified as winning (assuming unexplored transitions lose), losing
// (assuming they win) or neither. The run ends once the initial state is
// classified.

#include "dcsrl/des.hpp"
#include "dcsrl/oracle.hpp"

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dcsrl
{

using StateId = std::uint32_t;
using TransitionId = std::uint32_t;

/// Label carried by the self-loop of the optimistic sink in augmented graphs.
inline constexpr LabelId sink_label = 0xffffffffU;

enum class StateStatus : std::uint8_t
{
    Unknown,
    Winning,
    Losing,
};

/// A plant transition known to the exploration. Its id is the order in which
/// it entered the frontier.
struct TransitionRef
{
    StateId source;
    LabelId label;
    StateId target;
    std::uint32_t insertion_index;
    bool expanded = false;
};

/// Per-state bookkeeping. States become known when a transition into them
/// enters the frontier; they are discovered once reached by an expansion (or
/// are initial), at which point their enabled transitions are computed.
struct ExploredState
{
    CompositeState composite;
    bool marked = false;
    bool discovered = false;
    StateStatus status = StateStatus::Unknown;
    std::vector<TransitionId> outgoing;
    std::vector<TransitionId> incoming_expanded;
    std::uint32_t expanded_outgoing = 0;
    std::uint32_t uncontrollable_outgoing = 0;
    std::uint32_t uncontrollable_expanded = 0;
};

struct PhaseFlags
{
    bool marked_found = false;
    bool winning_set_nonempty = false;
    bool marked_cycle_closed = false;

    friend bool operator==( const PhaseFlags&, const PhaseFlags& ) = default;
};

enum class ClassificationMode
{
    /// Re-solves only the unclassified states that can reach the expanded
    /// transition, with classified states collapsed into sinks.
    Incremental,
    /// Re-solves both augmented graphs from scratch after every expansion.
    Recompute,
};

struct ExplorationOptions
{
    ClassificationMode mode = ClassificationMode::Incremental;
    /// When false, expand() keeps accepting transitions after the verdict
    /// (used to check that verdicts are stable).
    bool stop_at_verdict = true;
};

class Exploration
{
public:
    explicit Exploration( std::shared_ptr<const ControlProblem> problem, ExplorationOptions options = {} );

    [[nodiscard]] const ControlProblem& problem() const { return *problem_; }
    [[nodiscard]] const std::shared_ptr<const ControlProblem>& problem_ptr() const { return problem_; }

    [[nodiscard]] StateId initial() const { return 0; }
    [[nodiscard]] VerdictKind verdict() const;
    [[nodiscard]] bool done() const { return verdict() != VerdictKind::Unknown; }

    /// Unexpanded transitions leaving discovered states, in insertion order.
    [[nodiscard]] std::span<const TransitionId> frontier() const { return frontier_; }
    /// Expanded transitions in expansion order.
    [[nodiscard]] std::span<const TransitionId> history() const { return history_; }
    [[nodiscard]] std::size_t expanded() const { return history_.size(); }

    [[nodiscard]] const TransitionRef& transition( TransitionId t ) const { return transitions_[ t ]; }
    [[nodiscard]] std::size_t num_transitions() const { return transitions_.size(); }
    [[nodiscard]] const ExploredState& state( StateId s ) const { return states_[ s ]; }
    [[nodiscard]] std::size_t num_states() const { return states_.size(); }
    [[nodiscard]] std::optional<StateId> find( const CompositeState& s ) const;

    [[nodiscard]] const PhaseFlags& phase_flags() const { return phase_; }
    [[nodiscard]] std::optional<TransitionId> last_expanded() const { return last_expanded_; }
    [[nodiscard]] std::size_t winning_count() const { return winning_count_; }
    [[nodiscard]] std::size_t losing_count() const { return losing_count_; }

    /// Moves frontier()[frontier_index] into the history and reclassifies.
    /// Throws UsageError for a bad index, or once a verdict is reached unless
    /// stop_at_verdict is off.
    void expand( std::size_t frontier_index );

private:
    StateId intern( CompositeState s );
    void discover( StateId s );
    void update_marked_cycle( StateId source, StateId target );
    void classify_incremental( StateId source, StateId target );
    void classify_recompute();
    void set_status( StateId s, StateStatus status );

    std::shared_ptr<const ControlProblem> problem_;
    ExplorationOptions options_;
    std::vector<ExploredState> states_;
    std::vector<TransitionRef> transitions_;
    std::unordered_map<CompositeState, StateId, CompositeStateHash> ids_;
    std::vector<TransitionId> frontier_;
    std::vector<TransitionId> history_;
    PhaseFlags phase_;
    std::optional<TransitionId> last_expanded_;
    std::size_t winning_count_ = 0;
    std::size_t losing_count_ = 0;
    std::vector<std::int32_t> scratch_;
};

/// Sorted ids of discovered states classified winning and losing.
struct Classification
{
    std::vector<StateId> winning;
    std::vector<StateId> losing;

    friend bool operator==( const Classification&, const Classification& ) = default;
};

/// The explored graph over discovered states with every frontier transition
/// redirected to one unmarked dead sink. Node i < states.size() is the i-th
/// discovered state in id order; the sink is the last node.
[[nodiscard]] ExplicitGraph pessimistic_graph( const Exploration& e );

/// As pessimistic_graph, but the sink is marked and carries a controllable
/// self-loop (labelled sink_label).
[[nodiscard]] ExplicitGraph optimistic_graph( const Exploration& e );

/// Classification from scratch: winning region of the pessimistic graph and
/// complement of the winning region of the optimistic graph.
[[nodiscard]] Classification classify_partial( const Exploration& e );

/// The statuses currently held by the exploration, in the same form.
[[nodiscard]] Classification current_classification( const Exploration& e );

/// Director over the winning states of the pessimistic graph. It never
/// enables a frontier transition. Throws UsageError unless the initial state
/// is winning.
[[nodiscard]] Controller build_controller( const Exploration& e );

// ---------------------------------------------------------------------------
// Policies

class ExplorationPolicy
{
public:
    virtual ~ExplorationPolicy() = default;

    /// Index into e.frontier(); only called with a non-empty frontier.
    [[nodiscard]] virtual std::size_t select( const Exploration& e ) = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

class RandomPolicy final : public ExplorationPolicy
{
public:
    explicit RandomPolicy( std::uint64_t seed ) : rng_{ seed } {}
    std::size_t select( const Exploration& e ) override;
    std::string name() const override { return "random"; }

private:
    std::mt19937_64 rng_;
};

/// Oldest frontier transition first.
class BfsPolicy final : public ExplorationPolicy
{
public:
    std::size_t select( const Exploration& e ) override;
    std::string name() const override { return "bfs"; }
};

/// Newest frontier transition first.
class LifoPolicy final : public ExplorationPolicy
{
public:
    std::size_t select( const Exploration& e ) override;
    std::string name() const override { return "lifo"; }
};

struct SynthesisOptions
{
    std::optional<std::size_t> budget;
    std::optional<std::chrono::duration<double>> timeout;
    bool build_controller = true;
    ExplorationOptions exploration;
};

struct SynthesisResult
{
    VerdictKind verdict = VerdictKind::Unknown;
    std::size_t expanded = 0;
    double time_ms = 0.0;
    bool solved = false;
    std::optional<Controller> controller;
};

/// Select-expand loop until a verdict, the budget or the timeout. Budget and
/// timeout exhaustion leave the result unsolved.
[[nodiscard]] SynthesisResult run_synthesis( std::shared_ptr<const ControlProblem> problem, ExplorationPolicy& policy,
                                             const SynthesisOptions& options = {} );

} // namespace dcsrl
