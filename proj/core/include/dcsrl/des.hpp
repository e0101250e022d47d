#pragma once

// Modular discrete-event systems: component automata over a shared alphabet
// and their synchronous product, computed one state at a time.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace dcsrl
{

using LabelId = std::uint32_t;
using LocalState = std::uint32_t;

/// Strips every trailing ".<digits>" segment: "move.2.1" -> "move".
[[nodiscard]] std::string base_label( std::string_view name );

struct EventLabel
{
    std::string name;
    bool controllable = false;
    std::string base;

    friend bool operator==( const EventLabel&, const EventLabel& ) = default;
};

struct LocalTransition
{
    LabelId label;
    LocalState target;

    friend bool operator==( const LocalTransition&, const LocalTransition& ) = default;
};

class ComponentAutomaton
{
public:
    ComponentAutomaton() = default;

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] std::size_t num_states() const { return outgoing_.size(); }
    [[nodiscard]] LocalState initial() const { return initial_; }
    [[nodiscard]] bool is_marked( LocalState s ) const { return marked_[ s ]; }
    /// Sorted label ids.
    [[nodiscard]] std::span<const LabelId> alphabet() const { return alphabet_; }
    [[nodiscard]] bool in_alphabet( LabelId l ) const;
    /// Outgoing transitions of a local state, ascending by label.
    [[nodiscard]] std::span<const LocalTransition> outgoing( LocalState s ) const { return outgoing_[ s ]; }
    [[nodiscard]] std::optional<LocalState> successor( LocalState s, LabelId l ) const;
    [[nodiscard]] std::size_t num_transitions() const;

    friend bool operator==( const ComponentAutomaton&, const ComponentAutomaton& ) = default;

private:
    friend class ProblemBuilder;

    std::string name_;
    std::vector<LabelId> alphabet_;
    std::vector<std::vector<LocalTransition>> outgoing_;
    LocalState initial_ = 0;
    std::vector<bool> marked_;
};

/// A tuple of per-component local states.
struct CompositeState
{
    std::vector<LocalState> locals;

    friend bool operator==( const CompositeState&, const CompositeState& ) = default;
    friend auto operator<=>( const CompositeState&, const CompositeState& ) = default;
};

struct CompositeStateHash
{
    std::size_t operator()( const CompositeState& s ) const noexcept;
};

struct ProblemParams
{
    int n = 0;
    int k = 0;

    friend bool operator==( const ProblemParams&, const ProblemParams& ) = default;
};

struct CompositeTransition
{
    LabelId label;
    CompositeState target;
};

/// The plant E = E1 || ... || En. Immutable once built; label ids follow
/// ascending label name.
class ControlProblem
{
public:
    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::optional<ProblemParams>& params() const { return params_; }
    [[nodiscard]] std::span<const EventLabel> labels() const { return labels_; }
    [[nodiscard]] const EventLabel& label( LabelId id ) const { return labels_[ id ]; }
    [[nodiscard]] std::optional<LabelId> find_label( std::string_view name ) const;
    [[nodiscard]] bool controllable( LabelId id ) const { return labels_[ id ].controllable; }
    [[nodiscard]] std::span<const ComponentAutomaton> components() const { return components_; }
    [[nodiscard]] std::size_t num_components() const { return components_.size(); }
    /// Components whose alphabet contains the label.
    [[nodiscard]] std::span<const std::uint32_t> owners( LabelId id ) const { return owners_[ id ]; }
    /// Sorted distinct base labels of the alphabet.
    [[nodiscard]] std::vector<std::string> base_labels() const;

    [[nodiscard]] CompositeState initial_state() const;

    /// Throws StructuralError when the state does not belong to this problem.
    void check_state( const CompositeState& s ) const;

    friend bool operator==( const ControlProblem& a, const ControlProblem& b )
    {
        return a.name_ == b.name_ && a.params_ == b.params_ && a.labels_ == b.labels_ &&
               a.components_ == b.components_;
    }

private:
    friend class ProblemBuilder;

    std::string name_;
    std::optional<ProblemParams> params_;
    std::vector<EventLabel> labels_;
    std::vector<ComponentAutomaton> components_;
    std::vector<std::vector<std::uint32_t>> owners_;
};

/// Composite transitions enabled at `s`, ascending by label. A label is
/// enabled iff every component owning it can take it; only owners move.
[[nodiscard]] std::vector<CompositeTransition> enabled_transitions( const CompositeState& s,
                                                                    const ControlProblem& p );

/// True iff every component is at a marked local state.
[[nodiscard]] bool is_marked( const CompositeState& s, const ControlProblem& p );

/// Assembles and validates a ControlProblem. Labels and transitions are given
/// by name; ids are assigned at build() time.
class ProblemBuilder
{
public:
    explicit ProblemBuilder( std::string name );

    ProblemBuilder& params( int n, int k );

    /// Declares a label. A second declaration with a different
    /// controllability is recorded and rejected by build().
    ProblemBuilder& label( std::string_view name, bool controllable );

    class Component
    {
    public:
        Component& transition( LocalState src, std::string_view label, LocalState dst );
        /// Adds a label to the alphabet without a transition (blocks it).
        Component& alphabet( std::string_view label );
        /// Alphabet entry that also asserts the label's controllability.
        Component& alphabet( std::string_view label, bool controllable );
        Component& initial( LocalState s );
        Component& mark( LocalState s );

    private:
        friend class ProblemBuilder;

        std::string name_;
        std::size_t num_states_ = 0;
        LocalState initial_ = 0;
        std::vector<LocalState> marked_;
        std::vector<std::string> alphabet_;
        std::vector<std::pair<std::string, bool>> declared_;
        std::vector<std::tuple<LocalState, std::string, LocalState>> transitions_;
    };

    Component& component( std::string name, std::size_t num_states );

    /// Validates determinism, state ranges, label declarations and
    /// controllability consistency; throws SemanticError naming the violation.
    [[nodiscard]] ControlProblem build() &&;

private:
    std::string name_;
    std::optional<ProblemParams> params_;
    std::vector<std::pair<std::string, bool>> declared_;
    std::deque<Component> components_;
};

} // namespace dcsrl
