#pragma once

// JSON interchange format for modular control problems, plus the parametric
// benchmark domains and a seeded random generator for fuzzing.
//
// Document layout:
//
//   {
//     "name": "...",
//     "labels": [ { "name": "start.1", "controllable": true }, ... ],
//     "components": [
//       { "name": "machine.1",               (optional)
//         "states": 2,
//         "initial": 0,
//         "marked": [0],
//         "alphabet": ["start.1", ...],      (optional; labels without
//                                             transitions block them)
//         "transitions": [[0, "start.1", 1], ...] }
//     ],
//     "params": { "n": 2, "k": 2 }           (optional)
//   }
//
// An alphabet entry may also be an object {"name", "controllable"}; every
// declaration of a label must agree on its controllability.

#include "dcsrl/des.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dcsrl
{

/// Throws ParseError (with line/column) or SemanticError.
[[nodiscard]] ControlProblem parse_spec( std::string_view document );
[[nodiscard]] ControlProblem load_spec( const std::filesystem::path& path );

[[nodiscard]] std::string serialize_spec( const ControlProblem& p );
void save_spec( const ControlProblem& p, const std::filesystem::path& path );

enum class Domain
{
    TransferLine,
    DiningPhilosophers,
    CraftedGate,
    Random,
};

[[nodiscard]] std::string to_string( Domain d );
/// Accepts the enumerator names and short forms (tl, dp, cg, random).
[[nodiscard]] Domain parse_domain( std::string_view name );

/// Largest n or k accepted by generate_instance.
inline constexpr int max_instance_parameter = 1000;

/// Parametric instance of a benchmark domain. Indexes appear only as ".i"
/// suffixes so the base-label set is independent of (n, k).
///
///  - TransferLine: n machines in series separated by capacity-k buffers; a
///    test unit at the end accepts parts or returns them to the first
///    buffer. Overflowing a buffer reaches a dead error state.
///  - DiningPhilosophers: n philosophers sharing forks in a ring; after
///    eating a philosopher performs k etiquette steps before releasing.
///  - CraftedGate: n clients issue uncontrollable requests; a server can
///    serve at most k of them before a reset, which is only possible when no
///    request is pending. Realizable iff n <= k.
///
/// Throws UsageError for n or k outside [1, max_instance_parameter] or for
/// Domain::Random.
[[nodiscard]] ControlProblem generate_instance( Domain d, int n, int k );

/// Seeded random problem: 1..max_components components with 1..max_states
/// states over a pool of 1..max_labels labels. Every component has at least
/// one transition.
[[nodiscard]] ControlProblem generate_random( std::uint64_t seed, int max_components, int max_states,
                                              int max_labels );

} // namespace dcsrl
