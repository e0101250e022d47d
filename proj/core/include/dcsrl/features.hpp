#pragma once

// Boolean abstraction of one frontier transition. The vocabulary is the set
// of base labels (indices stripped), so every instance of a domain shares
// the same schema and a network trained on one instance evaluates on all.

#include "dcsrl/exploration.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dcsrl
{

using FeatureVector = std::vector<std::uint8_t>;

struct FeatureBlock
{
    std::string name;
    std::size_t offset;
    std::size_t size;
};

class FeatureSchema
{
public:
    FeatureSchema() = default;
    explicit FeatureSchema( std::vector<std::string> base_labels );

    [[nodiscard]] const std::vector<std::string>& base_labels() const { return base_labels_; }
    [[nodiscard]] std::size_t num_labels() const { return base_labels_.size(); }
    [[nodiscard]] std::size_t dimension() const { return 2 * base_labels_.size() + 17; }
    /// Position of `base` in base_labels(); throws SchemaMismatch if absent.
    [[nodiscard]] std::size_t index_of( std::string_view base ) const;

    [[nodiscard]] std::size_t event_offset() const { return 0; }
    [[nodiscard]] std::size_t incoming_offset() const { return num_labels(); }
    [[nodiscard]] std::size_t controllable_offset() const { return 2 * num_labels(); }
    [[nodiscard]] std::size_t marked_offset() const { return controllable_offset() + 1; }
    [[nodiscard]] std::size_t phase_offset() const { return marked_offset() + 2; }
    [[nodiscard]] std::size_t child_offset() const { return phase_offset() + 3; }
    [[nodiscard]] std::size_t uncontrollable_offset() const { return child_offset() + 3; }
    [[nodiscard]] std::size_t explored_offset() const { return uncontrollable_offset() + 4; }
    [[nodiscard]] std::size_t last_expanded_offset() const { return explored_offset() + 2; }

    /// Named blocks in layout order; sizes sum to dimension().
    [[nodiscard]] std::vector<FeatureBlock> blocks() const;

    friend bool operator==( const FeatureSchema&, const FeatureSchema& ) = default;

private:
    std::vector<std::string> base_labels_;
};

/// Sorted distinct base labels of the problem alphabet.
[[nodiscard]] FeatureSchema build_schema( const ControlProblem& p );

struct FeatureOptions
{
    /// Compare the target (instead of the source) of the candidate against
    /// the endpoints of the last expanded transition.
    bool last_expanded_uses_target = false;

    friend bool operator==( const FeatureOptions&, const FeatureOptions& ) = default;
};

/// Caches the label -> vocabulary mapping of one problem under one schema.
class FeatureExtractor
{
public:
    /// Throws SchemaMismatch if some label of `p` has no base in `schema`.
    FeatureExtractor( const ControlProblem& p, FeatureSchema schema, FeatureOptions options = {} );

    [[nodiscard]] const FeatureSchema& schema() const { return schema_; }
    [[nodiscard]] const FeatureOptions& options() const { return options_; }

    /// Features of transition `t`, which must be in the frontier of `e`
    /// (UsageError otherwise). Writes into `out`, resized to dimension().
    void compute( const Exploration& e, TransitionId t, FeatureVector& out ) const;
    [[nodiscard]] FeatureVector compute( const Exploration& e, TransitionId t ) const;

    /// Features of every frontier transition, in frontier order.
    [[nodiscard]] std::vector<FeatureVector> frontier_features( const Exploration& e ) const;

private:
    FeatureSchema schema_;
    FeatureOptions options_;
    std::vector<std::uint32_t> base_index_;
};

/// One-shot convenience wrapper around FeatureExtractor.
[[nodiscard]] FeatureVector compute_features( const Exploration& e, TransitionId t, const FeatureSchema& schema,
                                              const FeatureOptions& options = {} );

/// "0110..." rendering; blocks separated by '|'.
[[nodiscard]] std::string format_features( const FeatureVector& v, const FeatureSchema& schema );

/// One-line JSON description of the block layout.
[[nodiscard]] std::string dump_feature_layout( const FeatureSchema& schema );

/// One-line JSON row set for the current frontier: step, and per frontier
/// transition its endpoints, label and formatted bits.
[[nodiscard]] std::string dump_frontier_features( const Exploration& e, const FeatureExtractor& fx );

} // namespace dcsrl
