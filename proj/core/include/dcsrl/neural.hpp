#pragma once

// One-hidden-layer rectifier network with a scalar output, trained by
// momentum SGD on mean squared error.

#include "dcsrl/features.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dcsrl
{

inline constexpr std::size_t default_hidden = 20;

/// out = b2 + W2 . max(0, W1 x + b1); W1 is row-major hidden x d_in.
struct QNetwork
{
    std::size_t d_in = 0;
    std::size_t hidden = 0;
    std::vector<double> W1;
    std::vector<double> b1;
    std::vector<double> W2;
    double b2 = 0.0;

    [[nodiscard]] bool finite() const;

    friend bool operator==( const QNetwork&, const QNetwork& ) = default;
};

/// Uniform weights in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
[[nodiscard]] QNetwork init_network( std::size_t d_in, std::uint64_t seed, std::size_t hidden = default_hidden );

/// Both throw UsageError on a dimension mismatch. The 0/1 overload only
/// touches the columns of set bits.
[[nodiscard]] double forward( const QNetwork& q, std::span<const double> x );
[[nodiscard]] double forward( const QNetwork& q, std::span<const std::uint8_t> bits );

struct Sample
{
    std::span<const std::uint8_t> x;
    double target;
};

struct DenseSample
{
    std::span<const double> x;
    double target;
};

/// Parameter-shaped buffer (gradients, optimizer velocities).
struct Gradient
{
    std::vector<double> W1;
    std::vector<double> b1;
    std::vector<double> W2;
    double b2 = 0.0;

    friend bool operator==( const Gradient&, const Gradient& ) = default;
};

[[nodiscard]] Gradient zero_gradient( const QNetwork& q );

/// (1/|batch|) sum (forward(x) - target)^2.
[[nodiscard]] double mse_loss( const QNetwork& q, std::span<const Sample> batch );
[[nodiscard]] double mse_loss( const QNetwork& q, std::span<const DenseSample> batch );

/// Gradient of mse_loss with respect to every parameter; weight decay is not
/// included.
[[nodiscard]] Gradient mse_gradient( const QNetwork& q, std::span<const Sample> batch );
[[nodiscard]] Gradient mse_gradient( const QNetwork& q, std::span<const DenseSample> batch );

struct OptimizerConfig
{
    double learning_rate = 1e-5;
    double weight_decay = 1e-4;
    double momentum = 0.9;

    friend bool operator==( const OptimizerConfig&, const OptimizerConfig& ) = default;
};

/// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v.
/// Biases take no weight decay.
class Optimizer
{
public:
    Optimizer() = default;
    Optimizer( const QNetwork& q, OptimizerConfig config );

    [[nodiscard]] const OptimizerConfig& config() const { return config_; }
    [[nodiscard]] const Gradient& velocity() const { return velocity_; }
    Gradient& velocity() { return velocity_; }

    void step( QNetwork& q, const Gradient& g );

    friend bool operator==( const Optimizer&, const Optimizer& ) = default;

private:
    OptimizerConfig config_;
    Gradient velocity_;
};

/// One optimizer step on the batch; returns the pre-step loss. Throws
/// DivergenceError (leaving `q` untouched) if the loss or the updated
/// weights are not finite, UsageError for an empty batch.
double batch_update( QNetwork& q, Optimizer& opt, std::span<const Sample> batch );

inline constexpr int checkpoint_version = 1;

struct Checkpoint
{
    QNetwork network;
    Optimizer optimizer;
    FeatureSchema schema;
    std::uint64_t step = 0;
};

/// Atomic JSON write. Doubles use shortest round-trip formatting, so a
/// reload reproduces every weight exactly.
void save_checkpoint( const std::filesystem::path& path, const Checkpoint& c );
[[nodiscard]] std::string serialize_checkpoint( const Checkpoint& c );

/// Throws CheckpointError for unreadable, malformed or version-mismatched
/// files.
[[nodiscard]] Checkpoint load_checkpoint( const std::filesystem::path& path );
[[nodiscard]] Checkpoint parse_checkpoint( std::string_view text );

/// As load_checkpoint, additionally throwing SchemaMismatch unless the stored
/// schema equals `expected`.
[[nodiscard]] Checkpoint load_checkpoint( const std::filesystem::path& path, const FeatureSchema& expected );

} // namespace dcsrl
