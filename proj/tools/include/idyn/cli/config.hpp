#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "idyn/examples.hpp"
#include "idyn/stability.hpp"

namespace idyn::cli {

/// Schema violation or unusable parameter in a run configuration.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Scalar time signal. `frequency` is angular (rad/s).
struct Waveform {
    enum class Kind { Zero, Sine, Constant };
    Kind kind = Kind::Zero;
    double amplitude = 0.0;
    double frequency = 0.0;
    double value = 0.0;

    double at(double t) const;
    double derivative(double t) const;
    /// Integral over [0, t].
    double integral(double t) const;
};

/// Output trajectory given either as y(t) waveforms or as y'(t) waveforms
/// integrated from y0.
struct SignalSpec {
    std::vector<Waveform> channels;  ///< one per output, or a single shared entry
    bool derivative = false;
    std::vector<double> y0;

    OutputSignal build(int m) const;
};

struct SystemSpec {
    std::string name;  ///< "manipulator" or "mass-on-car"
    examples::ManipulatorParams manipulator;
    examples::MassOnCarParams mass_on_car;
};

struct MapConfig {
    std::string coordinates = "orthonormal";  ///< or "joint" (manipulator)
    std::optional<double> lambda;
    std::optional<std::vector<double>> q0;
};

struct DecoupleConfig {
    MapConfig map;
    std::vector<std::vector<double>> samples;
    std::size_t random_samples = 0;
    double sample_radius = 3.141592653589793;
};

struct SimulateConfig {
    MapConfig map;
    double t0 = 0.0;
    double t1 = 10.0;
    double dt = 1e-3;
    std::optional<std::vector<double>> q;
    std::optional<std::vector<double>> v;
    std::optional<std::vector<double>> eta0;
    std::vector<Waveform> input;  ///< one per input, or a single shared entry
    SignalSpec output;
};

struct BoundednessConfig {
    std::vector<double> eta0;
    double horizon = 50.0;
    double dt = 1e-2;
    SignalSpec output;
    std::optional<double> r3;
};

struct StabilityConfig {
    double lambda = 1.0;
    double q_weight = 0.1;
    double r1 = 0.0;
    double r2 = 0.0;
    std::size_t samples = 10000;
    double z_max = 10.0;
    double w_max = 0.0;
    std::size_t ball_points = 1000;
    std::optional<BoundednessConfig> boundedness;
};

struct RunConfig {
    SystemSpec system;
    std::uint64_t seed = 0;
    std::optional<std::string> output;
    DecoupleConfig decouple;
    SimulateConfig simulate;
    StabilityConfig stability;
};

/// Parses and validates a JSON document; unknown keys are rejected.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

}  // namespace idyn::cli
