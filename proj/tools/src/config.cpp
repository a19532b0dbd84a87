#include "idyn/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace idyn::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& ctx, const std::string& what) { throw ConfigError(ctx + ": " + what); }

void expect_object(const json& j, const std::string& ctx) {
    if (!j.is_object()) fail(ctx, "expected an object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
    expect_object(j, ctx);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) fail(ctx, "unknown key '" + it.key() + "'");
    }
}

double number(const json& j, const std::string& ctx) {
    if (!j.is_number()) fail(ctx, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(ctx, "expected a finite number");
    return v;
}

void read(const json& j, const char* key, double& dst, const std::string& ctx) {
    if (j.contains(key)) dst = number(j.at(key), ctx + "." + key);
}

void read_count(const json& j, const char* key, std::size_t& dst, const std::string& ctx) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(ctx + "." + key, "expected a nonnegative integer");
    dst = v.get<std::size_t>();
}

std::vector<double> vector_of(const json& j, const std::string& ctx) {
    if (!j.is_array()) fail(ctx, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], ctx + "[" + std::to_string(i) + "]"));
    return out;
}

std::optional<std::vector<double>> optional_vector(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) return std::nullopt;
    return vector_of(j.at(key), ctx + "." + key);
}

Waveform parse_waveform(const json& j, const std::string& ctx) {
    Waveform w;
    if (j.is_string()) {
        if (j.get<std::string>() != "zero") fail(ctx, "only \"zero\" may be given as a bare string");
        return w;
    }
    expect_object(j, ctx);
    if (!j.contains("type") || !j.at("type").is_string()) fail(ctx, "missing string key 'type'");
    const std::string type = j.at("type").get<std::string>();
    if (type == "zero") {
        check_keys(j, {"type"}, ctx);
    } else if (type == "sine") {
        check_keys(j, {"type", "amplitude", "frequency"}, ctx);
        if (!j.contains("amplitude") || !j.contains("frequency")) fail(ctx, "sine needs amplitude and frequency");
        w.kind = Waveform::Kind::Sine;
        read(j, "amplitude", w.amplitude, ctx);
        read(j, "frequency", w.frequency, ctx);
    } else if (type == "constant") {
        check_keys(j, {"type", "value"}, ctx);
        if (!j.contains("value")) fail(ctx, "constant needs value");
        w.kind = Waveform::Kind::Constant;
        read(j, "value", w.value, ctx);
    } else {
        fail(ctx, "unknown waveform type '" + type + "' (zero, sine, constant)");
    }
    return w;
}

std::vector<Waveform> parse_waveforms(const json& j, const std::string& ctx) {
    std::vector<Waveform> out;
    if (j.is_array()) {
        if (j.empty()) fail(ctx, "empty waveform list");
        for (std::size_t i = 0; i < j.size(); ++i)
            out.push_back(parse_waveform(j[i], ctx + "[" + std::to_string(i) + "]"));
    } else {
        out.push_back(parse_waveform(j, ctx));
    }
    return out;
}

SignalSpec parse_signal(const json& j, const std::string& ctx) {
    check_keys(j, {"y", "dy", "y0"}, ctx);
    SignalSpec s;
    const bool has_y = j.contains("y");
    const bool has_dy = j.contains("dy");
    if (has_y == has_dy) fail(ctx, "give exactly one of 'y' or 'dy'");
    if (has_y) {
        if (j.contains("y0")) fail(ctx, "'y0' only applies together with 'dy'");
        s.channels = parse_waveforms(j.at("y"), ctx + ".y");
    } else {
        s.derivative = true;
        s.channels = parse_waveforms(j.at("dy"), ctx + ".dy");
        if (j.contains("y0")) s.y0 = vector_of(j.at("y0"), ctx + ".y0");
    }
    return s;
}

SystemSpec parse_system(const json& j) {
    SystemSpec spec;
    const json* params = nullptr;
    if (j.is_string()) {
        spec.name = j.get<std::string>();
    } else {
        check_keys(j, {"name", "params"}, "system");
        if (!j.contains("name") || !j.at("name").is_string()) fail("system", "missing string key 'name'");
        spec.name = j.at("name").get<std::string>();
        if (j.contains("params")) params = &j.at("params");
    }
    const std::string ctx = "system.params";
    if (spec.name == "manipulator") {
        auto& p = spec.manipulator;
        if (params) {
            check_keys(*params, {"l", "m_mass", "s", "c", "d_damp"}, ctx);
            read(*params, "l", p.l, ctx);
            read(*params, "m_mass", p.m_mass, ctx);
            read(*params, "s", p.s, ctx);
            read(*params, "c", p.c, ctx);
            read(*params, "d_damp", p.d_damp, ctx);
        }
        try {
            p.validate();
        } catch (const std::exception& e) {
            fail(ctx, e.what());
        }
    } else if (spec.name == "mass-on-car") {
        auto& p = spec.mass_on_car;
        if (params) {
            check_keys(*params, {"m1", "m2", "m3", "alpha", "k", "d_spring", "damping_scale"}, ctx);
            read(*params, "m1", p.m1, ctx);
            read(*params, "m2", p.m2, ctx);
            read(*params, "m3", p.m3, ctx);
            read(*params, "alpha", p.alpha, ctx);
            read(*params, "k", p.k, ctx);
            read(*params, "d_spring", p.d_spring, ctx);
            read(*params, "damping_scale", p.damping_scale, ctx);
        }
        try {
            p.validate();
        } catch (const std::exception& e) {
            fail(ctx, e.what());
        }
    } else {
        fail("system", "unknown system '" + spec.name + "' (manipulator, mass-on-car)");
    }
    return spec;
}

void parse_map(const json& j, MapConfig& map, const std::string& ctx) {
    if (j.contains("coordinates")) {
        if (!j.at("coordinates").is_string()) fail(ctx + ".coordinates", "expected a string");
        map.coordinates = j.at("coordinates").get<std::string>();
        if (map.coordinates != "orthonormal" && map.coordinates != "joint")
            fail(ctx + ".coordinates", "expected \"orthonormal\" or \"joint\"");
    }
    if (j.contains("lambda")) {
        map.lambda = number(j.at("lambda"), ctx + ".lambda");
        if (!(*map.lambda > 0.0)) fail(ctx + ".lambda", "must be positive");
    }
    map.q0 = optional_vector(j, "q0", ctx);
}

DecoupleConfig parse_decouple(const json& j) {
    const std::string ctx = "decouple";
    check_keys(j, {"coordinates", "lambda", "q0", "samples", "random_samples", "sample_radius"}, ctx);
    DecoupleConfig c;
    parse_map(j, c.map, ctx);
    if (j.contains("samples")) {
        const json& s = j.at("samples");
        if (!s.is_array()) fail(ctx + ".samples", "expected an array of configurations");
        for (std::size_t i = 0; i < s.size(); ++i)
            c.samples.push_back(vector_of(s[i], ctx + ".samples[" + std::to_string(i) + "]"));
    }
    read_count(j, "random_samples", c.random_samples, ctx);
    read(j, "sample_radius", c.sample_radius, ctx);
    if (!(c.sample_radius >= 0.0)) fail(ctx + ".sample_radius", "must be nonnegative");
    return c;
}

SimulateConfig parse_simulate(const json& j) {
    const std::string ctx = "simulate";
    check_keys(j, {"coordinates", "lambda", "q0", "t0", "t1", "dt", "q", "v", "eta0", "input", "output"}, ctx);
    SimulateConfig c;
    parse_map(j, c.map, ctx);
    read(j, "t0", c.t0, ctx);
    read(j, "t1", c.t1, ctx);
    read(j, "dt", c.dt, ctx);
    if (!(c.t1 > c.t0)) fail(ctx, "t1 must exceed t0");
    if (!(c.dt > 0.0)) fail(ctx + ".dt", "must be positive");
    c.q = optional_vector(j, "q", ctx);
    c.v = optional_vector(j, "v", ctx);
    c.eta0 = optional_vector(j, "eta0", ctx);
    if (j.contains("input")) c.input = parse_waveforms(j.at("input"), ctx + ".input");
    if (j.contains("output")) c.output = parse_signal(j.at("output"), ctx + ".output");
    return c;
}

BoundednessConfig parse_boundedness(const json& j) {
    const std::string ctx = "stability.boundedness";
    check_keys(j, {"eta0", "horizon", "dt", "output", "r3"}, ctx);
    BoundednessConfig c;
    if (!j.contains("eta0")) fail(ctx, "missing 'eta0'");
    c.eta0 = vector_of(j.at("eta0"), ctx + ".eta0");
    read(j, "horizon", c.horizon, ctx);
    read(j, "dt", c.dt, ctx);
    if (!(c.horizon > 0.0) || !(c.dt > 0.0)) fail(ctx, "horizon and dt must be positive");
    if (j.contains("output")) c.output = parse_signal(j.at("output"), ctx + ".output");
    if (j.contains("r3")) {
        c.r3 = number(j.at("r3"), ctx + ".r3");
        if (!(*c.r3 >= 0.0)) fail(ctx + ".r3", "must be nonnegative");
    }
    return c;
}

StabilityConfig parse_stability(const json& j) {
    const std::string ctx = "stability";
    check_keys(j, {"lambda", "q_weight", "r1", "r2", "samples", "z_max", "w_max", "ball_points", "boundedness"},
               ctx);
    StabilityConfig c;
    read(j, "lambda", c.lambda, ctx);
    read(j, "q_weight", c.q_weight, ctx);
    read(j, "r1", c.r1, ctx);
    read(j, "r2", c.r2, ctx);
    read_count(j, "samples", c.samples, ctx);
    read(j, "z_max", c.z_max, ctx);
    read(j, "w_max", c.w_max, ctx);
    read_count(j, "ball_points", c.ball_points, ctx);
    if (j.contains("boundedness")) c.boundedness = parse_boundedness(j.at("boundedness"));
    return c;
}

}  // namespace

double Waveform::at(double t) const {
    switch (kind) {
        case Kind::Sine:
            return amplitude * std::sin(frequency * t);
        case Kind::Constant:
            return value;
        case Kind::Zero:
            break;
    }
    return 0.0;
}

double Waveform::derivative(double t) const {
    return kind == Kind::Sine ? amplitude * frequency * std::cos(frequency * t) : 0.0;
}

double Waveform::integral(double t) const {
    switch (kind) {
        case Kind::Sine:
            return frequency == 0.0 ? 0.0 : amplitude * (1.0 - std::cos(frequency * t)) / frequency;
        case Kind::Constant:
            return value * t;
        case Kind::Zero:
            break;
    }
    return 0.0;
}

OutputSignal SignalSpec::build(int m) const {
    std::vector<Waveform> ch = channels;
    if (ch.empty()) ch.assign(1, Waveform{});
    if (ch.size() == 1) ch.assign(static_cast<std::size_t>(m), ch.front());
    if (ch.size() != static_cast<std::size_t>(m))
        throw ConfigError("output signal: expected " + std::to_string(m) + " channels, got " +
                          std::to_string(ch.size()));
    Vec offset = Vec::Zero(m);
    if (!y0.empty()) {
        if (y0.size() != static_cast<std::size_t>(m))
            throw ConfigError("output signal: y0 must have " + std::to_string(m) + " entries");
        for (int i = 0; i < m; ++i) offset(i) = y0[static_cast<std::size_t>(i)];
    }
    OutputSignal s;
    if (derivative) {
        s.y = [ch, offset](double t) {
            Vec y = offset;
            for (std::size_t i = 0; i < ch.size(); ++i) y(static_cast<Eigen::Index>(i)) += ch[i].integral(t);
            return y;
        };
        s.dy = [ch](double t) {
            Vec dy(static_cast<Eigen::Index>(ch.size()));
            for (std::size_t i = 0; i < ch.size(); ++i) dy(static_cast<Eigen::Index>(i)) = ch[i].at(t);
            return dy;
        };
    } else {
        s.y = [ch](double t) {
            Vec y(static_cast<Eigen::Index>(ch.size()));
            for (std::size_t i = 0; i < ch.size(); ++i) y(static_cast<Eigen::Index>(i)) = ch[i].at(t);
            return y;
        };
        s.dy = [ch](double t) {
            Vec dy(static_cast<Eigen::Index>(ch.size()));
            for (std::size_t i = 0; i < ch.size(); ++i) dy(static_cast<Eigen::Index>(i)) = ch[i].derivative(t);
            return dy;
        };
    }
    return s;
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    check_keys(j, {"system", "seed", "output", "decouple", "simulate", "stability"}, "config");
    if (!j.contains("system")) fail("config", "missing key 'system'");
    RunConfig c;
    c.system = parse_system(j.at("system"));
    if (j.contains("seed")) {
        const json& s = j.at("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
            fail("config.seed", "expected a nonnegative integer");
        c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("output")) {
        if (!j.at("output").is_string()) fail("config.output", "expected a path string");
        c.output = j.at("output").get<std::string>();
    }
    if (j.contains("decouple")) c.decouple = parse_decouple(j.at("decouple"));
    if (j.contains("simulate")) c.simulate = parse_simulate(j.at("simulate"));
    if (j.contains("stability")) c.stability = parse_stability(j.at("stability"));
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace idyn::cli
