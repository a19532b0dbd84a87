#include "idyn/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "idyn/sampling.hpp"
#include "json.hpp"

namespace idyn::cli {

namespace {

using nlohmann::json;

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

json to_json(const Vec& v) { return json(to_std(v)); }

json to_json(const Mat& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) rows.push_back(to_std(a.row(i).transpose()));
    return rows;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Vec sized(const std::vector<double>& v, int n, const std::string& what) {
    if (v.size() != static_cast<std::size_t>(n))
        throw ConfigError(what + ": expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
    return to_vec(v);
}

SystemModel build_system(const SystemSpec& spec, double lambda) {
    if (spec.name == "manipulator") return examples::manipulator_model(spec.manipulator);
    auto p = spec.mass_on_car;
    p.lambda = lambda;
    return examples::mass_on_car(p).system;
}

std::unique_ptr<DecouplingMap> build_map(const SystemSpec& spec, const SystemModel& model, const MapConfig& map) {
    DecouplingOptions options;
    if (map.coordinates == "joint") {
        if (spec.name != "manipulator")
            throw ConfigError("coordinates \"joint\" are only defined for the manipulator");
        options = examples::manipulator_joint_options(spec.manipulator);
    } else if (spec.name == "manipulator") {
        options.q0 = examples::manipulator_joint_options(spec.manipulator).q0;
    }
    if (map.lambda) options.lambda = *map.lambda;
    if (map.q0) options.q0 = sized(*map.q0, model.n, "q0");
    if (options.q0 && !model.in_domain(*options.q0))
        throw ConfigError("reference configuration q0 lies outside the model domain");
    return std::make_unique<DecouplingMap>(model, options);
}

InputFn build_input(const std::vector<Waveform>& waves, int m) {
    std::vector<Waveform> ch = waves;
    if (ch.empty()) ch.assign(1, Waveform{});
    if (ch.size() == 1) ch.assign(static_cast<std::size_t>(m), ch.front());
    if (ch.size() != static_cast<std::size_t>(m))
        throw ConfigError("input: expected " + std::to_string(m) + " channels, got " + std::to_string(ch.size()));
    return [ch](double t) {
        Vec u(static_cast<Eigen::Index>(ch.size()));
        for (std::size_t i = 0; i < ch.size(); ++i) u(static_cast<Eigen::Index>(i)) = ch[i].at(t);
        return u;
    };
}

FullState initial_state(const SimulateConfig& c, const SystemModel& model) {
    if (!c.q || !c.v) throw ConfigError("simulate: 'q' and 'v' are required for full and compare runs");
    FullState x0{sized(*c.q, model.n, "simulate.q"), sized(*c.v, model.n, "simulate.v")};
    if (!model.in_domain(x0.x1)) throw ConfigError("simulate.q lies outside the model domain");
    return x0;
}

std::vector<std::vector<double>> rows_of(const Trajectory& traj) {
    std::vector<std::vector<double>> rows;
    rows.reserve(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        std::vector<double> row{traj.times[i]};
        const auto s = to_std(traj.states[i]);
        row.insert(row.end(), s.begin(), s.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> header_of(const Trajectory& traj) {
    std::vector<std::string> h{"t"};
    h.insert(h.end(), traj.labels.begin(), traj.labels.end());
    return h;
}

CommandOutput trajectory_output(const Trajectory& traj) {
    CommandOutput out;
    out.text = format_csv(header_of(traj), rows_of(traj));
    out.messages = traj.warnings;
    if (traj.error) {
        out.exit_code = kNumericalFailure;
        std::ostringstream os;
        os << traj.error->message << " at t = " << traj.error->time;
        out.messages.push_back(os.str());
    }
    return out;
}

json witness_json(const Witness& w) {
    json point = json::object();
    for (const auto& [name, value] : w.point) point[name] = to_json(value);
    return {{"point", point}, {"lhs", w.lhs}, {"rhs", w.rhs}};
}

std::string pass_fail(bool pass) { return pass ? "PASS" : "FAIL"; }

}  // namespace

std::string format_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += header[i];
    }
    out += '\n';
    char buf[40];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::string plot_script(const std::string& csv_path, const std::vector<std::string>& header) {
    const std::string file = std::filesystem::path(csv_path).filename().string();
    std::ostringstream s;
    s << "# gnuplot script for " << file << "\n"
      << "set datafile separator ','\n"
      << "set key autotitle columnhead outside\n"
      << "set xlabel 't'\n"
      << "set grid\n"
      << "plot for [i=2:" << header.size() << "] '" << file << "' using 1:i with lines\n";
    return s.str();
}

CommandOutput cmd_decouple(const RunConfig& config) {
    const DecoupleConfig& c = config.decouple;
    const SystemModel model = build_system(config.system, c.map.lambda.value_or(1.0));
    const auto map = build_map(config.system, model, c.map);

    std::vector<Vec> qs;
    for (const auto& q : c.samples) qs.push_back(sized(q, model.n, "decouple.samples"));
    for (std::size_t i = 0; i < c.random_samples; ++i) {
        auto rng = sampling::point_rng(config.seed, i);
        std::uniform_real_distribution<double> box(-c.sample_radius, c.sample_radius);
        Vec q(model.n);
        for (int j = 0; j < model.n; ++j) q(j) = box(rng);
        qs.push_back(q);
    }
    if (qs.empty()) qs.push_back(map->q0());

    const RelativeDegreeReport rel = check_relative_degree(model, qs);
    json samples = json::array();
    bool regular = true;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto& r = rel.samples[i];
        json s = {{"q", to_json(qs[i])},
                  {"in_domain", r.in_domain},
                  {"relative_degree_two", r.pass},
                  {"gamma_smallest_sv", r.smallest_sv},
                  {"gamma_largest_sv", r.largest_sv}};
        if (!r.reason.empty()) s["reason"] = r.reason;
        if (r.pass) {
            try {
                const auto f = map->frame(qs[i]);
                Mat stacked(model.n, model.n);
                stacked << f.H, f.phi2;
                const auto svs = singular_values(stacked);
                s["gamma"] = to_json(f.gamma);
                s["gamma_inverse"] = to_json(Mat(f.gamma.inverse()));
                s["V"] = to_json(f.V);
                s["phi2"] = to_json(f.phi2);
                s["input_gain"] = to_json(f.input_gain);
                s["regularity"] = {{"H_phi2_smallest_sv", svs.smallest},
                                   {"H_phi2_largest_sv", svs.largest},
                                   {"phi2_Minv_B", (f.phi2 * f.mass.inverse() * eval_input_dist(model, qs[i]))
                                                       .cwiseAbs()
                                                       .maxCoeff()}};
            } catch (const Error& e) {
                regular = false;
                s["error"] = e.what();
            }
        }
        samples.push_back(std::move(s));
    }
    const bool pass = rel.pass && regular;
    json report = {{"system", config.system.name},
                   {"coordinates", c.map.coordinates},
                   {"lambda", map->lambda()},
                   {"conservative", map->conservative()},
                   {"q0", to_json(map->q0())},
                   {"E", to_json(map->E())},
                   {"relative_degree", {{"pass", rel.pass}}},
                   {"samples", samples},
                   {"verdict", pass_fail(pass)}};
    CommandOutput out;
    out.text = report.dump(2) + "\n";
    out.exit_code = pass ? kSuccess : kVerdictFail;
    return out;
}

CommandOutput cmd_simulate(const RunConfig& config, SimulateMode mode) {
    const SimulateConfig& c = config.simulate;
    const SystemModel model = build_system(config.system, c.map.lambda.value_or(1.0));
    const TimeSpan span{c.t0, c.t1};

    if (mode == SimulateMode::Full) {
        const FullState x0 = initial_state(c, model);
        return trajectory_output(simulate_full(model, build_input(c.input, model.m), x0, span, c.dt));
    }

    const auto map = build_map(config.system, model, c.map);
    if (mode == SimulateMode::Internal) {
        if (!c.eta0) throw ConfigError("simulate: 'eta0' is required for internal runs");
        const Vec eta0 = sized(*c.eta0, 2 * (model.n - model.m), "simulate.eta0");
        const InternalRhs rhs = make_generic_rhs(*map);
        return trajectory_output(integrate(rhs, eta0, c.output.build(model.m), span, c.dt));
    }

    const FullState x0 = initial_state(c, model);
    const ConsistencyReport rep = consistency_compare(model, *map, build_input(c.input, model.m), x0, span, c.dt);
    const Eigen::Index k2 = 2 * (model.n - model.m);
    std::vector<std::string> header = header_of(rep.full);
    for (Eigen::Index j = 0; j < k2; ++j) header.push_back(rep.internal.labels[static_cast<std::size_t>(j)]);
    header.push_back("discrepancy");
    std::vector<std::vector<double>> rows = rows_of(rep.full);
    const std::size_t count = std::min({rows.size(), rep.internal.size(), rep.discrepancy.size()});
    rows.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Vec& eta = rep.internal.states[i];
        for (Eigen::Index j = 0; j < k2; ++j) rows[i].push_back(eta(j));
        rows[i].push_back(rep.discrepancy[i]);
    }
    CommandOutput out;
    out.text = format_csv(header, rows);
    out.messages = rep.internal.warnings;
    std::ostringstream note;
    note << "max discrepancy " << rep.max_discrepancy;
    out.messages.push_back(note.str());
    return out;
}

CommandOutput cmd_check_stability(const RunConfig& config) {
    if (config.system.name != "mass-on-car")
        throw ConfigError("check-stability requires a system with constant mass matrix (mass-on-car)");
    const StabilityConfig& c = config.stability;
    auto params = config.system.mass_on_car;
    if (!(c.lambda > 0.0))
        throw Error(ErrorKind::InfeasibleParameters, "lambda must be positive");
    params.lambda = c.lambda;
    const examples::MassOnCar car = examples::mass_on_car(params);
    const StabilityCertificate cert =
        compute_constants(car.ccm, car.envelope, c.r1, c.r2, c.lambda, c.q_weight, c.ball_points);

    SamplerConfig sampler;
    sampler.samples = c.samples;
    sampler.seed = config.seed;
    sampler.z_max = c.z_max;
    sampler.w_max = c.w_max;
    sampler.ball_points = c.ball_points;
    const ConditionsReport conditions = verify_conditions(car.ccm, car.envelope, sampler);
    const CertificateVerdict verdict = certificate_check(cert, car.envelope, car.ccm, sampler);

    json conds = json::array();
    for (const auto& v : conditions.conditions) {
        json e = {{"name", v.name},           {"relation", v.relation}, {"samples", v.samples},
                  {"worst_margin", v.worst_margin}, {"pass", v.pass},         {"informational", v.informational}};
        if (v.counterexample) e["counterexample"] = witness_json(*v.counterexample);
        conds.push_back(std::move(e));
    }
    json report = {
        {"system", config.system.name},
        {"seed", config.seed},
        {"parameters", {{"lambda", cert.lambda}, {"q_weight", cert.q_weight}, {"r1", cert.r1}, {"r2", cert.r2}}},
        {"envelope",
         {{"kappa", cert.kappa}, {"delta", cert.delta}, {"d", cert.d_env}, {"z1_plus", cert.z1_plus},
          {"z2_plus", cert.z2_plus}}},
        {"constants",
         {{"tau", cert.tau},
          {"mu", cert.mu},
          {"K_tilde", cert.K_tilde},
          {"D_tilde", cert.D_tilde},
          {"C3_tilde", cert.C3_tilde},
          {"C4_tilde", cert.C4_tilde},
          {"eps1", cert.eps1},
          {"eps2", cert.eps2},
          {"E1", cert.E1},
          {"E2", cert.E2},
          {"gamma1", cert.gamma1},
          {"gamma2", cert.gamma2},
          {"ball_points", cert.ball_points}}},
        {"regions",
         {{"comparison_radius1", cert.comparison_radius1()},
          {"comparison_radius2", cert.comparison_radius2()},
          {"eta1_min", cert.region_radius1()},
          {"eta2_min", cert.region_radius2()}}},
        {"conditions",
         {{"pass", conditions.pass},
          {"box",
           {{"z1_min", conditions.z1_min},
            {"z2_min", conditions.z2_min},
            {"z_max", conditions.z_max},
            {"w_max", conditions.w_max}}},
          {"samples_per_condition", conditions.samples_per_condition},
          {"results", conds}}},
        {"certificate",
         {{"samples", verdict.samples},
          {"worst_value", verdict.worst_value},
          {"slack", verdict.slack},
          {"eta1_min", verdict.eta1_min},
          {"eta2_min", verdict.eta2_min},
          {"z_max", verdict.z_max},
          {"pass", verdict.pass},
          {"worst_sample", witness_json(verdict.worst)}}}};

    bool pass = conditions.pass && verdict.pass;
    CommandOutput out;
    if (c.boundedness) {
        const BoundednessConfig& b = *c.boundedness;
        const int k = car.ccm.n() - car.ccm.m();
        const Vec eta0 = sized(b.eta0, 2 * k, "stability.boundedness.eta0");
        OutputSignal signal = b.output.build(car.ccm.m());
        signal.sup_y = c.r1;
        signal.sup_dy = c.r2;
        const double r3 = b.r3.value_or(std::hypot(cert.region_radius1(), cert.region_radius2()));
        const BoundednessReport br = boundedness_test(make_constant_rhs(car.ccm), signal, eta0, r3, b.horizon, b.dt,
                                                      make_lyapunov(cert, car.envelope, k));
        report["boundedness"] = {{"sup_norm", br.sup_norm}, {"r3", r3},
                                 {"r_tilde", br.r_tilde},   {"level", br.level},
                                 {"eps_emp", br.eps_emp},   {"bound", br.bound},
                                 {"horizon", br.horizon.t1}, {"pass", br.pass},
                                 {"warnings", br.warnings}};
        out.messages = br.warnings;
        pass = pass && br.pass;
    }
    report["verdict"] = pass_fail(pass);
    out.text = report.dump(2) + "\n";
    out.exit_code = pass ? kSuccess : kVerdictFail;
    return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Internal dynamics decoupling, simulation and stability certificates"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    bool emit_plot = false;
    std::string mode;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_path, "output file (default: config 'output', else stdout)");
        sub->add_option("--seed", seed, "sampling seed (overrides the config)");
        sub->add_flag("--emit-plot-script", emit_plot, "write a gnuplot script next to the CSV");
    };
    CLI::App* decouple = app.add_subcommand("decouple", "decoupling maps and regularity at sample points");
    CLI::App* simulate = app.add_subcommand("simulate", "simulate internal, full or compare");
    CLI::App* stability = app.add_subcommand("check-stability", "Lyapunov certificate and envelope checks");
    add_common(decouple);
    add_common(simulate);
    add_common(stability);
    simulate->add_option("mode", mode, "internal | full | compare")
        ->required()
        ->check(CLI::IsMember({"internal", "full", "compare"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }

    CommandOutput result;
    bool csv = false;
    try {
        RunConfig config = load_config(config_path);
        if (seed) config.seed = *seed;
        if (out_path.empty() && config.output) out_path = *config.output;
        if (decouple->parsed()) {
            result = cmd_decouple(config);
        } else if (stability->parsed()) {
            result = cmd_check_stability(config);
        } else {
            csv = true;
            const SimulateMode m = mode == "internal" ? SimulateMode::Internal
                                   : mode == "full"   ? SimulateMode::Full
                                                      : SimulateMode::Compare;
            result = cmd_simulate(config, m);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const Error& e) {
        err << e.what() << "\n";
        const bool config_kind = e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::InfeasibleParameters;
        return config_kind ? kConfigError : kNumericalFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kNumericalFailure;
    }

    for (const auto& m : result.messages) err << m << "\n";
    if (out_path.empty()) {
        out << result.text;
        if (emit_plot) err << "note: --emit-plot-script needs --out; no script written\n";
    } else {
        std::ofstream file(out_path, std::ios::binary);
        if (!file) {
            err << "error: cannot write '" << out_path << "'\n";
            return kConfigError;
        }
        file << result.text;
        if (emit_plot && csv) {
            std::filesystem::path script = out_path;
            script.replace_extension(".gp");
            std::istringstream first(result.text);
            std::string line;
            std::getline(first, line);
            std::vector<std::string> header;
            std::stringstream cols(line);
            for (std::string col; std::getline(cols, col, ',');) header.push_back(col);
            std::ofstream(script, std::ios::binary) << plot_script(out_path, header);
        } else if (emit_plot) {
            err << "note: --emit-plot-script applies to simulate output only\n";
        }
    }
    return result.exit_code;
}

}  // namespace idyn::cli
