#include "morphprint/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "morphprint/io.hpp"

namespace morphprint {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

std::string join_lines(const std::vector<std::string>& problems)
{
    std::string s = "invalid configuration:";
    for (const auto& p : problems) {
        s += "\n  - " + p;
    }
    return s;
}

const char* weight_mode_name(WeightMode m)
{
    return m == WeightMode::Uniform ? "uniform" : "gauss-uniform";
}

constexpr std::array<const char*, 4> process_keys{"nozzle_temperature", "temperature_gradient", "velocity",
                                                  "thickness"};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::string path_string(const fs::path& p) { return p.empty() ? std::string() : p.generic_string(); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Collects every unknown key and type error of a config document.
class Reader {
public:
    std::vector<std::string> problems;
    fs::path base;

    bool object(const json& j, const std::string& where)
    {
        if (!j.is_object()) {
            problems.push_back(where + ": expected an object");
            return false;
        }
        return true;
    }

    void keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed)
    {
        for (const auto& [k, v] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
                problems.push_back(name(where, k) + ": unknown key");
            }
        }
    }

    void number(const json& j, const char* key, const std::string& where, double& out)
    {
        if (!j.contains(key)) {
            return;
        }
        const auto& v = j.at(key);
        if (!v.is_number()) {
            problems.push_back(name(where, key) + ": expected a number");
            return;
        }
        out = v.get<double>();
    }

    template <class T>
    void count(const json& j, const char* key, const std::string& where, T& out)
    {
        if (!j.contains(key)) {
            return;
        }
        const auto& v = j.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            problems.push_back(name(where, key) + ": expected a non-negative integer");
            return;
        }
        out = static_cast<T>(v.get<unsigned long long>());
    }

    void boolean(const json& j, const char* key, const std::string& where, bool& out)
    {
        if (!j.contains(key)) {
            return;
        }
        const auto& v = j.at(key);
        if (!v.is_boolean()) {
            problems.push_back(name(where, key) + ": expected true or false");
            return;
        }
        out = v.get<bool>();
    }

    bool string(const json& j, const char* key, const std::string& where, std::string& out)
    {
        if (!j.contains(key)) {
            return false;
        }
        const auto& v = j.at(key);
        if (!v.is_string()) {
            problems.push_back(name(where, key) + ": expected a string");
            return false;
        }
        out = v.get<std::string>();
        return true;
    }

    void path(const json& j, const char* key, const std::string& where, fs::path& out)
    {
        std::string s;
        if (string(j, key, where, s)) {
            out = resolve(s);
        }
    }

    fs::path resolve(const std::string& s) const
    {
        if (s.empty()) {
            return {};
        }
        fs::path p(s);
        if (p.is_relative()) {
            p = base / p;
        }
        return p.lexically_normal();
    }

    static std::string name(const std::string& where, std::string_view key)
    {
        return where.empty() ? std::string(key) : where + "." + std::string(key);
    }
};

} // namespace

ConfigError::ConfigError(std::vector<std::string> problems) : Error(join_lines(problems)), problems_(std::move(problems))
{
}

GraspSpaceOptions RunConfig::grasp_options() const
{
    auto o = grasp_space;
    o.seed = seed;
    return o;
}

TrainOptions RunConfig::train_options() const
{
    auto o = training.options;
    o.seed = seed;
    return o;
}

Nsga2Options RunConfig::nsga_options() const
{
    auto o = optimizer.options;
    o.seed = seed;
    return o;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir, std::vector<std::string>* problems)
{
    RunConfig c;
    Reader r;
    r.base = base_dir;
    auto done = [&] {
        if (problems) {
            problems->insert(problems->end(), r.problems.begin(), r.problems.end());
        } else if (!r.problems.empty()) {
            throw ConfigError(r.problems);
        }
        return c;
    };
    if (!r.object(j, "config")) {
        return done();
    }
    r.keys(j, "", {"mesh", "hand", "schedule", "model", "output", "power_logs", "seed", "material", "printer", "process",
                   "bounds", "grasp_space", "laplacian", "slicer", "training", "optimizer"});
    r.path(j, "mesh", "", c.mesh);
    r.path(j, "hand", "", c.hand);
    r.path(j, "schedule", "", c.schedule);
    r.path(j, "model", "", c.model);
    r.path(j, "output", "", c.output);
    r.count(j, "seed", "", c.seed);

    if (j.contains("power_logs") && r.object(j.at("power_logs"), "power_logs")) {
        for (const auto& [k, v] : j.at("power_logs").items()) {
            std::size_t row = 0;
            try {
                std::size_t used = 0;
                row = std::stoul(k, &used);
                if (used != k.size()) {
                    throw std::invalid_argument(k);
                }
            } catch (const std::exception&) {
                r.problems.push_back("power_logs." + k + ": key must be a schedule row number");
                continue;
            }
            if (!v.is_string()) {
                r.problems.push_back("power_logs." + k + ": expected a path string");
                continue;
            }
            c.power_logs[row] = r.resolve(v.get<std::string>());
        }
    }

    if (j.contains("material") && r.object(j.at("material"), "material")) {
        const auto& m = j.at("material");
        r.keys(m, "material", {"specific_heat", "density", "melt_temperature", "ambient_temperature", "latent_heat",
                               "filament_area"});
        r.number(m, "specific_heat", "material", c.material.specific_heat);
        r.number(m, "density", "material", c.material.density);
        r.number(m, "melt_temperature", "material", c.material.melt_temperature);
        r.number(m, "ambient_temperature", "material", c.material.ambient_temperature);
        r.number(m, "latent_heat", "material", c.material.latent_heat);
        r.number(m, "filament_area", "material", c.material.filament_area);
    }
    if (j.contains("printer") && r.object(j.at("printer"), "printer")) {
        const auto& p = j.at("printer");
        r.keys(p, "printer", {"motion_power", "line_width", "infill_rate", "thermal_coeff"});
        r.number(p, "motion_power", "printer", c.printer.motion_power);
        r.number(p, "line_width", "printer", c.printer.line_width);
        r.number(p, "infill_rate", "printer", c.printer.infill_rate);
        r.number(p, "thermal_coeff", "printer", c.printer.thermal_coeff);
    }
    if (j.contains("process") && r.object(j.at("process"), "process")) {
        const auto& p = j.at("process");
        r.keys(p, "process", {"nozzle_temperature", "temperature_gradient", "velocity", "thickness"});
        r.number(p, "nozzle_temperature", "process", c.process.nozzle_temperature);
        r.number(p, "temperature_gradient", "process", c.process.temperature_gradient);
        r.number(p, "velocity", "process", c.process.velocity);
        r.number(p, "thickness", "process", c.process.thickness);
    }
    if (j.contains("bounds") && r.object(j.at("bounds"), "bounds")) {
        const auto& b = j.at("bounds");
        r.keys(b, "bounds", {"nozzle_temperature", "temperature_gradient", "velocity", "thickness"});
        for (int i = 0; i < 4; ++i) {
            const char* k = process_keys[static_cast<std::size_t>(i)];
            if (!b.contains(k)) {
                continue;
            }
            const auto& v = b.at(k);
            if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
                r.problems.push_back(std::string("bounds.") + k + ": expected [lower, upper]");
                continue;
            }
            c.bounds.lower[i] = v[0].get<double>();
            c.bounds.upper[i] = v[1].get<double>();
        }
    }
    if (j.contains("grasp_space") && r.object(j.at("grasp_space"), "grasp_space")) {
        const auto& g = j.at("grasp_space");
        r.keys(g, "grasp_space", {"max_ellipsoids", "envelope_eps", "mvee_eps", "mvee_max_iterations",
                                  "monte_carlo_samples", "max_refinements", "reach_margin"});
        r.count(g, "max_ellipsoids", "grasp_space", c.grasp_space.max_ellipsoids);
        r.number(g, "envelope_eps", "grasp_space", c.grasp_space.envelope_eps);
        r.number(g, "mvee_eps", "grasp_space", c.grasp_space.mvee.eps);
        r.count(g, "mvee_max_iterations", "grasp_space", c.grasp_space.mvee.max_iterations);
        r.count(g, "monte_carlo_samples", "grasp_space", c.grasp_space.monte_carlo_samples);
        r.count(g, "max_refinements", "grasp_space", c.grasp_space.max_refinements);
        r.number(g, "reach_margin", "grasp_space", c.grasp_space.reach_margin);
    }
    if (j.contains("laplacian") && r.object(j.at("laplacian"), "laplacian")) {
        const auto& l = j.at("laplacian");
        r.keys(l, "laplacian", {"mode", "gauss_sigma"});
        std::string mode;
        if (r.string(l, "mode", "laplacian", mode)) {
            try {
                c.laplacian.mode = parse_weight_mode(mode);
            } catch (const Error& e) {
                r.problems.push_back(std::string("laplacian.mode: ") + e.what());
            }
        }
        r.number(l, "gauss_sigma", "laplacian", c.laplacian.gauss_sigma);
    }
    if (j.contains("slicer") && r.object(j.at("slicer"), "slicer")) {
        const auto& s = j.at("slicer");
        r.keys(s, "slicer", {"thickness", "resolution", "pattern", "spacing", "overhang_threshold_deg",
                             "support_density"});
        r.number(s, "thickness", "slicer", c.slicer.thickness);
        r.count(s, "resolution", "slicer", c.slicer.resolution);
        std::string pattern;
        if (r.string(s, "pattern", "slicer", pattern)) {
            try {
                c.slicer.pattern = parse_infill_pattern(pattern);
            } catch (const Error& e) {
                r.problems.push_back(std::string("slicer.pattern: ") + e.what());
            }
        }
        r.number(s, "spacing", "slicer", c.slicer.spacing);
        double deg = c.slicer.support.overhang_threshold * 180.0 / std::numbers::pi;
        r.number(s, "overhang_threshold_deg", "slicer", deg);
        c.slicer.support.overhang_threshold = deg * std::numbers::pi / 180.0;
        r.number(s, "support_density", "slicer", c.slicer.support.sample_density);
    }
    if (j.contains("training") && r.object(j.at("training"), "training")) {
        const auto& t = j.at("training");
        r.keys(t, "training", {"learning_rate", "batch_size", "epochs", "hidden", "blocks", "pseudo_weight",
                               "validation_fraction", "process_samples", "shuffle", "normalize"});
        r.number(t, "learning_rate", "training", c.training.options.learning_rate);
        r.count(t, "batch_size", "training", c.training.options.batch_size);
        r.count(t, "epochs", "training", c.training.options.epochs);
        r.count(t, "hidden", "training", c.training.hidden);
        r.count(t, "blocks", "training", c.training.blocks);
        r.number(t, "pseudo_weight", "training", c.training.pseudo_weight);
        r.number(t, "validation_fraction", "training", c.training.validation_fraction);
        r.count(t, "process_samples", "training", c.training.process_samples);
        r.boolean(t, "shuffle", "training", c.training.options.shuffle);
        r.boolean(t, "normalize", "training", c.training.options.normalize);
    }
    if (j.contains("optimizer") && r.object(j.at("optimizer"), "optimizer")) {
        const auto& o = j.at("optimizer");
        r.keys(o, "optimizer", {"population", "generations", "crossover_probability", "eta_crossover", "eta_mutation",
                                "mutation_probability", "cache", "use_network"});
        r.count(o, "population", "optimizer", c.optimizer.options.population);
        r.count(o, "generations", "optimizer", c.optimizer.options.generations);
        r.number(o, "crossover_probability", "optimizer", c.optimizer.options.crossover_probability);
        r.number(o, "eta_crossover", "optimizer", c.optimizer.options.eta_crossover);
        r.number(o, "eta_mutation", "optimizer", c.optimizer.options.eta_mutation);
        r.number(o, "mutation_probability", "optimizer", c.optimizer.options.mutation_probability);
        r.boolean(o, "cache", "optimizer", c.optimizer.options.cache);
        r.boolean(o, "use_network", "optimizer", c.optimizer.use_network);
    }
    return done();
}

RunConfig RunConfig::load(const fs::path& file, const json& overrides, std::vector<std::string>* problems)
{
    json j;
    fs::path base = fs::current_path();
    if (!file.empty()) {
        std::error_code ec;
        if (!fs::is_regular_file(file, ec)) {
            throw ConfigError({"config: file not found: " + file.string()});
        }
        try {
            j = json::parse(io::read_text(file));
        } catch (const json::parse_error& e) {
            throw ConfigError({file.string() + ": " + e.what()});
        }
        base = fs::absolute(file).parent_path();
    } else {
        j = json::object();
    }
    if (j.is_object() && overrides.is_object()) {
        j.merge_patch(overrides);
    }
    return from_json(j, base, problems);
}

json RunConfig::to_json() const
{
    json j;
    j["mesh"] = path_string(mesh);
    j["hand"] = path_string(hand);
    j["schedule"] = path_string(schedule);
    j["model"] = path_string(model);
    j["output"] = path_string(output);
    j["seed"] = seed;
    json logs = json::object();
    for (const auto& [row, p] : power_logs) {
        logs[std::to_string(row)] = path_string(p);
    }
    j["power_logs"] = logs;
    j["material"] = {{"specific_heat", material.specific_heat},
                     {"density", material.density},
                     {"melt_temperature", material.melt_temperature},
                     {"ambient_temperature", material.ambient_temperature},
                     {"latent_heat", material.latent_heat},
                     {"filament_area", material.filament_area}};
    j["printer"] = {{"motion_power", printer.motion_power},
                    {"line_width", printer.line_width},
                    {"infill_rate", printer.infill_rate},
                    {"thermal_coeff", printer.thermal_coeff}};
    j["process"] = {{"nozzle_temperature", process.nozzle_temperature},
                    {"temperature_gradient", process.temperature_gradient},
                    {"velocity", process.velocity},
                    {"thickness", process.thickness}};
    json b;
    for (int i = 0; i < 4; ++i) {
        b[process_keys[static_cast<std::size_t>(i)]] = json::array({bounds.lower[i], bounds.upper[i]});
    }
    j["bounds"] = b;
    j["grasp_space"] = {{"max_ellipsoids", grasp_space.max_ellipsoids},
                        {"envelope_eps", grasp_space.envelope_eps},
                        {"mvee_eps", grasp_space.mvee.eps},
                        {"mvee_max_iterations", grasp_space.mvee.max_iterations},
                        {"monte_carlo_samples", grasp_space.monte_carlo_samples},
                        {"max_refinements", grasp_space.max_refinements},
                        {"reach_margin", grasp_space.reach_margin}};
    j["laplacian"] = {{"mode", weight_mode_name(laplacian.mode)}, {"gauss_sigma", laplacian.gauss_sigma}};
    j["slicer"] = {{"thickness", slicer.thickness},
                   {"resolution", slicer.resolution},
                   {"pattern", to_string(slicer.pattern)},
                   {"spacing", slicer.spacing},
                   {"overhang_threshold_deg", slicer.support.overhang_threshold * 180.0 / std::numbers::pi},
                   {"support_density", slicer.support.sample_density}};
    j["training"] = {{"learning_rate", training.options.learning_rate},
                     {"batch_size", training.options.batch_size},
                     {"epochs", training.options.epochs},
                     {"hidden", training.hidden},
                     {"blocks", training.blocks},
                     {"pseudo_weight", training.pseudo_weight},
                     {"validation_fraction", training.validation_fraction},
                     {"process_samples", training.process_samples},
                     {"shuffle", training.options.shuffle},
                     {"normalize", training.options.normalize}};
    j["optimizer"] = {{"population", optimizer.options.population},
                      {"generations", optimizer.options.generations},
                      {"crossover_probability", optimizer.options.crossover_probability},
                      {"eta_crossover", optimizer.options.eta_crossover},
                      {"eta_mutation", optimizer.options.eta_mutation},
                      {"mutation_probability", optimizer.options.mutation_probability},
                      {"cache", optimizer.options.cache},
                      {"use_network", optimizer.use_network}};
    return j;
}

std::string RunConfig::hash() const
{
    json j = to_json();
    j.erase("output");
    return sha256_hex(j.dump());
}

std::vector<std::string> RunConfig::violations(std::string_view command) const
{
    std::vector<std::string> out;
    auto bad = [&](bool cond, const std::string& msg) {
        if (cond) {
            out.push_back(msg);
        }
    };
    auto need_file = [&](const fs::path& p, const std::string& key, bool required) {
        if (p.empty()) {
            bad(required, key + ": required by " + std::string(command));
            return;
        }
        std::error_code ec;
        bad(!fs::is_regular_file(p, ec), key + ": file not found: " + p.string());
    };
    const bool all = command == "pipeline";
    const bool posed = all || command == "morph" || command == "train" || command == "optimize";
    need_file(mesh, "mesh", true);
    need_file(hand, "hand", posed);
    need_file(schedule, "schedule", posed);
    need_file(model, "model", command == "predict");
    for (const auto& [row, p] : power_logs) {
        need_file(p, "power_logs." + std::to_string(row), true);
    }
    bad(output.empty(), "output: must not be empty");

    for (const auto& v : material.violations()) {
        out.push_back("material: " + v);
    }
    bad(!(printer.motion_power >= 0.0), "printer.motion_power: must be >= 0");
    bad(!(printer.line_width > 0.0), "printer.line_width: must be > 0");
    bad(!(printer.infill_rate > 0.0 && printer.infill_rate <= 1.0), "printer.infill_rate: must be in (0, 1]");
    bad(!(printer.thermal_coeff >= 0.0), "printer.thermal_coeff: must be >= 0");

    bad(!(process.nozzle_temperature > 0.0), "process.nozzle_temperature: must be > 0 K");
    bad(!(process.temperature_gradient >= 0.0), "process.temperature_gradient: must be >= 0");
    bad(!(process.velocity > 0.0), "process.velocity: must be > 0");
    bad(!(process.thickness > 0.0), "process.thickness: must be > 0");
    for (int i = 0; i < 4; ++i) {
        const std::string k = std::string("bounds.") + process_keys[static_cast<std::size_t>(i)];
        bad(!(bounds.lower[i] <= bounds.upper[i]), k + ": lower bound exceeds upper bound");
    }
    bad(!(bounds.lower[0] > 0.0), "bounds.nozzle_temperature: lower bound must be > 0 K");
    bad(!(bounds.lower[1] >= 0.0), "bounds.temperature_gradient: lower bound must be >= 0");
    bad(!(bounds.lower[2] > 0.0), "bounds.velocity: lower bound must be > 0");
    bad(!(bounds.lower[3] > 0.0), "bounds.thickness: lower bound must be > 0");

    bad(grasp_space.max_ellipsoids < 1, "grasp_space.max_ellipsoids: must be >= 1");
    bad(!(grasp_space.envelope_eps >= 0.0), "grasp_space.envelope_eps: must be >= 0");
    bad(!(grasp_space.mvee.eps > 0.0), "grasp_space.mvee_eps: must be > 0");
    bad(grasp_space.mvee.max_iterations < 1, "grasp_space.mvee_max_iterations: must be >= 1");
    bad(grasp_space.monte_carlo_samples < 1, "grasp_space.monte_carlo_samples: must be >= 1");
    bad(!(grasp_space.reach_margin >= 1.0), "grasp_space.reach_margin: must be >= 1");
    bad(!(laplacian.gauss_sigma > 0.0), "laplacian.gauss_sigma: must be > 0");

    bad(!(slicer.thickness > 0.0), "slicer.thickness: must be > 0");
    bad(slicer.resolution < 8, "slicer.resolution: must be >= 8");
    bad(!(slicer.spacing > 0.0), "slicer.spacing: must be > 0");
    bad(!(slicer.support.overhang_threshold > 0.0 && slicer.support.overhang_threshold < std::numbers::pi / 2),
        "slicer.overhang_threshold_deg: must be in (0, 90)");
    bad(!(slicer.support.sample_density > 0.0), "slicer.support_density: must be > 0");

    bad(!(training.options.learning_rate > 0.0), "training.learning_rate: must be > 0");
    bad(training.options.batch_size < 1, "training.batch_size: must be >= 1");
    bad(training.options.epochs < 1, "training.epochs: must be >= 1");
    bad(training.hidden < 1, "training.hidden: must be >= 1");
    bad(training.process_samples < 1, "training.process_samples: must be >= 1");
    bad(!(training.pseudo_weight >= 0.0), "training.pseudo_weight: must be >= 0");
    bad(!(training.validation_fraction >= 0.0 && training.validation_fraction < 1.0),
        "training.validation_fraction: must be in [0, 1)");

    const auto& o = optimizer.options;
    bad(o.population < 4 || o.population % 2 != 0, "optimizer.population: must be even and >= 4");
    bad(o.generations < 1, "optimizer.generations: must be >= 1");
    bad(!(o.crossover_probability >= 0.0 && o.crossover_probability <= 1.0),
        "optimizer.crossover_probability: must be in [0, 1]");
    bad(!(o.eta_crossover >= 0.0), "optimizer.eta_crossover: must be >= 0");
    bad(!(o.eta_mutation >= 0.0), "optimizer.eta_mutation: must be >= 0");
    bad(!(o.mutation_probability <= 1.0), "optimizer.mutation_probability: must be <= 1");
    return out;
}

void RunConfig::validate(std::string_view command) const
{
    auto v = violations(command);
    if (!v.empty()) {
        throw ConfigError(std::move(v));
    }
}

namespace {

double stack_geometric_error(const LayerStack& stack, double gradient, double coeff)
{
    std::vector<Vec2> dev;
    for (const auto& layer : stack.layers) {
        auto d = thermal_deviation(layer, gradient, stack.thickness, coeff);
        dev.insert(dev.end(), d.begin(), d.end());
    }
    return dev.empty() ? 0.0 : geometric_error(dev).value;
}

} // namespace

PipelineProblem::PipelineProblem(const Mesh& mesh, const HandModel& hand, const GraspSpace& space,
                                 LabelContext context, ProcessBounds bounds, const LaplacianOptions& laplacian,
                                 int resolution, const ResidualNet* net)
    : mesh_(&mesh), hand_(&hand), space_(&space), context_(context), bounds_(bounds), resolution_(resolution),
      net_(net), morpher_(std::make_shared<GraspMorpher>(mesh, space, hand.control_vertices(), laplacian))
{
    hand.validate(&mesh);
}

std::size_t PipelineProblem::dimension() const { return hand_->joint_count() + 4; }

Eigen::VectorXd PipelineProblem::lower() const
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(dimension()));
    v << hand_->lower_bounds(), bounds_.lower;
    return v;
}

Eigen::VectorXd PipelineProblem::upper() const
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(dimension()));
    v << hand_->upper_bounds(), bounds_.upper;
    return v;
}

std::vector<std::string> PipelineProblem::variable_names() const
{
    auto names = hand_->joint_names();
    names.insert(names.end(), {"t_n", "grad_t", "v_f", "d"});
    return names;
}

double PipelineProblem::grasp_violation(const Eigen::VectorXd& joints) const
{
    double v = 0.0;
    for (const auto& [vertex, p] : hand_->targets(*mesh_, joints)) {
        v += space_->violation(p);
    }
    return v;
}

CandidateReport PipelineProblem::report(const Eigen::VectorXd& x) const
{
    if (static_cast<std::size_t>(x.size()) != dimension()) {
        throw Error("pipeline problem: decision vector has " + std::to_string(x.size()) + " entries, expected " +
                    std::to_string(dimension()));
    }
    CandidateReport out;
    const Eigen::VectorXd lo = lower(), hi = upper();
    const double outside = (lo - x).cwiseMax(0.0).sum() + (x - hi).cwiseMax(0.0).sum();
    if (outside > 0.0) {
        out.eval.violation = outside;
        out.eval.reason = "outside variable bounds";
        return out;
    }
    const auto n = static_cast<Eigen::Index>(hand_->joint_count());
    const Eigen::VectorXd joints = x.head(n);
    const double grasp = grasp_violation(joints);
    if (grasp > 0.0) {
        out.eval.violation = grasp;
        out.eval.reason = "grasp target outside the grasp space";
        return out;
    }
    const ProcessParams p = process_from_vector(x.tail<4>());
    try {
        const MorphResult morphed = morpher_->morph(hand_->targets(*mesh_, joints));
        const Mesh deformed = mesh_->with_vertices(morphed.vertices);
        const LayerStack stack = morphprint::slice(deformed, p.thickness);
        const EnergyReport analytic = stack_energy(stack, p, context_);
        double total = analytic.total;
        if (net_) {
            const Dataset rows = label_layers(stack, p, context_, nullptr, 0, resolution_);
            total = rows.size() ? net_->forward_batch(rows.features()).sum() : 0.0;
        }
        out.eval.objectives = {total, morphed.energy,
                               stack_geometric_error(stack, p.temperature_gradient, context_.printer.thermal_coeff)};
        out.print_time = analytic.print_time;
        out.melting = analytic.melting;
        out.layers = stack.layers.size();
    } catch (const Error& e) {
        out.eval.objectives.clear();
        out.eval.violation = 1.0;
        out.eval.reason = e.what();
    }
    return out;
}

const std::vector<std::string>& stage_names()
{
    static const std::vector<std::string> names{"measure", "fgs",     "morph",   "slice",
                                                "energy",  "train",   "predict", "optimize"};
    return names;
}

Pipeline::Pipeline(RunConfig config, std::string command) : config_(std::move(config)), command_(std::move(command))
{
    config_.validate(command_);
    fs::create_directories(config_.output);
}

Pipeline::~Pipeline() = default;

template <class F>
void Pipeline::stage(const std::string& name, F&& body)
{
    current_stage_ = name;
    const auto t0 = std::chrono::steady_clock::now();
    body();
    timings_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    current_stage_.clear();
}

void Pipeline::input(const std::string& role, const fs::path& path)
{
    for (const auto& in : inputs_) {
        if (in["role"] == role && in["path"] == path_string(path)) {
            return;
        }
    }
    const auto bytes = io::read_text(path);
    inputs_.push_back({{"role", role}, {"path", path_string(path)}, {"sha256", sha256_hex(bytes)}});
}

void Pipeline::emit(const std::string& rel, const std::string& contents)
{
    io::write_text(config_.output / rel, contents);
    outputs_.push_back({{"path", rel}, {"bytes", contents.size()}, {"sha256", sha256_hex(contents)}});
}

void Pipeline::record(const std::string& rel)
{
    const auto bytes = io::read_text(config_.output / rel);
    outputs_.push_back({{"path", rel}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
}

const Mesh& Pipeline::mesh()
{
    if (!mesh_) {
        input("mesh", config_.mesh);
        mesh_ = load_mesh(config_.mesh);
        for (const auto& w : mesh_->report.warnings) {
            warnings_.push_back("mesh: " + w);
        }
    }
    return mesh_->mesh;
}

const HandModel& Pipeline::hand()
{
    if (!hand_) {
        input("hand", config_.hand);
        hand_ = read_hand_model(config_.hand);
        hand_->validate(&mesh());
    }
    return *hand_;
}

const GraspSchedule& Pipeline::schedule()
{
    if (!schedule_) {
        input("schedule", config_.schedule);
        schedule_ = read_schedule(config_.schedule, hand());
        if (schedule_->poses.empty()) {
            throw Error("schedule " + config_.schedule.string() + " has no rows");
        }
    }
    return *schedule_;
}

const GraspSpace& Pipeline::grasp_space()
{
    if (!space_) {
        space_ = build_grasp_space(mesh(), config_.grasp_options());
        if (!space_->complete) {
            warnings_.push_back("fgs: " + std::to_string(space_->uncovered_faces.size()) +
                                " faces are not covered by the ellipsoid union");
        }
    }
    return *space_;
}

const ResidualNet* Pipeline::network()
{
    if (!net_ && !net_loaded_ && !config_.model.empty()) {
        net_loaded_ = true;
        input("model", config_.model);
        net_ = ResidualNet::from_json(io::read_text(config_.model));
        if (net_->input_dim() != layer_input_size) {
            throw Error("model " + config_.model.string() + " expects " + std::to_string(net_->input_dim()) +
                        " inputs, layer features have " + std::to_string(layer_input_size));
        }
    }
    return net_ ? &*net_ : nullptr;
}

void Pipeline::measure()
{
    stage("measure", [&] {
        const Mesh& m = mesh();
        const auto mm = morphprint::measure(m);
        const auto& rep = mesh_->report;
        json j;
        j["mesh"] = config_.mesh.filename().string();
        j["vertices"] = m.vertex_count();
        j["faces"] = m.face_count();
        j["closed"] = m.is_closed();
        j["load"] = {{"input_triangles", rep.input_triangles},
                     {"welded_vertices", rep.welded_vertices},
                     {"dropped_degenerate", rep.dropped_degenerate},
                     {"orientation_flipped", rep.orientation_flipped},
                     {"warnings", rep.warnings}};
        j["surface_area"] = mm.surface_area;
        j["volume"] = mm.volume;
        j["centroid"] = vec_json(mm.centroid);
        j["aabb"] = {{"min", vec_json(mm.aabb.min)}, {"max", vec_json(mm.aabb.max)}};
        j["strokes"] = vec_json(mm.aabb.strokes());
        j["stroke_ratio"] = vec_json(mm.stroke_ratio);
        j["centroid_ratio"] = vec_json(mm.centroid_ratio);
        j["inverted"] = mm.inverted;
        emit("measure.json", dump(j));
    });
}

void Pipeline::fgs()
{
    stage("fgs", [&] {
        const GraspSpace& s = grasp_space();
        json ells = json::array();
        for (const auto& e : s.ellipsoids) {
            json shape = json::array();
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    shape.push_back(e.shape()(r, c));
                }
            }
            ells.push_back({{"center", vec_json(e.center())},
                            {"semi_axes", vec_json(e.semi_axes())},
                            {"angles", json::array({e.angles().x, e.angles().y, e.angles().z})},
                            {"shape", shape},
                            {"volume", e.volume()}});
        }
        json j;
        j["ellipsoids"] = ells;
        j["facet_cover"] = s.facet_cover;
        j["uncovered_faces"] = s.uncovered_faces;
        j["complete"] = s.complete;
        j["envelope_error"] = s.envelope_error;
        j["refinements"] = s.refinements;
        j["reach_margin"] = config_.grasp_space.reach_margin;
        j["union"] = {{"centroid", vec_json(s.centroid)}, {"surface_area", s.surface_area}, {"volume", s.volume}};
        emit("fgs.json", dump(j));
    });
}

void Pipeline::morph()
{
    stage("morph", [&] {
        const Mesh& base = mesh();
        const HandModel& h = hand();
        const GraspSchedule& sched = schedule();
        const GraspSpace& space = grasp_space();
        const auto variants = morph_schedule(base, h, space, sched, config_.laplacian);

        GraspMorpher morpher(base, space, h.control_vertices(), config_.laplacian);
        json anchors = json::object();
        for (const auto& [v, p] : morpher.system().anchors()) {
            anchors[std::to_string(v)] = vec_json(p);
        }
        emit("morph/anchors.json", dump(anchors));

        json targets = json::array();
        io::CsvWriter table({"row", "time", "morph_energy", "max_displacement", "volume"});
        for (const auto& var : variants) {
            char name[32];
            std::snprintf(name, sizeof(name), "morph/pose_%03zu.obj", var.row);
            save_mesh(var.mesh, config_.output / name, MeshFormat::Obj);
            record(name);
            double disp = 0.0;
            for (std::size_t i = 0; i < base.vertex_count(); ++i) {
                disp = std::max(disp, (var.mesh.vertices()[i] - base.vertices()[i]).norm());
            }
            const double row[] = {static_cast<double>(var.row), sched.time[var.row], var.morph_energy, disp,
                                  std::abs(signed_volume(var.mesh))};
            table.row(row);
            json t = json::object();
            for (const auto& [v, p] : h.targets(base, sched.poses[var.row])) {
                t[std::to_string(v)] = vec_json(p);
            }
            targets.push_back({{"row", var.row}, {"time", sched.time[var.row]}, {"controls", t}});
        }
        emit("morph/targets.json", dump(targets));
        emit("morph/morph.csv", table.str());
    });
}

void Pipeline::slice()
{
    stage("slice", [&] {
        const Mesh& m = mesh();
        const LayerStack stack = morphprint::slice(m, config_.slicer.thickness);
        for (const auto& w : stack.warnings) {
            warnings_.push_back("slice: " + w);
        }
        const Frame2 frame = xy_frame(stack.aabb);
        const int res = config_.slicer.resolution;
        io::CsvWriter layers({"layer", "z", "h_n", "section", "rings", "mask_area", "toolpath_length",
                              "travel_length", "turns", "infill_rate"});
        std::string paths = "layer,x0,y0,x1,y1,extrude\n";
        for (const auto& layer : stack.layers) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "layer_%03zu", layer.index);
            json rings = json::array();
            for (const auto& ring : layer.polygons) {
                json pts = json::array();
                for (const auto& p : ring) {
                    pts.push_back(json::array({p.x(), p.y()}));
                }
                rings.push_back(pts);
            }
            emit(std::string("slice/") + stem + ".json", dump({{"index", layer.index},
                                                               {"z", layer.z},
                                                               {"h_n", layer.h_n},
                                                               {"section", layer.section},
                                                               {"polygons", rings}}));

            const Lcm lcm = rasterize_lcm(layer, frame, res);
            std::vector<std::uint8_t> pixels(static_cast<std::size_t>(lcm.width * lcm.height));
            std::string csv;
            for (int r = 0; r < lcm.height; ++r) {
                for (int c = 0; c < lcm.width; ++c) {
                    const bool on = lcm.mask(r, c) > 0.5;
                    pixels[static_cast<std::size_t>(r * lcm.width + c)] = on ? 255 : 0;
                    csv += on ? '1' : '0';
                    csv += c + 1 < lcm.width ? ',' : '\n';
                }
            }
            emit(std::string("slice/masks/") + stem + ".pgm", io::encode_pgm(lcm.width, lcm.height, pixels));
            emit(std::string("slice/masks/") + stem + ".csv", csv);

            const auto tp = infill(layer, config_.slicer.pattern, config_.slicer.spacing, config_.printer.line_width);
            for (const auto& seg : tp.path) {
                paths += std::to_string(layer.index) + "," + io::format_double(seg.a.x()) + "," +
                         io::format_double(seg.a.y()) + "," + io::format_double(seg.b.x()) + "," +
                         io::format_double(seg.b.y()) + "," + (seg.extrude ? "1" : "0") + "\n";
            }
            const double row[] = {static_cast<double>(layer.index),
                                  layer.z,
                                  layer.h_n,
                                  layer.section,
                                  static_cast<double>(layer.polygons.size()),
                                  lcm.filled_area(),
                                  tp.length,
                                  tp.travel_length,
                                  static_cast<double>(tp.turns),
                                  tp.infill_rate};
            layers.row(row);
        }
        emit("slice/layers.csv", layers.str());
        emit("slice/toolpaths.csv", paths);

        const auto sup = support_stats(m, config_.slicer.support);
        io::CsvWriter points({"x", "y", "z", "length", "bottom"});
        for (std::size_t i = 0; i < sup.lengths.size(); ++i) {
            const double row[] = {sup.origins[i].x(), sup.origins[i].y(), sup.origins[i].z(), sup.lengths[i],
                                  sup.bottom[i] ? 1.0 : 0.0};
            points.row(row);
        }
        emit("slice/supports.csv", points.str());
        json s;
        s["layers"] = stack.layers.size();
        s["thickness"] = stack.thickness;
        s["nudged_planes"] = stack.nudged_planes;
        s["open_chains"] = stack.open_chains;
        s["pattern"] = to_string(config_.slicer.pattern);
        s["spacing"] = config_.slicer.spacing;
        s["resolution"] = res;
        s["support"] = {{"count", sup.lengths.size()},
                        {"bottom", sup.bottom_count},
                        {"non_bottom", sup.non_bottom_count},
                        {"max", sup.max},
                        {"min", sup.min},
                        {"mean", sup.mean},
                        {"median", sup.median},
                        {"sum", sup.sum},
                        {"sampled_area", sup.sampled_area}};
        emit("slice/slice.json", dump(s));
    });
}

namespace {

json report_json(const EnergyReport& r)
{
    return {{"volume", r.volume},       {"melting", r.melting}, {"superheat", r.superheat},
            {"motion", r.motion},       {"total", r.total},     {"print_time", r.print_time}};
}

json process_json(const ProcessParams& p)
{
    return {{"nozzle_temperature", p.nozzle_temperature},
            {"temperature_gradient", p.temperature_gradient},
            {"velocity", p.velocity},
            {"thickness", p.thickness}};
}

} // namespace

void Pipeline::energy()
{
    stage("energy", [&] {
        const Mesh& m = mesh();
        const LabelContext ctx{config_.material, config_.printer};
        const double volume = std::abs(signed_volume(m));
        const LayerStack stack = morphprint::slice(m, config_.process.thickness);
        json j;
        j["process"] = process_json(config_.process);
        j["mesh_volume"] = volume;
        j["analytic"] = report_json(process_energy(config_.material, config_.printer, config_.process, volume));
        j["sliced"] = report_json(stack_energy(stack, config_.process, ctx));
        j["layers"] = stack.layers.size();
        j["geometric_error"] =
            stack_geometric_error(stack, config_.process.temperature_gradient, config_.printer.thermal_coeff);
        json logs = json::array();
        for (const auto& [row, path] : config_.power_logs) {
            input("power_log", path);
            const auto log = read_power_log(path);
            logs.push_back({{"row", row},
                            {"energy", integrate_power(log)},
                            {"duration", log.t.back() - log.t.front()},
                            {"samples", log.t.size()}});
        }
        j["power_logs"] = logs;
        emit("energy.json", dump(j));
    });
}

void Pipeline::train()
{
    stage("train", [&] {
        const Mesh& base = mesh();
        const HandModel& h = hand();
        const GraspSchedule& sched = schedule();
        const GraspSpace& space = grasp_space();
        const LabelContext ctx{config_.material, config_.printer};
        const std::size_t rows = sched.poses.size();
        const auto process = sample_process(config_.bounds, rows * config_.training.process_samples, config_.seed);
        std::map<std::size_t, PowerLog> measured;
        for (const auto& [row, path] : config_.power_logs) {
            if (row >= sched.poses.size()) {
                throw Error("power_logs: row " + std::to_string(row) + " is beyond the schedule (" +
                            std::to_string(sched.poses.size()) + " rows)");
            }
            input("power_log", path);
            measured[row] = read_power_log(path);
        }
        Dataset data;
        for (std::size_t k = 0; k < config_.training.process_samples; ++k) {
            const std::vector<ProcessParams> draw(process.begin() + static_cast<std::ptrdiff_t>(k * rows),
                                                  process.begin() + static_cast<std::ptrdiff_t>((k + 1) * rows));
            data.append(augment_and_label(base, h, space, sched, ctx, draw, k == 0 ? measured : decltype(measured){},
                                          {config_.slicer.resolution, config_.laplacian}));
        }
        emit("train/dataset.csv", data.to_csv());

        auto models = data.models();
        std::mt19937_64 rng(config_.seed);
        std::shuffle(models.begin(), models.end(), rng);
        std::size_t n_val = 0;
        if (models.size() > 1 && config_.training.validation_fraction > 0.0) {
            n_val = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::llround(config_.training.validation_fraction * models.size())), 1,
                models.size() - 1);
        }
        std::vector<std::size_t> val_models(models.begin(), models.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::sort(val_models.begin(), val_models.end());
        std::vector<std::size_t> tr_idx, val_idx;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const bool v = std::binary_search(val_models.begin(), val_models.end(), data.samples[i].model);
            (v ? val_idx : tr_idx).push_back(i);
        }
        const Dataset tr = data.subset(tr_idx);
        const Dataset val = data.subset(val_idx);

        ResidualNet net(layer_input_size, config_.training.hidden, config_.training.blocks, config_.seed);
        auto result = morphprint::train(std::move(net), tr.features(), tr.labels(),
                                        tr.weights(config_.training.pseudo_weight), config_.train_options());
        if (result.diverged) {
            warnings_.push_back("train: loss diverged; parameters of the last finite epoch were kept");
        }
        emit("train/model.json", result.net.to_json());
        io::CsvWriter loss({"epoch", "loss"});
        for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
            const double row[] = {static_cast<double>(e), result.loss_history[e]};
            loss.row(row);
        }
        emit("train/loss.csv", loss.str());

        double val_mse = 0.0;
        if (val.size() > 0) {
            const Eigen::VectorXd pred = result.net.forward_batch(val.features());
            const Eigen::VectorXd y = val.labels();
            val_mse = mse_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                               std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
        }
        json procs = json::array();
        for (const auto& p : process) {
            procs.push_back(process_json(p));
        }
        json j;
        j["samples"] = data.size();
        j["train_samples"] = tr.size();
        j["validation_samples"] = val.size();
        j["validation_models"] = val_models;
        j["measured_models"] = json::array();
        for (const auto& [row, log] : measured) {
            j["measured_models"].push_back(row);
        }
        j["process"] = procs;
        j["parameters"] = result.net.parameter_count();
        j["epochs_run"] = result.epochs_run;
        j["diverged"] = result.diverged;
        j["initial_loss"] = result.loss_history.front();
        j["final_loss"] = result.loss_history.back();
        j["validation_mse"] = val_mse;
        emit("train/train.json", dump(j));
        net_ = std::move(result.net);
    });
}

void Pipeline::predict()
{
    stage("predict", [&] {
        const ResidualNet* net = network();
        if (!net) {
            throw Error("predict: no network; run train first or set model");
        }
        const Mesh& m = mesh();
        const LabelContext ctx{config_.material, config_.printer};
        const LayerStack stack = morphprint::slice(m, config_.process.thickness);
        const Dataset rows = label_layers(stack, config_.process, ctx, nullptr, 0, config_.slicer.resolution);
        const Eigen::VectorXd pred =
            rows.size() ? net->forward_batch(rows.features()) : Eigen::VectorXd(Eigen::VectorXd::Zero(0));
        io::CsvWriter table({"layer", "z", "h_n", "section", "analytic", "predicted"});
        double analytic_total = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& layer = stack.layers[i];
            const double row[] = {static_cast<double>(i), layer.z, layer.h_n, layer.section, rows.samples[i].label,
                                  pred[static_cast<Eigen::Index>(i)]};
            table.row(row);
            analytic_total += rows.samples[i].label;
        }
        emit("predict/predictions.csv", table.str());
        json j;
        j["process"] = process_json(config_.process);
        j["layers"] = rows.size();
        j["predicted_total"] = pred.sum();
        j["analytic_total"] = analytic_total;
        j["relative_error"] = analytic_total != 0.0 ? std::abs(pred.sum() - analytic_total) / std::abs(analytic_total) : 0.0;
        emit("predict/predict.json", dump(j));
    });
}

void Pipeline::optimize()
{
    stage("optimize", [&] {
        const Mesh& base = mesh();
        const HandModel& h = hand();
        const GraspSpace& space = grasp_space();
        const ResidualNet* net = config_.optimizer.use_network ? network() : nullptr;
        if (config_.optimizer.use_network && !net) {
            warnings_.push_back("optimize: no network available; E_total uses the analytic model");
        }
        const PipelineProblem problem(base, h, space, {config_.material, config_.printer}, config_.bounds,
                                      config_.laplacian, config_.slicer.resolution, net);
        const Eigen::VectorXd lo = problem.lower(), hi = problem.upper();
        const ParetoFront result = nsga2(problem, lo, hi, config_.nsga_options());
        const auto front = result.front();

        auto header = problem.variable_names();
        header.insert(header.end(), {"e_total", "morph_energy", "geometric_error", "print_time", "e_melting", "rank",
                                     "crowding"});
        io::CsvWriter pareto(header);
        std::size_t bound_ok = 0, grasp_ok = 0;
        for (const auto& ind : front) {
            const CandidateReport rep = problem.report(ind.x);
            std::vector<double> row(ind.x.data(), ind.x.data() + ind.x.size());
            row.insert(row.end(), ind.eval.objectives.begin(), ind.eval.objectives.end());
            row.insert(row.end(), {rep.print_time, rep.melting, static_cast<double>(ind.rank), ind.crowding});
            pareto.row(row);
            bound_ok += ((ind.x - lo).minCoeff() >= 0.0 && (hi - ind.x).minCoeff() >= 0.0) ? 1 : 0;
            grasp_ok += problem.grasp_violation(ind.x.head(static_cast<Eigen::Index>(h.joint_count()))) <= 0.0;
        }
        emit("optimize/pareto.csv", pareto.str());

        io::CsvWriter gens({"generation", "feasible", "front_size", "hypervolume", "best_e_total", "best_morph_energy",
                            "best_geometric_error"});
        for (const auto& g : result.history) {
            std::vector<double> row{static_cast<double>(g.generation), static_cast<double>(g.feasible),
                                    static_cast<double>(g.front_size), g.hypervolume};
            row.insert(row.end(), g.best.begin(), g.best.end());
            row.resize(7, std::numeric_limits<double>::quiet_NaN());
            gens.row(row);
        }
        emit("optimize/generations.csv", gens.str());

        json j;
        j["variables"] = problem.variable_names();
        j["lower"] = std::vector<double>(lo.data(), lo.data() + lo.size());
        j["upper"] = std::vector<double>(hi.data(), hi.data() + hi.size());
        j["energy_model"] = net ? "network" : "analytic";
        j["reference"] = result.reference;
        j["evaluations"] = result.evaluations;
        j["cache_hits"] = result.cache_hits;
        j["front_size"] = front.size();
        j["front_within_bounds"] = bound_ok;
        j["front_in_grasp_space"] = grasp_ok;
        j["final_hypervolume"] = result.history.empty() ? 0.0 : result.history.back().hypervolume;
        emit("optimize/optimize.json", dump(j));
    });
}

void Pipeline::run(std::string_view name)
{
    if (name == "measure") {
        measure();
    } else if (name == "fgs") {
        fgs();
    } else if (name == "morph") {
        morph();
    } else if (name == "slice") {
        slice();
    } else if (name == "energy") {
        energy();
    } else if (name == "train") {
        train();
    } else if (name == "predict") {
        predict();
    } else if (name == "optimize") {
        optimize();
    } else if (name == "pipeline") {
        run_all();
    } else {
        throw Error("unknown stage '" + std::string(name) + "'");
    }
}

void Pipeline::run_all()
{
    for (const auto& s : stage_names()) {
        run(s);
    }
}

json Pipeline::finish(const std::string& error)
{
    json j;
    j["tool"] = "morphprint";
    j["version"] = MORPHPRINT_VERSION;
    j["command"] = command_;
    j["status"] = error.empty() ? "ok" : "error";
    if (!error.empty()) {
        j["error"] = {{"stage", current_stage_}, {"message", error}};
    }
    j["seed"] = config_.seed;
    j["config_hash"] = config_.hash();
    j["config"] = config_.to_json();
    j["config"].erase("output");
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["timings"] = timings_;
    j["warnings"] = warnings_;
    io::write_text(config_.output / "manifest.json", dump(j));
    return j;
}

} // namespace morphprint
