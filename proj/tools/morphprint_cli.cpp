// morphprint command-line front end: one subcommand per pipeline stage.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "morphprint/hand.hpp"
#include "morphprint/io.hpp"
#include "morphprint/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace morphprint;

namespace {

/// A flag whose value is written into the config document at `key`.
struct Mapped {
    std::string key;
    bool path = false;
    bool pair = false;
    std::string value;
    CLI::Option* option = nullptr;
};

json scalar(const std::string& text)
{
    try {
        json v = json::parse(text);
        if (v.is_primitive()) {
            return v;
        }
    } catch (const json::parse_error&) {
    }
    return text;
}

void put(json& doc, const std::string& dotted, json value)
{
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = dotted.find('.', start);
        const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) {
            (*node)[part] = json::object();
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

void report_error(const std::string& command, const std::string& type, const std::string& message,
                  const std::vector<std::string>& problems = {})
{
    json j{{"status", "error"}, {"command", command}, {"error", {{"type", type}, {"message", message}}}};
    if (!problems.empty()) {
        j["error"]["problems"] = problems;
    }
    std::cerr << j.dump(2) << "\n";
}

int make_hand(const fs::path& dir)
{
    const auto hand = make_synthetic_hand();
    fs::create_directories(dir);
    save_mesh(hand.mesh, dir / "hand.obj", MeshFormat::Obj);
    io::write_text(dir / "hand.json", hand_model_json(hand.model));
    io::write_text(dir / "schedules.csv", schedule_csv(hand.schedule));
    json cfg{{"mesh", "hand.obj"},
             {"hand", "hand.json"},
             {"schedule", "schedules.csv"},
             {"output", "out"},
             {"seed", 42},
             {"grasp_space", {{"reach_margin", 1.3}}},
             {"slicer", {{"thickness", 0.4}, {"resolution", 32}, {"pattern", "triangle"}, {"spacing", 2.0}}},
             {"training", {{"epochs", 100}, {"learning_rate", 1e-3}, {"batch_size", 32}}},
             {"optimizer", {{"population", 40}, {"generations", 25}}}};
    io::write_text(dir / "config.json", cfg.dump(2) + "\n");
    std::cout << json{{"status", "ok"}, {"output", dir.generic_string()}}.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Grasp-driven morphing, slicing, energy prediction and process optimization for 3D printing"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string("morphprint ") + MORPHPRINT_VERSION + " (" + __DATE__ + ", " +
                                          (sizeof(void*) == 8 ? "64-bit" : "32-bit") + ")");

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "Run configuration (JSON)")->envname("MORPHPRINT_CONFIG");
    app.add_option("--set", sets, "Override any config field, e.g. --set slicer.spacing=1.5");

    std::vector<std::unique_ptr<Mapped>> mapped;
    auto flag = [&](const std::string& name, const std::string& key, const std::string& help,
                    const std::string& group) {
        auto m = std::make_unique<Mapped>();
        m->key = key;
        m->option = app.add_option(name, m->value, help)->group(group);
        mapped.push_back(std::move(m));
        return mapped.back().get();
    };
    flag("--seed", "seed", "Seed for every stochastic component", "Run");
    flag("--out", "output", "Output directory", "Run")->path = true;
    flag("--mesh", "mesh", "Input mesh (STL or OBJ)", "Run")->path = true;
    flag("--hand", "hand", "Hand model (JSON DH tables and bindings)", "Run")->path = true;
    flag("--schedule", "schedule", "Joint-angle schedule (CSV)", "Run")->path = true;
    flag("--model", "model", "Network checkpoint (JSON)", "Run")->path = true;

    flag("--specific-heat", "material.specific_heat", "kJ/(kg K)", "Material");
    flag("--density", "material.density", "kg/m^3", "Material");
    flag("--melt-temperature", "material.melt_temperature", "K", "Material");
    flag("--ambient-temperature", "material.ambient_temperature", "K", "Material");
    flag("--latent-heat", "material.latent_heat", "kJ/kg", "Material");
    flag("--filament-area", "material.filament_area", "mm^2", "Material");

    flag("--motion-power", "printer.motion_power", "W", "Printer");
    flag("--line-width", "printer.line_width", "mm", "Printer");
    flag("--infill-rate", "printer.infill_rate", "(0, 1]", "Printer");
    flag("--thermal-coeff", "printer.thermal_coeff", "mm^2/K", "Printer");

    flag("--nozzle-temperature", "process.nozzle_temperature", "K", "Process");
    flag("--temperature-gradient", "process.temperature_gradient", "K/mm", "Process");
    flag("--velocity", "process.velocity", "mm/s", "Process");
    flag("--layer-thickness", "process.thickness", "mm (energy and predict)", "Process");
    for (const char* k : {"nozzle_temperature", "temperature_gradient", "velocity", "thickness"}) {
        std::string name = std::string("--bounds-") + k;
        std::replace(name.begin(), name.end(), '_', '-');
        flag(name, std::string("bounds.") + k, "LOWER,UPPER", "Bounds")->pair = true;
    }

    flag("--max-ellipsoids", "grasp_space.max_ellipsoids", "", "Grasp space");
    flag("--envelope-eps", "grasp_space.envelope_eps", "", "Grasp space");
    flag("--mvee-eps", "grasp_space.mvee_eps", "", "Grasp space");
    flag("--mvee-max-iterations", "grasp_space.mvee_max_iterations", "", "Grasp space");
    flag("--monte-carlo-samples", "grasp_space.monte_carlo_samples", "", "Grasp space");
    flag("--max-refinements", "grasp_space.max_refinements", "", "Grasp space");
    flag("--reach-margin", "grasp_space.reach_margin", "Semi-axis scale factor >= 1", "Grasp space");

    flag("--weights", "laplacian.mode", "uniform | gauss-uniform", "Morphing");
    flag("--gauss-sigma", "laplacian.gauss_sigma", "", "Morphing");

    flag("--thickness", "slicer.thickness", "Layer thickness d, mm", "Slicer");
    flag("--resolution", "slicer.resolution", "Mask resolution (pixels per side)", "Slicer");
    flag("--pattern", "slicer.pattern", "line | grid | triangle | tri-hexagon", "Slicer");
    flag("--spacing", "slicer.spacing", "Infill spacing, mm", "Slicer");
    flag("--overhang-threshold", "slicer.overhang_threshold_deg", "Degrees from -z", "Slicer");
    flag("--support-density", "slicer.support_density", "Samples per mm^2", "Slicer");

    flag("--learning-rate", "training.learning_rate", "", "Training");
    flag("--batch-size", "training.batch_size", "", "Training");
    flag("--epochs", "training.epochs", "", "Training");
    flag("--hidden", "training.hidden", "", "Training");
    flag("--blocks", "training.blocks", "", "Training");
    flag("--pseudo-weight", "training.pseudo_weight", "", "Training");
    flag("--validation-fraction", "training.validation_fraction", "", "Training");
    flag("--process-samples", "training.process_samples", "Process settings per pose", "Training");
    flag("--shuffle", "training.shuffle", "true | false", "Training");
    flag("--normalize", "training.normalize", "true | false", "Training");

    flag("--population", "optimizer.population", "", "Optimizer");
    flag("--generations", "optimizer.generations", "", "Optimizer");
    flag("--crossover-probability", "optimizer.crossover_probability", "", "Optimizer");
    flag("--eta-crossover", "optimizer.eta_crossover", "", "Optimizer");
    flag("--eta-mutation", "optimizer.eta_mutation", "", "Optimizer");
    flag("--mutation-probability", "optimizer.mutation_probability", "<= 0 selects 1/n", "Optimizer");
    flag("--cache", "optimizer.cache", "true | false", "Optimizer");
    flag("--use-network", "optimizer.use_network", "true | false", "Optimizer");

    std::vector<std::string> power_logs;
    app.add_option("--power-log", power_logs, "Measured log for a schedule row, ROW=PATH")->group("Energy");

    std::string positional;
    const std::vector<std::pair<std::string, std::string>> stages{
        {"measure", "Mesh area, volume, centroid and bounding box"},
        {"fgs", "Grasp space as a union of enclosing ellipsoids"},
        {"morph", "Morph the mesh through every schedule pose"},
        {"slice", "Layers, masks, toolpaths and support statistics"},
        {"energy", "Analytic energy report and power-log integration"},
        {"train", "Augment, label and train the energy network"},
        {"predict", "Per-layer energy predictions for the mesh"},
        {"optimize", "NSGA-II over grasp pose and process parameters"},
    };
    for (const auto& [name, help] : stages) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("mesh", positional, "Input mesh (overrides the config)");
    }
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage");
    pipeline->add_option("config", positional, "Run configuration (JSON)");
    std::string hand_dir;
    auto* hand = app.add_subcommand("make-hand", "Write the synthetic hand asset set");
    hand->add_option("dir", hand_dir, "Destination directory")->required();

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "make-hand") {
        try {
            return make_hand(hand_dir);
        } catch (const std::exception& e) {
            report_error(command, "runtime", e.what());
            return 1;
        }
    }

    json overrides = json::object();
    std::vector<std::string> problems;
    for (const auto& m : mapped) {
        if (m->option->count() == 0) {
            continue;
        }
        if (m->path) {
            put(overrides, m->key, fs::absolute(m->value).lexically_normal().generic_string());
        } else if (m->pair) {
            json v = m->value;
            try {
                v = json::parse("[" + m->value + "]");
            } catch (const json::parse_error&) {
            }
            put(overrides, m->key, v);
        } else {
            put(overrides, m->key, scalar(m->value));
        }
    }
    for (const auto& s : power_logs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            problems.push_back("--power-log " + s + ": expected ROW=PATH");
            continue;
        }
        put(overrides, "power_logs." + s.substr(0, eq),
            fs::absolute(s.substr(eq + 1)).lexically_normal().generic_string());
    }
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            problems.push_back("--set " + s + ": expected KEY=VALUE");
            continue;
        }
        put(overrides, s.substr(0, eq), scalar(s.substr(eq + 1)));
    }
    if (command == "pipeline") {
        if (!positional.empty()) {
            config_path = positional;
        }
    } else if (!positional.empty()) {
        put(overrides, "mesh", fs::absolute(positional).lexically_normal().generic_string());
    }
    if (!problems.empty()) {
        report_error(command, "config", "invalid command line", problems);
        return 2;
    }

    std::unique_ptr<Pipeline> run;
    try {
        const RunConfig config = RunConfig::load(config_path, overrides, &problems);
        const auto more = config.violations(command);
        problems.insert(problems.end(), more.begin(), more.end());
        if (!problems.empty()) {
            throw ConfigError(problems);
        }
        run = std::make_unique<Pipeline>(config, command);
    } catch (const ConfigError& e) {
        report_error(command, "config", "invalid configuration", e.problems());
        return 2;
    } catch (const std::exception& e) {
        report_error(command, "config", e.what());
        return 2;
    }

    try {
        run->run(command);
    } catch (const std::exception& e) {
        try {
            run->finish(e.what());
        } catch (const std::exception&) {
        }
        report_error(command, "runtime", e.what());
        return 1;
    }
    const json manifest = run->finish();
    if (command == "measure") {
        std::cout << io::read_text(run->output() / "measure.json");
    } else if (command == "energy") {
        std::cout << io::read_text(run->output() / "energy.json");
    } else {
        std::cout << json{{"status", "ok"},
                          {"command", command},
                          {"output", run->output().generic_string()},
                          {"outputs", manifest["outputs"].size()},
                          {"warnings", manifest["warnings"]}}
                         .dump()
                  << "\n";
    }
    return 0;
}
