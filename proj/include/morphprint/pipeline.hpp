#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "morphprint/augment.hpp"
#include "morphprint/ellipsoid.hpp"
#include "morphprint/energy.hpp"
#include "morphprint/hand.hpp"
#include "morphprint/laplacian.hpp"
#include "morphprint/mesh.hpp"
#include "morphprint/nsga2.hpp"
#include "morphprint/resnet.hpp"
#include "morphprint/slicer.hpp"

namespace morphprint {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Invalid configuration; what() joins every problem, one per line.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct SlicerSettings {
    double thickness = 0.2;
    int resolution = 32;
    InfillPattern pattern = InfillPattern::Triangle;
    double spacing = 2.0;
    SupportOptions support;
};

struct TrainingSettings {
    TrainOptions options;
    std::size_t hidden = 64;
    std::size_t blocks = 3;
    double pseudo_weight = 0.5;
    /// Share of schedule poses held out for validation.
    double validation_fraction = 0.25;
    /// Process settings drawn per schedule pose; measured logs label the first.
    std::size_t process_samples = 8;
};

struct OptimizerSettings {
    Nsga2Options options;
    /// Predict E_total with the trained network when one is available.
    bool use_network = true;
};

/// Every setting of a run. Paths are absolute once parsed; relative paths in
/// a config file are resolved against the file's directory.
struct RunConfig {
    std::filesystem::path mesh;
    std::filesystem::path hand;
    std::filesystem::path schedule;
    /// Network checkpoint used by predict/optimize when train did not run.
    std::filesystem::path model;
    std::filesystem::path output = "morphprint-out";
    /// Schedule row -> measured power log.
    std::map<std::size_t, std::filesystem::path> power_logs;
    std::uint64_t seed = 42;

    MaterialParams material;
    PrinterParams printer;
    /// Nominal process used by slice, energy and predict.
    ProcessParams process;
    ProcessBounds bounds;
    GraspSpaceOptions grasp_space;
    LaplacianOptions laplacian;
    SlicerSettings slicer;
    TrainingSettings training;
    OptimizerSettings optimizer;

    /// Copies of the component options with the run seed applied.
    GraspSpaceOptions grasp_options() const;
    TrainOptions train_options() const;
    Nsga2Options nsga_options() const;

    /// Every problem for running `command` ("pipeline" checks all stages).
    std::vector<std::string> violations(std::string_view command) const;
    void validate(std::string_view command) const;

    /// Canonical JSON of every effective setting (sorted keys).
    nlohmann::json to_json() const;
    /// SHA-256 of the canonical settings, excluding the output directory.
    std::string hash() const;

    /// Unknown keys and type errors are thrown together as a ConfigError, or
    /// appended to `problems` when given (offending fields keep defaults).
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                               std::vector<std::string>* problems = nullptr);
    /// Reads `file` (empty: defaults only), applies `overrides` as a JSON merge
    /// patch and parses the result relative to the file's directory.
    static RunConfig load(const std::filesystem::path& file, const nlohmann::json& overrides = nlohmann::json::object(),
                          std::vector<std::string>* problems = nullptr);
};

struct CandidateReport {
    /// Objectives {E_total kJ, E(V') , epsilon_geometric mm}.
    Evaluation eval;
    double print_time = 0.0;
    double melting = 0.0;
    std::size_t layers = 0;
};

/// Decision vector [joint angles, T_n, grad T, V_F, d] evaluated by morphing
/// the mesh to the posed grasp targets, slicing at d and estimating energy
/// with the network (or the analytic model) and geometric error with the
/// thermal surrogate. Targets outside the grasp space are infeasible.
class PipelineProblem {
public:
    PipelineProblem(const Mesh& mesh, const HandModel& hand, const GraspSpace& space, LabelContext context,
                    ProcessBounds bounds, const LaplacianOptions& laplacian = {}, int resolution = 32,
                    const ResidualNet* net = nullptr);

    std::size_t dimension() const;
    Eigen::VectorXd lower() const;
    Eigen::VectorXd upper() const;
    std::vector<std::string> variable_names() const;
    bool uses_network() const noexcept { return net_ != nullptr; }

    /// Sum of grasp-space violations of the posed targets.
    double grasp_violation(const Eigen::VectorXd& joints) const;
    CandidateReport report(const Eigen::VectorXd& x) const;
    Evaluation operator()(const Eigen::VectorXd& x) const { return report(x).eval; }

private:
    const Mesh* mesh_;
    const HandModel* hand_;
    const GraspSpace* space_;
    LabelContext context_;
    ProcessBounds bounds_;
    int resolution_;
    const ResidualNet* net_;
    std::shared_ptr<GraspMorpher> morpher_;
};

/// One run: stages share loaded inputs and write into the output directory;
/// finish() writes manifest.json (inputs, config hash, seed, outputs with
/// digests, timings, warnings).
class Pipeline {
public:
    Pipeline(RunConfig config, std::string command);
    ~Pipeline();

    const RunConfig& config() const noexcept { return config_; }
    const std::filesystem::path& output() const noexcept { return config_.output; }

    void measure();
    void fgs();
    void morph();
    void slice();
    void energy();
    void train();
    void predict();
    void optimize();
    /// Every stage in order.
    void run_all();
    /// Runs the stage named like a subcommand.
    void run(std::string_view stage);

    /// Writes manifest.json; `error` marks a failed run.
    nlohmann::json finish(const std::string& error = {});

    const Mesh& mesh();
    const HandModel& hand();
    const GraspSchedule& schedule();
    const GraspSpace& grasp_space();
    /// Trained or loaded network; null when neither is available.
    const ResidualNet* network();

private:
    template <class F>
    void stage(const std::string& name, F&& body);
    void input(const std::string& role, const std::filesystem::path& path);
    void emit(const std::string& rel, const std::string& contents);
    void record(const std::string& rel);

    RunConfig config_;
    std::string command_;
    std::optional<LoadedMesh> mesh_;
    std::optional<HandModel> hand_;
    std::optional<GraspSchedule> schedule_;
    std::optional<GraspSpace> space_;
    std::optional<ResidualNet> net_;
    bool net_loaded_ = false;
    nlohmann::json inputs_ = nlohmann::json::array();
    nlohmann::json outputs_ = nlohmann::json::array();
    nlohmann::json timings_ = nlohmann::json::object();
    std::vector<std::string> warnings_;
    std::string current_stage_;
};

/// Stage names in pipeline order.
const std::vector<std::string>& stage_names();

} // namespace morphprint
