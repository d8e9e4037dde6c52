#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphprint/ellipsoid.hpp"
#include "morphprint/energy.hpp"
#include "morphprint/hand.hpp"
#include "morphprint/laplacian.hpp"
#include "morphprint/resnet.hpp"
#include "morphprint/slicer.hpp"

namespace morphprint {

/// LCM features followed by h_n, S_section, T_n, grad T, V_F and d.
inline constexpr std::size_t layer_input_size = lcm_feature_size + 6;

std::vector<std::string> feature_names();
std::vector<double> layer_input(const Layer& layer, const Lcm& lcm, const ProcessParams& process);

struct Sample {
    std::vector<double> x;
    double label = 0.0;
    bool pseudo = true;
    std::size_t model = 0;
    std::size_t layer = 0;
};

struct Dataset {
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    /// Column per sample.
    Eigen::MatrixXd features() const;
    Eigen::VectorXd labels() const;
    /// 1 for measured rows, `pseudo_weight` for pseudo-labeled rows.
    Eigen::VectorXd weights(double pseudo_weight) const;
    std::vector<std::size_t> models() const;
    Dataset where_model(std::size_t model) const;
    Dataset subset(const std::vector<std::size_t>& indices) const;
    void append(const Dataset& other);

    std::string to_csv() const;
    static Dataset from_csv(const std::string& text);
};

struct LabelContext {
    MaterialParams material;
    PrinterParams printer;
};

/// Energy of [t0, t1] of a power log, linearly interpolated, in kJ.
double integrate_power_window(const PowerLog& log, double t0, double t1);

/// One row per layer. With a measured log the log's span is split across
/// layers in proportion to their section areas and each window integrated;
/// otherwise the analytic process energy of the sliced volume is apportioned
/// by section area (pseudo-labels).
Dataset label_layers(const LayerStack& stack, const ProcessParams& process, const LabelContext& context,
                     const PowerLog* measured, std::size_t model, int resolution = 32);

/// Analytic energy of the sliced volume sum |S_section| d.
EnergyReport stack_energy(const LayerStack& stack, const ProcessParams& process, const LabelContext& context);

struct AugmentOptions {
    int resolution = 32;
    LaplacianOptions laplacian;
};

struct PoseVariant {
    std::size_t row = 0;
    Mesh mesh;
    double morph_energy = 0.0;
};

/// Morphs the base mesh for every schedule row. Constraint violations are
/// rethrown naming the schedule row.
std::vector<PoseVariant> morph_schedule(const Mesh& base, const HandModel& hand, const GraspSpace& space,
                                        const GraspSchedule& schedule, const LaplacianOptions& options = {});

/// Morph, slice and label every schedule row. `process` holds one entry per
/// row or a single entry shared by all rows; `measured` maps row -> log.
Dataset augment_and_label(const Mesh& base, const HandModel& hand, const GraspSpace& space,
                          const GraspSchedule& schedule, const LabelContext& context,
                          const std::vector<ProcessParams>& process, const std::map<std::size_t, PowerLog>& measured,
                          const AugmentOptions& options = {});

struct ProcessBounds {
    Eigen::Vector4d lower{473.15, 0.0, 20.0, 0.1};
    Eigen::Vector4d upper{503.15, 10.0, 60.0, 0.4};
};

ProcessParams process_from_vector(const Eigen::Vector4d& v);
Eigen::Vector4d process_to_vector(const ProcessParams& p);
/// Seeded uniform draws inside the bounds.
std::vector<ProcessParams> sample_process(const ProcessBounds& bounds, std::size_t count, std::uint64_t seed);

struct AugmentationBenchmark {
    std::size_t train_size = 0;
    double augmented_mse = 0.0;
    std::vector<double> single_pose_mse;
    double best_single_mse = 0.0;
};

/// Trains one net on `train_size` rows drawn across every model of `pool`
/// and one net per model on `train_size` rows of that model alone, then
/// compares validation L_MSE. train_size defaults to the smallest model.
AugmentationBenchmark benchmark_augmentation(const Dataset& pool, const Dataset& validation,
                                             const TrainOptions& options, std::size_t hidden = 64,
                                             std::size_t blocks = 3, std::size_t train_size = 0);

} // namespace morphprint
