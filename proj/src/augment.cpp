#include "morphprint/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "morphprint/io.hpp"

namespace morphprint {

std::vector<std::string> feature_names()
{
    std::vector<std::string> names;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            names.push_back("pool_r" + std::to_string(r) + "c" + std::to_string(c));
        }
    }
    static const char* kernels[] = {"id", "sobel_x", "sobel_y", "laplace"};
    for (int s = 0; s < 3; ++s) {
        for (const char* k : kernels) {
            names.push_back(std::string("conv_s") + std::to_string(s) + "_" + k);
        }
    }
    for (const char* n : {"h_n", "s_section", "t_n", "grad_t", "v_f", "d"}) {
        names.emplace_back(n);
    }
    return names;
}

std::vector<double> layer_input(const Layer& layer, const Lcm& lcm, const ProcessParams& p)
{
    auto x = lcm_features(lcm);
    x.insert(x.end(), {layer.h_n, layer.section, p.nozzle_temperature, p.temperature_gradient, p.velocity, p.thickness});
    return x;
}

Eigen::MatrixXd Dataset::features() const
{
    Eigen::MatrixXd x(static_cast<Eigen::Index>(layer_input_size), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        if (samples[j].x.size() != layer_input_size) {
            throw Error("dataset: sample " + std::to_string(j) + " has " + std::to_string(samples[j].x.size()) +
                        " features, expected " + std::to_string(layer_input_size));
        }
        x.col(static_cast<Eigen::Index>(j)) =
            Eigen::Map<const Eigen::VectorXd>(samples[j].x.data(), static_cast<Eigen::Index>(layer_input_size));
    }
    return x;
}

Eigen::VectorXd Dataset::labels() const
{
    Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        y[static_cast<Eigen::Index>(j)] = samples[j].label;
    }
    return y;
}

Eigen::VectorXd Dataset::weights(double pseudo_weight) const
{
    const bool any_measured = std::any_of(samples.begin(), samples.end(), [](const Sample& s) { return !s.pseudo; });
    Eigen::VectorXd w(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        w[static_cast<Eigen::Index>(j)] = (samples[j].pseudo && any_measured) ? pseudo_weight : 1.0;
    }
    return w;
}

std::vector<std::size_t> Dataset::models() const
{
    std::set<std::size_t> m;
    for (const auto& s : samples) {
        m.insert(s.model);
    }
    return {m.begin(), m.end()};
}

Dataset Dataset::where_model(std::size_t model) const
{
    Dataset out;
    for (const auto& s : samples) {
        if (s.model == model) {
            out.samples.push_back(s);
        }
    }
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const
{
    Dataset out;
    for (auto i : indices) {
        out.samples.push_back(samples.at(i));
    }
    return out;
}

void Dataset::append(const Dataset& other)
{
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

std::string Dataset::to_csv() const
{
    auto header = feature_names();
    header.insert(header.end(), {"label", "is_pseudo", "model", "layer"});
    io::CsvWriter w(header);
    for (const auto& s : samples) {
        std::vector<double> row = s.x;
        row.insert(row.end(), {s.label, s.pseudo ? 1.0 : 0.0, static_cast<double>(s.model), static_cast<double>(s.layer)});
        w.row(row);
    }
    return w.str();
}

Dataset Dataset::from_csv(const std::string& text)
{
    const auto table = io::parse_csv(text);
    std::vector<std::size_t> cols;
    for (const auto& name : feature_names()) {
        cols.push_back(table.column(name));
    }
    const auto cl = table.column("label");
    const auto cp = table.column("is_pseudo");
    const auto cm = table.column("model");
    const auto cy = table.column("layer");
    Dataset d;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        Sample s;
        for (auto c : cols) {
            s.x.push_back(table.number(r, c));
        }
        s.label = table.number(r, cl);
        s.pseudo = table.number(r, cp) != 0.0;
        s.model = static_cast<std::size_t>(table.number(r, cm));
        s.layer = static_cast<std::size_t>(table.number(r, cy));
        d.samples.push_back(std::move(s));
    }
    return d;
}

double integrate_power_window(const PowerLog& log, double t0, double t1)
{
    if (log.t.size() < 2 || log.t.size() != log.watts.size()) {
        throw Error("integrate_power_window: need at least 2 samples");
    }
    if (t1 < t0) {
        std::swap(t0, t1);
    }
    auto power_at = [&](double t) {
        if (t <= log.t.front()) {
            return log.watts.front();
        }
        if (t >= log.t.back()) {
            return log.watts.back();
        }
        const auto it = std::upper_bound(log.t.begin(), log.t.end(), t);
        const auto i = static_cast<std::size_t>(it - log.t.begin());
        const double u = (t - log.t[i - 1]) / (log.t[i] - log.t[i - 1]);
        return log.watts[i - 1] + u * (log.watts[i] - log.watts[i - 1]);
    };
    std::vector<double> knots{t0};
    for (double t : log.t) {
        if (t > t0 && t < t1) {
            knots.push_back(t);
        }
    }
    knots.push_back(t1);
    double joules = 0.0;
    for (std::size_t i = 1; i < knots.size(); ++i) {
        joules += 0.5 * (power_at(knots[i - 1]) + power_at(knots[i])) * (knots[i] - knots[i - 1]);
    }
    return joules / 1000.0;
}

EnergyReport stack_energy(const LayerStack& stack, const ProcessParams& process, const LabelContext& context)
{
    double volume = 0.0;
    for (const auto& l : stack.layers) {
        volume += std::abs(l.section) * stack.thickness;
    }
    ProcessParams p = process;
    p.thickness = stack.thickness;
    return process_energy(context.material, context.printer, p, volume);
}

Dataset label_layers(const LayerStack& stack, const ProcessParams& process, const LabelContext& context,
                     const PowerLog* measured, std::size_t model, int resolution)
{
    Dataset out;
    if (stack.layers.empty()) {
        return out;
    }
    ProcessParams p = process;
    p.thickness = stack.thickness;
    std::vector<double> labels;
    if (measured) {
        const auto shares = apportion(stack.layers, 1.0);
        const double t0 = measured->t.front();
        const double span = measured->t.back() - t0;
        double cum = 0.0;
        for (double s : shares) {
            const double a = t0 + cum * span;
            cum += s;
            labels.push_back(integrate_power_window(*measured, a, t0 + std::min(1.0, cum) * span));
        }
    } else {
        labels = apportion(stack.layers, stack_energy(stack, p, context).total);
    }
    const Frame2 frame = xy_frame(stack.aabb);
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        const Lcm lcm = rasterize_lcm(stack.layers[i], frame, resolution);
        Sample s;
        s.x = layer_input(stack.layers[i], lcm, p);
        s.label = labels[i];
        s.pseudo = measured == nullptr;
        s.model = model;
        s.layer = i;
        out.samples.push_back(std::move(s));
    }
    return out;
}

std::vector<PoseVariant> morph_schedule(const Mesh& base, const HandModel& hand, const GraspSpace& space,
                                        const GraspSchedule& schedule, const LaplacianOptions& options)
{
    hand.validate(&base);
    GraspMorpher morpher(base, space, hand.control_vertices(), options);
    std::vector<PoseVariant> out;
    for (std::size_t r = 0; r < schedule.poses.size(); ++r) {
        MorphResult res;
        try {
            res = morpher.morph(hand.targets(base, schedule.poses[r]));
        } catch (const ConstraintViolation& e) {
            throw ConstraintViolation("schedule row " + std::to_string(r) + ": " + e.what(), e.vertex());
        }
        out.push_back({r, base.with_vertices(std::move(res.vertices)), res.energy});
    }
    return out;
}

Dataset augment_and_label(const Mesh& base, const HandModel& hand, const GraspSpace& space,
                          const GraspSchedule& schedule, const LabelContext& context,
                          const std::vector<ProcessParams>& process, const std::map<std::size_t, PowerLog>& measured,
                          const AugmentOptions& options)
{
    if (process.empty() || (process.size() != 1 && process.size() != schedule.poses.size())) {
        throw Error("augment: need one process setting per schedule row, or a single shared one");
    }
    const auto variants = morph_schedule(base, hand, space, schedule, options.laplacian);
    Dataset out;
    for (const auto& v : variants) {
        const ProcessParams& p = process.size() == 1 ? process.front() : process[v.row];
        const LayerStack stack = slice(v.mesh, p.thickness);
        auto it = measured.find(v.row);
        out.append(label_layers(stack, p, context, it == measured.end() ? nullptr : &it->second, v.row,
                                options.resolution));
    }
    return out;
}

ProcessParams process_from_vector(const Eigen::Vector4d& v)
{
    ProcessParams p;
    p.nozzle_temperature = v[0];
    p.temperature_gradient = v[1];
    p.velocity = v[2];
    p.thickness = v[3];
    return p;
}

Eigen::Vector4d process_to_vector(const ProcessParams& p)
{
    return {p.nozzle_temperature, p.temperature_gradient, p.velocity, p.thickness};
}

std::vector<ProcessParams> sample_process(const ProcessBounds& bounds, std::size_t count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<ProcessParams> out;
    for (std::size_t i = 0; i < count; ++i) {
        Eigen::Vector4d v;
        for (int k = 0; k < 4; ++k) {
            v[k] = bounds.lower[k] + uni(rng) * (bounds.upper[k] - bounds.lower[k]);
        }
        out.push_back(process_from_vector(v));
    }
    return out;
}

namespace {

double validation_mse(const ResidualNet& net, const Dataset& validation)
{
    const Eigen::VectorXd pred = net.forward_batch(validation.features());
    const Eigen::VectorXd y = validation.labels();
    return mse_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                    std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

double train_and_score(const Dataset& train_set, const Dataset& validation, const TrainOptions& options,
                       std::size_t hidden, std::size_t blocks)
{
    ResidualNet net(layer_input_size, hidden, blocks, options.seed);
    const auto result = train(net, train_set.features(), train_set.labels(), train_set.weights(0.5), options);
    return validation_mse(result.net, validation);
}

} // namespace

AugmentationBenchmark benchmark_augmentation(const Dataset& pool, const Dataset& validation,
                                             const TrainOptions& options, std::size_t hidden, std::size_t blocks,
                                             std::size_t train_size)
{
    const auto models = pool.models();
    if (models.size() < 2) {
        throw Error("benchmark_augmentation: the pool needs at least two models");
    }
    if (validation.size() == 0) {
        throw Error("benchmark_augmentation: empty validation set");
    }
    std::size_t n = train_size;
    if (n == 0) {
        n = pool.size();
        for (auto m : models) {
            n = std::min(n, pool.where_model(m).size());
        }
    }
    AugmentationBenchmark out;
    out.train_size = n;

    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(options.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, idx.size()));
    out.augmented_mse = train_and_score(pool.subset(idx), validation, options, hidden, blocks);

    out.best_single_mse = std::numeric_limits<double>::infinity();
    for (auto m : models) {
        const Dataset single = pool.where_model(m);
        std::vector<std::size_t> pick;
        for (std::size_t i = 0; i < n; ++i) {
            pick.push_back(i * single.size() / n);
        }
        const double mse = train_and_score(single.subset(pick), validation, options, hidden, blocks);
        out.single_pose_mse.push_back(mse);
        out.best_single_mse = std::min(out.best_single_mse, mse);
    }
    return out;
}

} // namespace morphprint
