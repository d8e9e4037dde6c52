#include "morphprint/energy.hpp"

#include <algorithm>
#include <cmath>

#include "morphprint/io.hpp"

namespace morphprint {

std::vector<std::string> MaterialParams::violations() const
{
    std::vector<std::string> out;
    auto positive = [&](const char* name, double v) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            out.push_back(std::string(name) + " must be positive and finite");
        }
    };
    positive("specific_heat", specific_heat);
    positive("density", density);
    positive("melt_temperature", melt_temperature);
    positive("ambient_temperature", ambient_temperature);
    positive("latent_heat", latent_heat);
    positive("filament_area", filament_area);
    if (!(melt_temperature > ambient_temperature)) {
        out.push_back("melt_temperature must exceed ambient_temperature");
    }
    return out;
}

void MaterialParams::validate() const
{
    const auto v = violations();
    if (v.empty()) {
        return;
    }
    std::string msg = "invalid material:";
    for (const auto& s : v) {
        msg += "\n  - " + s;
    }
    throw Error(msg);
}

double melting_energy(const MaterialParams& m, double volume_mm3)
{
    if (volume_mm3 < 0.0) {
        throw Error("melting_energy: volume must be non-negative");
    }
    const double mass_kg = m.density * volume_mm3 * 1e-9;
    return mass_kg * (m.specific_heat * (m.melt_temperature - m.ambient_temperature) + m.latent_heat);
}

double print_time(double volume_mm3, double infill_rate, double cross_area_mm2, double velocity_mm_s)
{
    if (!(velocity_mm_s > 0.0)) {
        throw Error("print_time: velocity must be positive");
    }
    if (!(cross_area_mm2 > 0.0)) {
        throw Error("print_time: cross-section area must be positive");
    }
    if (!(infill_rate > 0.0 && infill_rate <= 1.0)) {
        throw Error("print_time: infill rate must lie in (0, 1]");
    }
    return infill_rate * volume_mm3 / (cross_area_mm2 * velocity_mm_s);
}

double print_time(double path_length_mm, double velocity_mm_s)
{
    if (!(velocity_mm_s > 0.0)) {
        throw Error("print_time: velocity must be positive");
    }
    return path_length_mm / velocity_mm_s;
}

PowerLog read_power_log(const std::filesystem::path& path)
{
    const auto table = io::read_csv(path);
    const auto ct = table.column("t_seconds");
    const auto cw = table.column("watts");
    PowerLog log;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        log.t.push_back(table.number(r, ct));
        log.watts.push_back(table.number(r, cw));
    }
    return log;
}

double integrate_power(const PowerLog& log)
{
    if (log.t.size() != log.watts.size()) {
        throw Error("integrate_power: time and power columns differ in length");
    }
    if (log.t.size() < 2) {
        throw Error("integrate_power: need at least 2 samples");
    }
    double joules = 0.0;
    for (std::size_t i = 0; i < log.t.size(); ++i) {
        if (log.watts[i] < 0.0 || !std::isfinite(log.watts[i])) {
            throw Error("integrate_power: invalid power sample at index " + std::to_string(i));
        }
        if (i == 0) {
            continue;
        }
        if (!(log.t[i] > log.t[i - 1])) {
            throw NonMonotoneError("integrate_power: timestamps not strictly increasing at index " + std::to_string(i),
                                   i);
        }
        joules += 0.5 * (log.watts[i] + log.watts[i - 1]) * (log.t[i] - log.t[i - 1]);
    }
    return joules / 1000.0;
}

GeometricError geometric_error(std::span<const Vec2> deviations)
{
    if (deviations.empty()) {
        throw Error("geometric_error: no facet deviations");
    }
    GeometricError out;
    out.value = -1.0;
    for (std::size_t i = 0; i < deviations.size(); ++i) {
        const double n = deviations[i].norm();
        if (n > out.value) {
            out.value = n;
            out.argmax = i;
        }
    }
    return out;
}

ThermalModel linear_thermal_model(double coeff)
{
    if (coeff < 0.0) {
        throw Error("thermal model coefficient must be non-negative");
    }
    return [coeff](const Layer& layer, double gradient, double thickness) {
        std::vector<Vec2> out;
        const double mag = coeff * gradient * thickness;
        for (const auto& ring : layer.polygons) {
            for (std::size_t i = 0; i < ring.size(); ++i) {
                const Vec2 t = ring[(i + 1) % ring.size()] - ring[i];
                const double len = t.norm();
                // Material lies left of every ring edge, so the right side is outward.
                const Vec2 n = len > 0.0 ? Vec2(Vec2(t.y(), -t.x()) / len) : Vec2(Vec2::Zero());
                out.push_back(mag * n);
            }
        }
        return out;
    };
}

std::vector<Vec2> thermal_deviation(const Layer& layer, double gradient, double thickness, double coeff)
{
    return linear_thermal_model(coeff)(layer, gradient, thickness);
}

EnergyReport process_energy(const MaterialParams& material, const PrinterParams& printer,
                            const ProcessParams& process, double volume_mm3)
{
    if (!(process.thickness > 0.0)) {
        throw Error("process_energy: layer thickness must be positive");
    }
    EnergyReport r;
    r.volume = volume_mm3;
    r.melting = melting_energy(material, volume_mm3);
    const double mass_kg = material.density * volume_mm3 * 1e-9;
    r.superheat =
        mass_kg * material.specific_heat * std::max(0.0, process.nozzle_temperature - material.melt_temperature);
    r.print_time = print_time(volume_mm3, printer.infill_rate, printer.line_width * process.thickness, process.velocity);
    r.motion = printer.motion_power * r.print_time / 1000.0;
    r.total = r.melting + r.superheat + r.motion;
    return r;
}

std::vector<double> apportion(std::span<const Layer> layers, double total)
{
    double sum = 0.0;
    for (const auto& l : layers) {
        sum += std::abs(l.section);
    }
    std::vector<double> out(layers.size(), 0.0);
    if (layers.empty()) {
        return out;
    }
    if (!(sum > 0.0)) {
        std::fill(out.begin(), out.end(), total / static_cast<double>(layers.size()));
        return out;
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out[i] = total * std::abs(layers[i].section) / sum;
    }
    return out;
}

} // namespace morphprint
