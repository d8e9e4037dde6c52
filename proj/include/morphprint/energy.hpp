#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "morphprint/mesh.hpp"
#include "morphprint/slicer.hpp"

namespace morphprint {

/// Filament material. Units: c kJ/(kg K), rho kg/m^3, temperatures K,
/// latent heat kJ/kg, filament cross area mm^2.
struct MaterialParams {
    double specific_heat = 1.8;
    double density = 1240.0;
    double melt_temperature = 453.15;
    double ambient_temperature = 298.15;
    double latent_heat = 50.0;
    double filament_area = 2.405;

    /// Every violated invariant, empty when valid.
    std::vector<std::string> violations() const;
    /// Throws Error listing every violation.
    void validate() const;
};

/// rho V [c (T_m - T_a) + X] in kJ, V in mm^3.
double melting_energy(const MaterialParams& material, double volume_mm3);

/// r V / (S_A V_F) in seconds.
double print_time(double volume_mm3, double infill_rate, double cross_area_mm2, double velocity_mm_s);
/// L_T / V_F in seconds.
double print_time(double path_length_mm, double velocity_mm_s);

class NonMonotoneError : public Error {
public:
    NonMonotoneError(const std::string& what, std::size_t index) : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

struct PowerLog {
    std::vector<double> t;     // s, strictly increasing
    std::vector<double> watts; // >= 0
};

PowerLog read_power_log(const std::filesystem::path& path);
/// Trapezoidal sum over sampling intervals, in kJ.
double integrate_power(const PowerLog& log);

struct GeometricError {
    double value = 0.0;
    std::size_t argmax = 0;
};

/// Largest 2-norm over the facet deviations. Throws on an empty list.
GeometricError geometric_error(std::span<const Vec2> deviations);

/// Per-boundary-segment in-plane deviation of a layer.
using ThermalModel = std::function<std::vector<Vec2>(const Layer& layer, double gradient, double thickness)>;

/// coeff * gradient * thickness along each segment's outward normal.
ThermalModel linear_thermal_model(double coeff);
std::vector<Vec2> thermal_deviation(const Layer& layer, double gradient, double thickness, double coeff);

/// Process settings of one print (decision variables besides the pose).
struct ProcessParams {
    double nozzle_temperature = 483.15; // T_n, K
    double temperature_gradient = 5.0;  // grad T, K/mm
    double velocity = 40.0;             // V_F, mm/s
    double thickness = 0.2;             // d, mm
};

struct PrinterParams {
    /// Power drawn by motion and electronics while printing, W.
    double motion_power = 30.0;
    double line_width = 0.4;
    double infill_rate = 1.0;
    /// Thermal deviation surrogate coefficient, mm^2/K.
    double thermal_coeff = 0.01;
};

struct EnergyReport {
    double volume = 0.0;      // mm^3
    double melting = 0.0;     // kJ
    double superheat = 0.0;   // kJ, heating above T_m up to T_n
    double motion = 0.0;      // kJ
    double total = 0.0;       // kJ
    double print_time = 0.0;  // s
};

/// Analytic print energy of `volume_mm3` of material: melting, superheat to the
/// nozzle temperature and motion power over the print time, with the bead
/// cross-section line_width * d.
EnergyReport process_energy(const MaterialParams& material, const PrinterParams& printer,
                            const ProcessParams& process, double volume_mm3);

/// Splits `total` across layers in proportion to their section areas.
std::vector<double> apportion(std::span<const Layer> layers, double total);

} // namespace morphprint
