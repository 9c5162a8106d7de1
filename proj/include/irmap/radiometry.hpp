#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "irmap/grid.hpp"

namespace irmap {

inline constexpr double kKelvinOffset = 273.15;
inline constexpr double kFloorSentinelC = -273.15;

// Band signal S(T) = C / (exp(c2 / (A*T + B)) - 1), T in kelvin.
struct RadianceModel {
    static constexpr double kC2 = 14388.0;  // um*K

    double a_um = 10.0;
    double b_umk = 50.0;
    double c_counts = 60000.0;

    void validate() const;
    double signal(double t_celsius) const;
    // Inverse of signal(); requires s > 0.
    double temperature(double s) const;
};

struct CalibrationProfile {
    double emissivity_powder = 0.63;
    double emissivity_printed = 0.21;
    double window_transmission = 0.75;
    double reflected_temperature_c = 25.0;
    std::optional<double> window_temperature_c;  // defaults to the reflected temperature
    RadianceModel model;

    void validate() const;
    double window_temperature() const { return window_temperature_c.value_or(reflected_temperature_c); }
};

class SurfaceClass {
public:
    enum class Kind : std::uint8_t { Powder, AsPrinted, Unity, Custom };

    constexpr SurfaceClass() = default;
    static constexpr SurfaceClass powder() { return SurfaceClass(Kind::Powder, 0.0); }
    static constexpr SurfaceClass as_printed() { return SurfaceClass(Kind::AsPrinted, 0.0); }
    static constexpr SurfaceClass unity() { return SurfaceClass(Kind::Unity, 1.0); }
    static SurfaceClass custom(double eps);

    Kind kind() const noexcept { return kind_; }
    double emissivity(const CalibrationProfile& profile) const noexcept;
    bool operator==(const SurfaceClass&) const = default;

private:
    constexpr SurfaceClass(Kind k, double e) : kind_(k), custom_(e) {}
    Kind kind_ = Kind::Powder;
    double custom_ = 0.0;
};

// Counts contributed when the object term is zero: reflection plus window emission.
double background_counts(double eps, const CalibrationProfile& profile);
double forward_counts(double t_obj_c, double eps, const CalibrationProfile& profile);
// Throws ErrorKind::BelowFloor when counts do not exceed background_counts().
double invert_counts(double counts, double eps, const CalibrationProfile& profile);

struct FitResult {
    double value = 0.0;
    double residual_sd_c = 0.0;
};

struct CountSample {
    double counts = 0.0;
    double reference_c = 0.0;
};

struct GlassPair {
    double counts_with_glass = 0.0;
    double counts_without_glass = 0.0;
    double reference_c = 0.0;
};

FitResult fit_emissivity(std::span<const CountSample> samples, const CalibrationProfile& profile);
// The surface under the glass is viewed with `surface` emissivity in both captures.
FitResult fit_window_transmission(std::span<const GlassPair> pairs, const CalibrationProfile& profile,
                                  SurfaceClass surface = SurfaceClass::unity());

struct TemperatureFrame {
    Grid2D celsius;
    Mask below_floor;  // 1 where the pixel holds kFloorSentinelC
    std::size_t flagged = 0;
};

TemperatureFrame convert_frame(const CountFrame& frame, const Grid<SurfaceClass>& class_map,
                               const CalibrationProfile& profile);
TemperatureFrame convert_frame(const CountFrame& frame, SurfaceClass surface, const CalibrationProfile& profile);
// Unquantized counts, inverted pixel by pixel.
TemperatureFrame convert_frame(const Grid2D& frame, const Grid<SurfaceClass>& class_map,
                               const CalibrationProfile& profile);

// Precomputed inversion for every 16-bit count at one emissivity. Entries at
// or below the background hold kFloorSentinelC.
class CountTable {
public:
    CountTable(double eps, const CalibrationProfile& profile);

    double operator()(std::uint16_t counts) const noexcept { return table_[counts]; }
    bool below_floor(std::uint16_t counts) const noexcept { return counts <= last_floor_; }
    double emissivity() const noexcept { return eps_; }

private:
    std::vector<double> table_;
    int last_floor_ = -1;  // highest count that is at or below the background
    double eps_;
};

}  // namespace irmap
