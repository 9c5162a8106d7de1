#include "irmap/radiometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace irmap {

namespace {

bool unit_interval(double v) { return std::isfinite(v) && v > 0.0 && v <= 1.0; }

void check_fraction(double v, const char* name) {
    if (!unit_interval(v))
        fail(ErrorKind::Parameter, std::string(name) + " must lie in (0, 1], got " + std::to_string(v));
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    const double mid = 0.5 * (a + b);
    // The interval is closed at hi so a boundary optimum is returned exactly.
    return f(hi) <= f(mid) ? hi : mid;
}

double sample_sd(const std::vector<double>& r) {
    if (r.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(r.size());
    double ss = 0.0;
    for (double v : r) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(r.size() - 1));
}

// Inversion that reports below-floor counts as absolute zero instead of
// throwing, so objective functions stay defined over the whole search range.
double invert_or_floor(double counts, double eps, const CalibrationProfile& p) {
    const double bg = background_counts(eps, p);
    if (!(counts > bg)) return kFloorSentinelC;
    const double s = (counts - bg) / (p.window_transmission * eps);
    return p.model.temperature(s);
}

constexpr double kSearchLow = 1e-3;
constexpr double kSearchTol = 1e-4;

}  // namespace

void RadianceModel::validate() const {
    require(std::isfinite(a_um) && a_um > 0.0, ErrorKind::Parameter, "model A must be positive");
    require(std::isfinite(c_counts) && c_counts > 0.0, ErrorKind::Parameter, "model C must be positive");
    require(std::isfinite(b_umk), ErrorKind::Parameter, "model B must be finite");
}

double RadianceModel::signal(double t_celsius) const {
    const double denom = a_um * (t_celsius + kKelvinOffset) + b_umk;
    require(denom > 0.0, ErrorKind::Parameter, "temperature outside the radiance model range");
    return c_counts / std::expm1(kC2 / denom);
}

double RadianceModel::temperature(double s) const {
    require(s > 0.0, ErrorKind::Parameter, "signal must be positive");
    const double kelvin = (kC2 / std::log1p(c_counts / s) - b_umk) / a_um;
    return kelvin - kKelvinOffset;
}

void CalibrationProfile::validate() const {
    check_fraction(emissivity_powder, "emissivity_powder");
    check_fraction(emissivity_printed, "emissivity_printed");
    check_fraction(window_transmission, "window_transmission");
    require(std::isfinite(reflected_temperature_c) && reflected_temperature_c > -kKelvinOffset, ErrorKind::Parameter,
            "reflected temperature out of range");
    if (window_temperature_c)
        require(std::isfinite(*window_temperature_c) && *window_temperature_c > -kKelvinOffset, ErrorKind::Parameter,
                "window temperature out of range");
    model.validate();
}

SurfaceClass SurfaceClass::custom(double eps) {
    check_fraction(eps, "custom emissivity");
    return SurfaceClass(Kind::Custom, eps);
}

double SurfaceClass::emissivity(const CalibrationProfile& profile) const noexcept {
    switch (kind_) {
        case Kind::Powder: return profile.emissivity_powder;
        case Kind::AsPrinted: return profile.emissivity_printed;
        case Kind::Unity: return 1.0;
        case Kind::Custom: return custom_;
    }
    return 1.0;
}

double background_counts(double eps, const CalibrationProfile& p) {
    check_fraction(eps, "emissivity");
    check_fraction(p.window_transmission, "window_transmission");
    const double tau = p.window_transmission;
    return tau * (1.0 - eps) * p.model.signal(p.reflected_temperature_c) +
           (1.0 - tau) * p.model.signal(p.window_temperature());
}

double forward_counts(double t_obj_c, double eps, const CalibrationProfile& p) {
    require(std::isfinite(t_obj_c) && t_obj_c > -kKelvinOffset, ErrorKind::Parameter,
            "object temperature must exceed absolute zero");
    return p.window_transmission * eps * p.model.signal(t_obj_c) + background_counts(eps, p);
}

double invert_counts(double counts, double eps, const CalibrationProfile& p) {
    const double bg = background_counts(eps, p);
    if (!(counts > bg))
        fail(ErrorKind::BelowFloor,
             "counts " + std::to_string(counts) + " do not exceed background " + std::to_string(bg));
    return p.model.temperature((counts - bg) / (p.window_transmission * eps));
}

FitResult fit_emissivity(std::span<const CountSample> samples, const CalibrationProfile& profile) {
    profile.validate();
    require(samples.size() >= 2, ErrorKind::Parameter, "emissivity fit needs at least two samples");
    double t_lo = samples.front().reference_c, t_hi = t_lo;
    for (const auto& s : samples) {
        require(std::isfinite(s.counts) && s.counts > 0.0 && std::isfinite(s.reference_c) &&
                    s.reference_c > -kKelvinOffset,
                ErrorKind::Parameter, "emissivity sample out of range");
        t_lo = std::min(t_lo, s.reference_c);
        t_hi = std::max(t_hi, s.reference_c);
    }
    if (t_hi - t_lo <= 0.0) fail(ErrorKind::IllConditioned, "all samples share one reference temperature");
    require(t_hi - t_lo >= 100.0, ErrorKind::Parameter, "samples must span at least 100 C");

    auto residuals = [&](double eps) {
        std::vector<double> r;
        r.reserve(samples.size());
        for (const auto& s : samples) r.push_back(invert_or_floor(s.counts, eps, profile) - s.reference_c);
        return r;
    };
    auto objective = [&](double eps) {
        double sum = 0.0;
        for (double v : residuals(eps)) sum += v * v;
        return sum;
    };
    const double eps = golden_section_min(objective, kSearchLow, 1.0, kSearchTol);
    return {eps, sample_sd(residuals(eps))};
}

FitResult fit_window_transmission(std::span<const GlassPair> pairs, const CalibrationProfile& profile,
                                  SurfaceClass surface) {
    profile.validate();
    require(pairs.size() >= 2, ErrorKind::Parameter, "transmission fit needs at least two pairs");
    double t_lo = pairs.front().reference_c, t_hi = t_lo;
    for (const auto& p : pairs) {
        require(std::isfinite(p.counts_with_glass) && p.counts_with_glass > 0.0 &&
                    std::isfinite(p.counts_without_glass) && p.counts_without_glass > 0.0 &&
                    std::isfinite(p.reference_c) && p.reference_c > -kKelvinOffset,
                ErrorKind::Parameter, "transmission sample out of range");
        t_lo = std::min(t_lo, p.reference_c);
        t_hi = std::max(t_hi, p.reference_c);
    }
    if (t_hi - t_lo <= 0.0) fail(ErrorKind::IllConditioned, "all pairs share one reference temperature");
    require(t_hi - t_lo >= 100.0, ErrorKind::Parameter, "pairs must span at least 100 C");

    const double eps = surface.emissivity(profile);
    CalibrationProfile bare = profile;
    bare.window_transmission = 1.0;
    std::vector<double> without;
    for (const auto& p : pairs) without.push_back(invert_or_floor(p.counts_without_glass, eps, bare));

    auto residuals = [&](double tau) {
        CalibrationProfile glass = profile;
        glass.window_transmission = tau;
        std::vector<double> r;
        for (std::size_t i = 0; i < pairs.size(); ++i)
            r.push_back(invert_or_floor(pairs[i].counts_with_glass, eps, glass) - without[i]);
        return r;
    };
    auto objective = [&](double tau) {
        double sum = 0.0;
        for (double v : residuals(tau)) sum += v * v;
        return sum;
    };
    const double tau = golden_section_min(objective, kSearchLow, 1.0, kSearchTol);
    return {tau, sample_sd(residuals(tau))};
}

TemperatureFrame convert_frame(const CountFrame& frame, const Grid<SurfaceClass>& class_map,
                               const CalibrationProfile& profile) {
    require(frame.same_shape(class_map), ErrorKind::Parameter, "class map dimensions do not match frame");
    profile.validate();
    TemperatureFrame out{Grid2D(frame.width(), frame.height()), Mask(frame.width(), frame.height(), 0), 0};
    // One lookup table per distinct emissivity keeps the conversion cheap.
    std::vector<std::pair<double, CountTable>> tables;
    auto table_for = [&](double eps) -> const CountTable& {
        for (const auto& [e, t] : tables)
            if (e == eps) return t;
        tables.emplace_back(eps, CountTable(eps, profile));
        return tables.back().second;
    };
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const CountTable& table = table_for(class_map[i].emissivity(profile));
        out.celsius[i] = table(frame[i]);
        if (table.below_floor(frame[i])) {
            out.below_floor[i] = 1;
            ++out.flagged;
        }
    }
    return out;
}

TemperatureFrame convert_frame(const CountFrame& frame, SurfaceClass surface, const CalibrationProfile& profile) {
    return convert_frame(frame, Grid<SurfaceClass>(frame.width(), frame.height(), surface), profile);
}

TemperatureFrame convert_frame(const Grid2D& frame, const Grid<SurfaceClass>& class_map,
                               const CalibrationProfile& profile) {
    require(frame.same_shape(class_map), ErrorKind::Parameter, "class map dimensions do not match frame");
    profile.validate();
    TemperatureFrame out{Grid2D(frame.width(), frame.height()), Mask(frame.width(), frame.height(), 0), 0};
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const double t = invert_or_floor(frame[i], class_map[i].emissivity(profile), profile);
        out.celsius[i] = t;
        if (t == kFloorSentinelC) {
            out.below_floor[i] = 1;
            ++out.flagged;
        }
    }
    return out;
}

CountTable::CountTable(double eps, const CalibrationProfile& profile) : table_(65536), eps_(eps) {
    check_fraction(eps, "emissivity");
    profile.validate();
    const double bg = background_counts(eps, profile);
    for (int c = 0; c < 65536; ++c) {
        if (static_cast<double>(c) > bg) {
            table_[static_cast<std::size_t>(c)] = invert_counts(static_cast<double>(c), eps, profile);
        } else {
            table_[static_cast<std::size_t>(c)] = kFloorSentinelC;
            last_floor_ = c;
        }
    }
}

}  // namespace irmap
