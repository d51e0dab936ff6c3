#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "bfn/complexlin.hpp"
#include "bfn/error.hpp"
#include "bfn/rng.hpp"

namespace bfn {

inline constexpr double kPi = std::numbers::pi;

constexpr double deg_to_rad(double deg) noexcept { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) noexcept { return rad * 180.0 / kPi; }

struct Position {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    friend bool operator==(const Position&, const Position&) = default;
};

struct WaveConfig {
    double f = 1000.0;  // Hz
    double c = 340.0;   // m/s

    double lambda() const noexcept { return c / f; }
    double omega0() const noexcept { return 2.0 * kPi * f; }
};

/// Sensor positions in metres; sensor 0 is the reference.
class ArrayGeometry {
public:
    ArrayGeometry() = default;

    explicit ArrayGeometry(std::vector<Position> positions) : positions_(std::move(positions)) {
        if (positions_.size() < 2) throw validation_error("array needs at least 2 sensors");
    }

    /// Uniform linear array along y with element j at y = j·spacing.
    static ArrayGeometry ula(std::size_t m, double spacing) {
        if (m < 2) throw validation_error("array needs at least 2 sensors, got " + std::to_string(m));
        std::vector<Position> pos(m);
        for (std::size_t j = 0; j < m; ++j) pos[j].y = static_cast<double>(j) * spacing;
        return ArrayGeometry(std::move(pos));
    }

    static ArrayGeometry half_wavelength_ula(std::size_t m, const WaveConfig& wave) {
        return ula(m, wave.lambda() / 2.0);
    }

    std::size_t size() const noexcept { return positions_.size(); }
    const std::vector<Position>& positions() const noexcept { return positions_; }
    const Position& operator[](std::size_t j) const { return positions_[j]; }

    friend bool operator==(const ArrayGeometry&, const ArrayGeometry&) = default;

private:
    std::vector<Position> positions_;
};

/// Uniform azimuth grid over [-90°, 90°] with both endpoints when δ divides 180°.
class AngleGrid {
public:
    AngleGrid() : AngleGrid(1.0) {}

    /// Resolution in degrees. Grid angles are computed in degrees first so the
    /// integer-degree grid hits 0 and ±90° exactly.
    explicit AngleGrid(double delta_deg) : delta_deg_(delta_deg) {
        if (!(delta_deg > 0.0) || delta_deg > 180.0) {
            throw validation_error("grid resolution must lie in (0, 180] degrees");
        }
        const auto steps = static_cast<std::size_t>(std::floor(180.0 / delta_deg + 1e-9));
        thetas_.resize(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i) {
            thetas_[i] = deg_to_rad(-90.0 + static_cast<double>(i) * delta_deg);
        }
    }

    static AngleGrid degrees(double delta_deg) { return AngleGrid(delta_deg); }

    /// Inverse of delta(); the degree value is snapped to 1e-9° to undo rounding.
    static AngleGrid radians(double delta_rad) {
        return AngleGrid(std::round(rad_to_deg(delta_rad) * 1e9) / 1e9);
    }

    double delta() const noexcept { return deg_to_rad(delta_deg_); }
    double delta_deg() const noexcept { return delta_deg_; }
    std::size_t size() const noexcept { return thetas_.size(); }
    const std::vector<double>& thetas() const noexcept { return thetas_; }
    double operator[](std::size_t i) const { return thetas_[i]; }
    double degrees_at(std::size_t i) const { return rad_to_deg(thetas_[i]); }

    /// Nearest grid index; a tie at a midpoint goes to the lower index.
    std::size_t nearest(double theta) const {
        const double u = (rad_to_deg(theta) + 90.0) / delta_deg_;
        const double idx = std::ceil(u - 0.5);
        if (idx <= 0.0) return 0;
        return std::min(static_cast<std::size_t>(idx), thetas_.size() - 1);
    }

private:
    double delta_deg_;
    std::vector<double> thetas_;
};

/// Far-field narrowband response: element j is exp(-j·ω0·τ_j) with
/// τ_j = (x cosθ cosφ + y sinθ cosφ + z sinφ) / c.
inline ComplexMatrix steering_vector(const ArrayGeometry& geom, const WaveConfig& wave, double theta, double phi = 0.0) {
    constexpr double slack = 1e-12;
    if (!(theta >= -kPi / 2.0 - slack && theta <= kPi / 2.0 + slack)) {
        throw validation_error("steering_vector: theta " + std::to_string(theta) + " rad outside [-pi/2, pi/2]");
    }
    ComplexMatrix a(geom.size(), 1);
    const double ct = std::cos(theta), st = std::sin(theta), cp = std::cos(phi), sp = std::sin(phi);
    for (std::size_t j = 0; j < geom.size(); ++j) {
        const auto& p = geom[j];
        const double tau = (p.x * ct * cp + p.y * st * cp + p.z * sp) / wave.c;
        const double phase = -wave.omega0() * tau;
        a.set(j, 0, cplx(std::cos(phase), std::sin(phase)));
    }
    return a;
}

/// Array manifold over the grid, M×R.
inline ComplexMatrix manifold(const ArrayGeometry& geom, const WaveConfig& wave, const AngleGrid& grid) {
    ComplexMatrix a(geom.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const ComplexMatrix col = steering_vector(geom, wave, grid[i]);
        for (std::size_t j = 0; j < geom.size(); ++j) a.set(j, i, col(j, 0));
    }
    return a;
}

/// Steering vectors at arbitrary angles, M×K.
inline ComplexMatrix steering_matrix(const ArrayGeometry& geom, const WaveConfig& wave, const std::vector<double>& angles) {
    ComplexMatrix a(geom.size(), angles.size());
    for (std::size_t k = 0; k < angles.size(); ++k) {
        const ComplexMatrix col = steering_vector(geom, wave, angles[k]);
        for (std::size_t j = 0; j < geom.size(); ++j) a.set(j, k, col(j, 0));
    }
    return a;
}

/// Shifts every sensor's x and y by independent U(-ρ·λ/2, ρ·λ/2) draws.
/// The reference sensor is perturbed as well.
inline ArrayGeometry perturb_positions(const ArrayGeometry& geom, const WaveConfig& wave, double rho_err, Rng& rng) {
    if (!(rho_err >= 0.0)) throw validation_error("rho_err must be non-negative");
    if (rho_err == 0.0) return geom;
    const double half = rho_err * wave.lambda() / 2.0;
    std::vector<Position> pos = geom.positions();
    for (auto& p : pos) {
        p.x += rng.uniform(-half, half);
        p.y += rng.uniform(-half, half);
    }
    return ArrayGeometry(std::move(pos));
}

}  // namespace bfn
