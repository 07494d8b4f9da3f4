#pragma once

#include "mvpure/common.hpp"
#include "mvpure/linalg.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace mvpure::forward {

using Vec3 = Eigen::Vector3d;

constexpr double kDefaultHeadRadius = 0.09;     // meters
constexpr double kDefaultConductivity = 0.33;   // S/m
constexpr double kSensorClearance = 1e-3;       // 1 mm

struct SourceGeometry {
    std::vector<Vec3> positions;     // meters, inside the head sphere
    std::vector<Vec3> orientations;  // unit vectors
    double head_radius = kDefaultHeadRadius;

    Index size() const { return static_cast<Index>(positions.size()); }
};

struct SensorArray {
    std::vector<Vec3> positions;  // on the head sphere

    Index size() const { return static_cast<Index>(positions.size()); }
    double radius() const { return positions.empty() ? 0.0 : positions.front().norm(); }
};

inline void validate_geometry(const SourceGeometry& g) {
    if (g.positions.size() != g.orientations.size())
        throw DimensionMismatch("geometry position/orientation counts differ");
    for (const Vec3& u : g.orientations)
        if (std::abs(u.norm() - 1.0) > 1e-10)
            throw Error("orientation is not unit length");
    for (const Vec3& p : g.positions)
        if (p.norm() >= g.head_radius)
            throw Error("source position outside head");
}

// Evenly spread m sensors on the head sphere (golden-angle spiral).
inline SensorArray fibonacci_sensors(Index m, double radius = kDefaultHeadRadius) {
    if (m < 1)
        throw DimensionMismatch("need at least one sensor");
    SensorArray arr;
    arr.positions.reserve(m);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (Index i = 0; i < m; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / static_cast<double>(m);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * static_cast<double>(i);
        arr.positions.emplace_back(radius * rho * std::cos(phi), radius * rho * std::sin(phi),
                                   radius * z);
    }
    return arr;
}

// Current-dipole potential in an infinite homogeneous conductor, sampled at
// the sensors, one column per source, average-referenced per column.
// Orientation norms are passed through untouched (the column is linear in
// the moment vector); callers wanting unit moments validate the geometry.
inline Matrix spherical_leadfield(const SourceGeometry& geom, const SensorArray& sensors,
                                  double conductivity = kDefaultConductivity) {
    if (conductivity <= 0.0)
        throw Error("conductivity must be positive");
    if (geom.positions.size() != geom.orientations.size())
        throw DimensionMismatch("geometry position/orientation counts differ");
    const Index m = sensors.size();
    const Index l = geom.size();
    if (m == 0 || l == 0)
        throw DimensionMismatch("empty sensor array or geometry");
    const double sensor_radius = sensors.radius();
    Matrix H(m, l);
    const double scale = 1.0 / (4.0 * std::numbers::pi * conductivity);
    for (Index j = 0; j < l; ++j) {
        const Vec3& rd = geom.positions[j];
        if (rd.norm() >= sensor_radius)
            throw Error("source outside the sensor sphere");
        const Vec3& u = geom.orientations[j];
        for (Index i = 0; i < m; ++i) {
            const Vec3 d = sensors.positions[i] - rd;
            const double dist = d.norm();
            if (dist < kSensorClearance)
                throw SourceOnSensor("source within 1 mm of a sensor");
            H(i, j) = scale * u.dot(d) / (dist * dist * dist);
        }
        H.col(j).array() -= H.col(j).mean();
    }
    if (linalg::rank_check(H) < l)
        throw DegenerateLeadfield("leadfield columns are linearly dependent");
    return H;
}

// Leadfield with a prescribed singular spectrum; the conditioning-study knob.
inline Matrix synthetic_leadfield(Index m, Index l, const std::vector<double>& singular_values,
                                  std::uint64_t seed) {
    if (static_cast<Index>(singular_values.size()) != l || l > m || l < 1)
        throw DimensionMismatch("need l singular values with l <= m");
    for (size_t i = 0; i < singular_values.size(); ++i) {
        if (singular_values[i] <= 0.0)
            throw InvalidSpectrum("singular values must be positive");
        if (i > 0 && singular_values[i] > singular_values[i - 1])
            throw InvalidSpectrum("singular values must be descending");
    }
    Rng rng(derive_seed(seed, 0x5fd));
    Eigen::HouseholderQR<Matrix> qu(gaussian_matrix(m, l, rng));
    Matrix U = qu.householderQ() * Matrix::Identity(m, l);
    Eigen::HouseholderQR<Matrix> qv(gaussian_matrix(l, l, rng));
    Matrix V = qv.householderQ() * Matrix::Identity(l, l);
    Vector sv = Eigen::Map<const Vector>(singular_values.data(), l);
    return U * sv.asDiagonal() * V.transpose();
}

// Random sources in a spherical shell of the head, unit random orientations.
inline SourceGeometry sample_sources(Index count, double min_radius_frac, double max_radius_frac,
                                     Rng& rng, double head_radius = kDefaultHeadRadius) {
    if (count < 0 || min_radius_frac < 0.0 || max_radius_frac > 1.0 ||
        min_radius_frac > max_radius_frac)
        throw ConfigError("bad source-shell bounds");
    SourceGeometry g;
    g.head_radius = head_radius;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double r0 = min_radius_frac * head_radius;
    const double r1 = max_radius_frac * head_radius * (1.0 - 1e-9);
    for (Index i = 0; i < count; ++i) {
        Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
        while (dir.norm() < 1e-12)
            dir = Vec3(gauss(rng), gauss(rng), gauss(rng));
        dir.normalize();
        // volume-uniform radius within the shell
        const double r = std::cbrt(r0 * r0 * r0 + unif(rng) * (r1 * r1 * r1 - r0 * r0 * r0));
        g.positions.push_back(r * dir);
        Vec3 ori(gauss(rng), gauss(rng), gauss(rng));
        while (ori.norm() < 1e-12)
            ori = Vec3(gauss(rng), gauss(rng), gauss(rng));
        g.orientations.push_back(ori.normalized());
    }
    return g;
}

// Source mislocalization model: per-axis uniform shifts, orientation rotated
// by a uniform angle about a random axis.
inline SourceGeometry perturb_geometry(const SourceGeometry& geom, double max_shift,
                                       double max_angle, std::uint64_t seed) {
    if (max_shift < 0.0 || max_angle < 0.0)
        throw ConfigError("perturbation bounds must be nonnegative");
    Rng rng(derive_seed(seed, 0x9e1));
    std::uniform_real_distribution<double> shift(-max_shift, max_shift);
    std::uniform_real_distribution<double> angle_dist(0.0, max_angle);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SourceGeometry out = geom;
    for (size_t i = 0; i < out.positions.size(); ++i) {
        Vec3 delta(shift(rng), shift(rng), shift(rng));
        out.positions[i] += delta;
        if (out.positions[i].norm() >= geom.head_radius)
            throw PerturbationEscapesHead("perturbed source left the head");
        const double theta = angle_dist(rng);
        Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
        while (axis.norm() < 1e-12)
            axis = Vec3(gauss(rng), gauss(rng), gauss(rng));
        axis.normalize();
        if (theta > 0.0) {
            const Vec3& u = out.orientations[i];
            Vec3 rotated = u * std::cos(theta) + axis.cross(u) * std::sin(theta) +
                           axis * axis.dot(u) * (1.0 - std::cos(theta));
            out.orientations[i] = rotated.normalized();
        }
    }
    return out;
}

inline nlohmann::json geometry_to_json(const SourceGeometry& geom, const SensorArray& sensors) {
    nlohmann::json j;
    j["head_radius"] = geom.head_radius;
    auto dump = [](const std::vector<Vec3>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Vec3& x : v)
            arr.push_back({x(0), x(1), x(2)});
        return arr;
    };
    j["positions"] = dump(geom.positions);
    j["orientations"] = dump(geom.orientations);
    j["sensors"] = dump(sensors.positions);
    return j;
}

inline std::pair<SourceGeometry, SensorArray> geometry_from_json(const nlohmann::json& j) {
    auto load = [](const nlohmann::json& arr, const char* what) {
        std::vector<Vec3> v;
        for (const auto& x : arr) {
            if (!x.is_array() || x.size() != 3)
                throw ConfigError(std::string(what) + ": expected 3-vectors");
            v.emplace_back(x[0].get<double>(), x[1].get<double>(), x[2].get<double>());
        }
        return v;
    };
    SourceGeometry g;
    g.head_radius = j.value("head_radius", kDefaultHeadRadius);
    g.positions = load(j.at("positions"), "positions");
    g.orientations = load(j.at("orientations"), "orientations");
    SensorArray s;
    s.positions = load(j.at("sensors"), "sensors");
    if (g.positions.size() != g.orientations.size())
        throw ConfigError("positions/orientations counts differ");
    return {std::move(g), std::move(s)};
}

}  // namespace mvpure::forward
