#pragma once

#include <array>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vipr/geometry.hpp"

namespace vipr {

// Odd count: middle element; even count: mean of the two middle elements.
double median(std::span<const double> values);

struct MethodReport {
    std::string method;
    double position_median_m = 0.0;
    double orientation_median_deg = 0.0;
    std::size_t count = 0;
};

// Per-sample Euclidean position error and geodesic orientation error,
// pooled into medians.
MethodReport evaluate_trajectory(std::span<const Pose> predicted, std::span<const Pose> ground_truth,
                                 std::string method = {});

// (apr - vipr) / apr * 100; empty when apr_median is zero.
std::optional<double> improvement_pct(double apr_median, double vipr_median);

struct AxisMedians {
    std::array<double, 3> error_cm{};      // median |pred - gt| per axis
    std::array<double, 3> step_cm{};       // median |gt| per axis
    double step_norm_cm = 0.0;             // median |gt| (Euclidean)
    std::array<double, 3> error_fraction{};  // error_cm / step_norm_cm
    std::size_t count = 0;
};

AxisMedians rpr_axis_medians(std::span<const Vec3> predicted, std::span<const Vec3> ground_truth);

struct Extent {
    Vec3 min;
    Vec3 max;
    Vec3 size() const { return max - min; }
};

Extent spatial_extent(std::span<const Pose> poses);

struct EvalReport {
    std::vector<MethodReport> methods;
    std::optional<double> improvement_pct;  // ViPR vs APR-only position medians
    std::optional<AxisMedians> rpr;
    Extent extent;

    const MethodReport* find(const std::string& method) const;
    nlohmann::json to_json() const;
    // Fixed-width plain-text table.
    std::string to_table() const;
};

struct TrajectoryStream {
    std::string name;
    std::vector<Pose> poses;
};

// Top-down x-y plot (PNG) with one trace per stream and a legend.
void export_trajectory_plot(std::span<const TrajectoryStream> streams, const std::filesystem::path& path);

}  // namespace vipr
