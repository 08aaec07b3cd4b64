#include "vipr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "vipr/errors.hpp"

namespace vipr {

double median(std::span<const double> values) {
    if (values.empty()) throw ArgumentError("median of an empty list");
    std::vector<double> v(values.begin(), values.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

MethodReport evaluate_trajectory(std::span<const Pose> predicted, std::span<const Pose> ground_truth,
                                 std::string method) {
    if (predicted.size() != ground_truth.size())
        throw ArgumentError("evaluate_trajectory: " + std::to_string(predicted.size()) + " predictions for " +
                            std::to_string(ground_truth.size()) + " ground-truth poses");
    if (predicted.empty()) throw ArgumentError("evaluate_trajectory: empty trajectory");
    std::vector<double> pos, ori;
    pos.reserve(predicted.size());
    ori.reserve(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        pos.push_back((predicted[i].position - ground_truth[i].position).norm());
        ori.push_back(angular_error_deg(predicted[i].orientation, ground_truth[i].orientation));
    }
    return {std::move(method), median(pos), median(ori), predicted.size()};
}

std::optional<double> improvement_pct(double apr_median, double vipr_median) {
    if (apr_median == 0.0) return std::nullopt;
    return (apr_median - vipr_median) / apr_median * 100.0;
}

AxisMedians rpr_axis_medians(std::span<const Vec3> predicted, std::span<const Vec3> ground_truth) {
    if (predicted.empty()) throw ArgumentError("rpr_axis_medians: no displacements");
    if (predicted.size() != ground_truth.size()) throw ArgumentError("rpr_axis_medians: length mismatch");
    AxisMedians m;
    m.count = predicted.size();
    std::vector<double> norms;
    for (const auto& g : ground_truth) norms.push_back(g.norm() * 100.0);
    m.step_norm_cm = median(norms);
    for (int a = 0; a < 3; ++a) {
        std::vector<double> err, step;
        for (std::size_t i = 0; i < predicted.size(); ++i) {
            err.push_back(std::abs(predicted[i][a] - ground_truth[i][a]) * 100.0);
            step.push_back(std::abs(ground_truth[i][a]) * 100.0);
        }
        m.error_cm[a] = median(err);
        m.step_cm[a] = median(step);
        m.error_fraction[a] =
            m.step_norm_cm > 0.0 ? m.error_cm[a] / m.step_norm_cm : std::numeric_limits<double>::infinity();
    }
    return m;
}

Extent spatial_extent(std::span<const Pose> poses) {
    if (poses.empty()) return {};
    Extent e{poses[0].position, poses[0].position};
    for (const auto& p : poses) {
        e.min = {std::min(e.min.x, p.position.x), std::min(e.min.y, p.position.y), std::min(e.min.z, p.position.z)};
        e.max = {std::max(e.max.x, p.position.x), std::max(e.max.y, p.position.y), std::max(e.max.z, p.position.z)};
    }
    return e;
}

const MethodReport* EvalReport::find(const std::string& method) const {
    for (const auto& m : methods)
        if (m.method == method) return &m;
    return nullptr;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["methods"] = nlohmann::json::array();
    for (const auto& m : methods) {
        j["methods"].push_back({{"method", m.method},
                                {"position_median_m", m.position_median_m},
                                {"orientation_median_deg", m.orientation_median_deg},
                                {"count", m.count}});
    }
    if (improvement_pct) j["improvement_pct"] = *improvement_pct;
    if (rpr) {
        j["rpr_axis_medians"] = {{"error_cm", rpr->error_cm},
                                 {"step_cm", rpr->step_cm},
                                 {"step_norm_cm", rpr->step_norm_cm},
                                 {"error_fraction", rpr->error_fraction},
                                 {"count", rpr->count}};
    }
    const Vec3 s = extent.size();
    j["spatial_extent_m"] = {s.x, s.y, s.z};
    return j;
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %12s %12s %8s\n", "method", "pos_med_m", "ori_med_deg", "count");
    os << buf;
    for (const auto& m : methods) {
        std::snprintf(buf, sizeof buf, "%-16s %12.4f %12.4f %8zu\n", m.method.c_str(), m.position_median_m,
                      m.orientation_median_deg, m.count);
        os << buf;
    }
    if (improvement_pct) {
        std::snprintf(buf, sizeof buf, "%-16s %12.2f\n", "improvement_pct", *improvement_pct);
        os << buf;
    }
    if (rpr) {
        std::snprintf(buf, sizeof buf, "%-16s %12.4f %12.4f %12.4f  (step %.4f cm)\n", "rpr_err_cm_xyz",
                      rpr->error_cm[0], rpr->error_cm[1], rpr->error_cm[2], rpr->step_norm_cm);
        os << buf;
    }
    const Vec3 s = extent.size();
    std::snprintf(buf, sizeof buf, "%-16s %12.3f %12.3f %12.3f\n", "extent_m", s.x, s.y, s.z);
    os << buf;
    return os.str();
}

void export_trajectory_plot(std::span<const TrajectoryStream> streams, const std::filesystem::path& path) {
    if (streams.empty()) throw ArgumentError("export_trajectory_plot: no trajectories");
    constexpr int kSize = 800;
    constexpr int kMargin = 60;
    const cv::Scalar palette[] = {{200, 90, 20}, {40, 40, 220}, {40, 160, 40}, {160, 40, 160}, {0, 140, 200}};

    double x0 = std::numeric_limits<double>::max(), y0 = x0;
    double x1 = std::numeric_limits<double>::lowest(), y1 = x1;
    for (const auto& s : streams)
        for (const auto& p : s.poses) {
            x0 = std::min(x0, p.position.x);
            x1 = std::max(x1, p.position.x);
            y0 = std::min(y0, p.position.y);
            y1 = std::max(y1, p.position.y);
        }
    if (x0 > x1) x0 = y0 = 0.0, x1 = y1 = 1.0;
    const double span = std::max({x1 - x0, y1 - y0, 1e-6});
    const double scale = (kSize - 2 * kMargin) / span;
    auto to_px = [&](const Vec3& p) {
        return cv::Point(static_cast<int>(std::lround(kMargin + (p.x - x0) * scale)),
                         static_cast<int>(std::lround(kSize - kMargin - (p.y - y0) * scale)));
    };

    cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::rectangle(canvas, {kMargin, kMargin}, {kSize - kMargin, kSize - kMargin}, {200, 200, 200}, 1);
    char label[64];
    std::snprintf(label, sizeof label, "x: %.2f .. %.2f m   y: %.2f .. %.2f m", x0, x1, y0, y1);
    cv::putText(canvas, label, {kMargin, kSize - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {80, 80, 80}, 1, cv::LINE_AA);

    for (std::size_t i = 0; i < streams.size(); ++i) {
        const auto color = palette[i % std::size(palette)];
        std::vector<cv::Point> pts;
        for (const auto& p : streams[i].poses) pts.push_back(to_px(p.position));
        if (pts.size() > 1) cv::polylines(canvas, pts, false, color, 2, cv::LINE_AA);
        if (pts.size() == 1) cv::circle(canvas, pts[0], 3, color, -1, cv::LINE_AA);
        const int y = 25 + 22 * static_cast<int>(i);
        cv::line(canvas, {kMargin, y - 5}, {kMargin + 30, y - 5}, color, 3);
        cv::putText(canvas, streams[i].name, {kMargin + 40, y}, cv::FONT_HERSHEY_SIMPLEX, 0.55, {0, 0, 0}, 1,
                    cv::LINE_AA);
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), canvas);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) throw DataError("cannot write plot " + path.string());
}

}  // namespace vipr
