#include "vipr/geometry.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "vipr/errors.hpp"

namespace vipr {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMinQuatNorm = 1e-12;
constexpr double kUnitTolerance = 1e-6;

void require_unit(const Quaternion& q, const char* what) {
    if (!q.is_unit(kUnitTolerance)) {
        std::ostringstream msg;
        msg << what << ": quaternion " << q << " is not unit (|q|^2 = " << q.dot(q) << ")";
        throw ArgumentError(msg.str());
    }
}

}  // namespace

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = axis.norm();
    if (n < kMinQuatNorm) throw DegenerateInputError("from_axis_angle: zero rotation axis");
    const double s = std::sin(0.5 * angle_rad) / n;
    return {std::cos(0.5 * angle_rad), axis.x * s, axis.y * s, axis.z * s};
}

Quaternion Quaternion::normalized() const {
    const double n = norm();
    if (!(n > kMinQuatNorm)) throw DegenerateInputError("cannot normalise a zero-norm quaternion");
    return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const {
    if (w > 0.0) return *this;
    if (w < 0.0) return -*this;
    for (double c : {x, y, z}) {
        if (c > 0.0) return *this;
        if (c < 0.0) return -*this;
    }
    return *this;
}

Vec3 Quaternion::rotate(const Vec3& v) const {
    // v' = v + 2 u x (u x v + w v), u = (x, y, z)
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
}

RotationMatrix RotationMatrix::identity() {
    RotationMatrix r;
    r.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    return r;
}

Vec3 RotationMatrix::apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

RotationMatrix RotationMatrix::transpose() const {
    RotationMatrix t;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) t.m[r][c] = m[c][r];
    return t;
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& o) const {
    RotationMatrix p;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += m[r][k] * o.m[k][c];
            p.m[r][c] = s;
        }
    return p;
}

double RotationMatrix::determinant() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

double RotationMatrix::orthogonality_error() const {
    const RotationMatrix g = transpose() * *this;
    double s = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const double d = g.m[r][c] - (r == c ? 1.0 : 0.0);
            s += d * d;
        }
    return std::sqrt(s);
}

Pose::Pose(const Vec3& p, const Quaternion& q) : position(p), orientation(q.normalized().canonical()) {}

RelativePose::RelativePose(const Vec3& d, const Quaternion& dq)
    : displacement_local(d), rotation_delta(dq.normalized().canonical()) {}

RotationMatrix quat_to_rotation(const Quaternion& q_in) {
    const Quaternion q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    RotationMatrix r;
    r.m = {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
            {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
            {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
    return r;
}

Quaternion rotation_to_quat(const RotationMatrix& r) {
    const auto& m = r.m;
    const double trace = m[0][0] + m[1][1] + m[2][2];
    Quaternion q;
    if (trace > 0.0) {
        const double s = 2.0 * std::sqrt(1.0 + trace);
        q = {0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s};
    } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
        const double s = 2.0 * std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]);
        q = {(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s};
    } else if (m[1][1] > m[2][2]) {
        const double s = 2.0 * std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]);
        q = {(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s};
    } else {
        const double s = 2.0 * std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]);
        q = {(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s};
    }
    return q.normalized().canonical();
}

Vec3 to_local_frame(const Vec3& delta_global, const Quaternion& frame) {
    require_unit(frame, "to_local_frame");
    return quat_to_rotation(frame).transpose().apply(delta_global);
}

Vec3 to_global_frame(const Vec3& delta_local, const Quaternion& frame) {
    require_unit(frame, "to_global_frame");
    return quat_to_rotation(frame).apply(delta_local);
}

double angular_error_deg(const Quaternion& a, const Quaternion& b) {
    // Angle of conj(a) * b; atan2 stays exact near zero where acos does not.
    const double w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
    const double x = a.w * b.x - b.w * a.x - (a.y * b.z - a.z * b.y);
    const double y = a.w * b.y - b.w * a.y - (a.z * b.x - a.x * b.z);
    const double z = a.w * b.z - b.w * a.z - (a.x * b.y - a.y * b.x);
    return 2.0 * std::atan2(std::sqrt(x * x + y * y + z * z), std::abs(w)) * 180.0 / kPi;
}

Quaternion hemisphere_align(const Quaternion& q, const Quaternion& reference) {
    return q.dot(reference) < 0.0 ? -q : q;
}

RelativePose relative_pose(const Pose& first, const Pose& second) {
    if (&first == &second || (first.position == second.position && first.orientation == second.orientation))
        return RelativePose{};
    return RelativePose(to_local_frame(second.position - first.position, first.orientation),
                        first.orientation.conjugate() * second.orientation);
}

Pose compose(const Pose& start, const RelativePose& rel) {
    return Pose(start.position + to_global_frame(rel.displacement_local, start.orientation),
                start.orientation * rel.rotation_delta);
}

std::string format_pose_line(const Pose& pose) {
    char buf[256];
    const auto& p = pose.position;
    const auto& q = pose.orientation;
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", p.x, p.y, p.z, q.w, q.x, q.y,
                  q.z);
    return buf;
}

Pose parse_pose_line(std::string_view line, std::size_t line_no) {
    std::istringstream in{std::string(line)};
    std::vector<double> v;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParseError("pose line " + std::to_string(line_no) + ": not a number: '" + tok + "'");
        }
    }
    if (v.size() != 7) {
        throw ParseError("pose line " + std::to_string(line_no) + ": expected 7 columns, got " +
                         std::to_string(v.size()));
    }
    try {
        return Pose({v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]});
    } catch (const DegenerateInputError&) {
        throw ParseError("pose line " + std::to_string(line_no) + ": zero quaternion");
    }
}

std::vector<Pose> read_pose_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pose file " + path.string());
    std::vector<Pose> poses;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        try {
            poses.push_back(parse_pose_line(line, line_no));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    return poses;
}

void write_pose_file(const std::filesystem::path& path, const std::vector<Pose>& poses,
                     std::string_view header_comment) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write pose file " + path.string());
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    for (const auto& p : poses) out << format_pose_line(p) << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

Pose pose_from_matrix(const std::array<double, 16>& a) {
    RotationMatrix r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = a[4 * i + j];
    for (double v : a)
        if (!std::isfinite(v)) throw DataError("pose matrix has non-finite entries");
    if (std::abs(r.determinant()) < 1e-9) throw DataError("pose matrix is not invertible");
    if (r.orthogonality_error() > 1e-3 || r.determinant() < 0.0)
        throw DataError("pose matrix rotation block is not a proper rotation (tolerance 1e-3)");
    return Pose({a[3], a[7], a[11]}, rotation_to_quat(r));
}

Pose read_matrix_pose_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing pose file " + path.string());
    std::array<double, 16> a{};
    for (double& v : a) {
        if (!(in >> v)) throw ParseError("pose file " + path.string() + ": expected 16 numbers");
    }
    try {
        return pose_from_matrix(a);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
}

std::ostream& operator<<(std::ostream& os, const Quaternion& q) {
    return os << '(' << q.w << ", " << q.x << ", " << q.y << ", " << q.z << ')';
}

}  // namespace vipr
