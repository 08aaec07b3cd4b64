#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace vipr {

// Conventions used throughout the project:
//  * quaternions are stored (w, x, y, z);
//  * a Pose's orientation is the camera-to-world rotation, its position the
//    camera centre in world coordinates;
//  * camera axes are x right, y down, z along the optical axis.

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr bool operator==(const Vec3&) const = default;

    constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Quaternion() = default;
    constexpr Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    static constexpr Quaternion identity() { return {}; }
    // Rotation of `angle_rad` about `axis` (normalised internally).
    static Quaternion from_axis_angle(const Vec3& axis, double angle_rad);

    constexpr bool operator==(const Quaternion&) const = default;

    constexpr double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    constexpr Quaternion conjugate() const { return {w, -x, -y, -z}; }
    constexpr Quaternion operator-() const { return {-w, -x, -y, -z}; }

    // Hamilton product.
    constexpr Quaternion operator*(const Quaternion& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    // Throws DegenerateInputError when the norm is below 1e-12.
    Quaternion normalized() const;
    // Hemisphere-canonical form: w >= 0, ties broken by the first nonzero
    // of x, y, z being positive.
    Quaternion canonical() const;
    // q * v * q^-1 for unit q.
    Vec3 rotate(const Vec3& v) const;

    bool is_unit(double tol = 1e-9) const { return std::abs(dot(*this) - 1.0) <= tol; }
    bool finite() const {
        return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
    constexpr double operator[](int i) const {
        return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z));
    }
};

struct RotationMatrix {
    std::array<std::array<double, 3>, 3> m{};

    static RotationMatrix identity();

    double operator()(int r, int c) const { return m[r][c]; }
    Vec3 apply(const Vec3& v) const;
    RotationMatrix transpose() const;
    RotationMatrix operator*(const RotationMatrix& o) const;
    double determinant() const;
    // Frobenius norm of R^T R - I.
    double orthogonality_error() const;
};

struct Pose {
    Vec3 position;
    Quaternion orientation;

    Pose() = default;
    // Normalises and canonicalises the orientation.
    Pose(const Vec3& p, const Quaternion& q);
};

struct RelativePose {
    // Displacement expressed in the first camera's frame (metres).
    Vec3 displacement_local;
    Quaternion rotation_delta;

    RelativePose() = default;
    // Normalises and canonicalises the rotation delta.
    RelativePose(const Vec3& d, const Quaternion& dq);
};

RotationMatrix quat_to_rotation(const Quaternion& q);
// Shepperd's method; the input must be a proper rotation.
Quaternion rotation_to_quat(const RotationMatrix& r);

// World displacement -> displacement in the camera frame of `frame`
// (multiplication by the world-to-camera rotation).
Vec3 to_local_frame(const Vec3& delta_global, const Quaternion& frame);
// Exact inverse of to_local_frame.
Vec3 to_global_frame(const Vec3& delta_local, const Quaternion& frame);

// Geodesic angle 2*acos(|<a,b>|) in degrees, range [0, 180].
double angular_error_deg(const Quaternion& a, const Quaternion& b);

// q or -q, whichever has nonnegative dot product with `reference`.
// A dot product of exactly zero keeps q.
Quaternion hemisphere_align(const Quaternion& q, const Quaternion& reference);

RelativePose relative_pose(const Pose& first, const Pose& second);
// Applies a relative pose to `start`; inverse of relative_pose.
Pose compose(const Pose& start, const RelativePose& rel);

// --- text serialisation --------------------------------------------------

// "x y z w qx qy qz"
std::string format_pose_line(const Pose& pose);
// `line_no` is only used for error messages (1-based).
Pose parse_pose_line(std::string_view line, std::size_t line_no = 0);
std::vector<Pose> read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, const std::vector<Pose>& poses,
                     std::string_view header_comment = {});

// Camera-to-world 4x4 homogeneous matrix, row-major.
Pose pose_from_matrix(const std::array<double, 16>& rowmajor);
Pose read_matrix_pose_file(const std::filesystem::path& path);

std::ostream& operator<<(std::ostream& os, const Vec3& v);
std::ostream& operator<<(std::ostream& os, const Quaternion& q);

}  // namespace vipr
