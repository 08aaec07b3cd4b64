#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "vipr/errors.hpp"
#include "vipr/geometry.hpp"

using namespace vipr;

namespace {

constexpr double kC45 = 0.70710678118654752440;
const Quaternion kYaw90{kC45, 0, 0, kC45};

void expect_vec(const Vec3& a, const Vec3& b, double tol) {
    EXPECT_NEAR(a.x, b.x, tol);
    EXPECT_NEAR(a.y, b.y, tol);
    EXPECT_NEAR(a.z, b.z, tol);
}

Vec3 random_vec(std::mt19937_64& rng, double scale = 5.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST(QuatToRotation, Identity) {
    const auto r = quat_to_rotation({1, 0, 0, 0});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(r(i, j), i == j ? 1.0 : 0.0);
}

TEST(QuatToRotation, YawNinety) {
    const auto r = quat_to_rotation(kYaw90);
    const double expected[3][3] = {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(r(i, j), expected[i][j], 1e-15);
}

TEST(QuatToRotation, NegatedIdentity) {
    const auto r = quat_to_rotation({-1, 0, 0, 0});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(r(i, j), i == j ? 1.0 : 0.0);
}

TEST(QuatToRotation, ZeroNormRejected) {
    EXPECT_THROW(quat_to_rotation({0, 0, 0, 0}), DegenerateInputError);
}

TEST(QuatToRotation, MatchesRodriguesAndConjugation) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const auto q = oracle::random_unit_quaternion(rng);
        const auto r = quat_to_rotation(q);
        const auto ref = oracle::rodrigues(q);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) EXPECT_NEAR(r(a, b), ref[a][b], 1e-12);
        EXPECT_LT(r.orthogonality_error(), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
        const Vec3 v = random_vec(rng);
        // q v q^-1 computed with explicit Hamilton products
        const Quaternion pv{0, v.x, v.y, v.z};
        const Quaternion rotated = q * pv * q.conjugate();
        expect_vec(r.apply(v), {rotated.x, rotated.y, rotated.z}, 1e-12);
        expect_vec(q.rotate(v), r.apply(v), 1e-12);
    }
}

TEST(RotationToQuat, RoundTrip) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const auto q = oracle::random_unit_quaternion(rng);
        const auto back = rotation_to_quat(quat_to_rotation(q));
        EXPECT_NEAR(std::abs(back.dot(q)), 1.0, 1e-12);
    }
}

TEST(LocalFrame, Examples) {
    expect_vec(to_local_frame({1, 0, 0}, Quaternion::identity()), {1, 0, 0}, 1e-15);
    expect_vec(to_local_frame({1, 0, 0}, kYaw90), {0, -1, 0}, 1e-15);
    expect_vec(to_local_frame({0, 0, 0}, kYaw90), {0, 0, 0}, 0.0);
    expect_vec(to_global_frame({0, -1, 0}, kYaw90), {1, 0, 0}, 1e-15);
    expect_vec(to_global_frame({0, 0, 1}, Quaternion::identity()), {0, 0, 1}, 0.0);
}

TEST(LocalFrame, MatchesTransposedRotation) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto q = oracle::random_unit_quaternion(rng);
        const Vec3 d = random_vec(rng);
        const auto ref = oracle::mul_transposed(oracle::rodrigues(q), {d.x, d.y, d.z});
        expect_vec(to_local_frame(d, q), {ref[0], ref[1], ref[2]}, 1e-12);
    }
}

TEST(LocalFrame, RoundTripAndNormPreservation) {
    std::mt19937_64 rng(5);
    const Vec3 fixed{0.3, -0.1, 0.05};
    for (int i = 0; i < 1000; ++i) {
        const auto f = oracle::random_unit_quaternion(rng);
        expect_vec(to_global_frame(to_local_frame(fixed, f), f), fixed, 1e-9);
        const Vec3 d = random_vec(rng);
        expect_vec(to_local_frame(to_global_frame(d, f), f), d, 1e-9);
        EXPECT_NEAR(to_local_frame(d, f).norm(), d.norm(), 1e-9);
    }
}

TEST(LocalFrame, NonUnitFrameRejected) {
    EXPECT_THROW(to_local_frame({1, 0, 0}, {2, 0, 0, 0}), ArgumentError);
    EXPECT_THROW(to_global_frame({1, 0, 0}, {0.5, 0, 0, 0}), ArgumentError);
}

TEST(AngularError, Examples) {
    EXPECT_NEAR(angular_error_deg(kYaw90, kYaw90), 0.0, 1e-6);
    EXPECT_DOUBLE_EQ(angular_error_deg({1, 0, 0, 0}, {-1, 0, 0, 0}), 0.0);
    EXPECT_NEAR(angular_error_deg({1, 0, 0, 0}, kYaw90), 90.0, 1e-9);
}

TEST(AngularError, MatchesTraceAngleAndIsSignInvariant) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 500; ++i) {
        const auto a = oracle::random_unit_quaternion(rng);
        const auto b = oracle::random_unit_quaternion(rng);
        const auto ra = oracle::rodrigues(a), rb = oracle::rodrigues(b);
        double trace = 0.0;  // trace(Ra^T Rb)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) trace += ra[c][r] * rb[c][r];
        const double ref = std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / M_PI;
        const double e = angular_error_deg(a, b);
        EXPECT_NEAR(e, ref, 1e-5);
        EXPECT_GE(e, 0.0);
        EXPECT_LE(e, 180.0);
        EXPECT_DOUBLE_EQ(e, angular_error_deg(b, a));
        EXPECT_DOUBLE_EQ(e, angular_error_deg(-a, b));
        EXPECT_DOUBLE_EQ(e, angular_error_deg(a, -b));
        EXPECT_DOUBLE_EQ(angular_error_deg(a, -a), 0.0);
    }
}

TEST(HemisphereAlign, Examples) {
    EXPECT_EQ(hemisphere_align({-1, 0, 0, 0}, {1, 0, 0, 0}), Quaternion(1, 0, 0, 0));
    EXPECT_EQ(hemisphere_align({0.6, 0.8, 0, 0}, {0.6, 0.8, 0, 0}), Quaternion(0.6, 0.8, 0, 0));
    const Quaternion q{0, 0, -1, 0};
    EXPECT_EQ(hemisphere_align(q, {1, 0, 0, 0}), q);
}

TEST(HemisphereAlign, NonnegativeDot) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 500; ++i) {
        const auto q = oracle::random_unit_quaternion(rng);
        const auto ref = oracle::random_unit_quaternion(rng);
        const auto out = hemisphere_align(q, ref);
        EXPECT_GE(out.dot(ref), 0.0);
        EXPECT_TRUE(out == q || out == -q);
    }
}

TEST(Pose, ConstructionCanonicalises) {
    const Pose p({1, 2, 3}, {-2, 0, 0, 0});
    EXPECT_EQ(p.orientation, Quaternion(1, 0, 0, 0));
    const Pose r({0, 0, 0}, {0, 0, -3, 0});
    EXPECT_EQ(r.orientation, Quaternion(0, 0, 1, 0));
    EXPECT_TRUE(RelativePose({0, 0, 0}, {-0.5, 0.5, 0.5, 0.5}).rotation_delta.is_unit());
    EXPECT_THROW(Pose({0, 0, 0}, {0, 0, 0, 0}), DegenerateInputError);
}

TEST(RelativePose, Examples) {
    const Pose a({0.5, -1, 2}, kYaw90);
    const auto same = relative_pose(a, a);
    EXPECT_EQ(same.displacement_local, Vec3(0, 0, 0));
    EXPECT_EQ(same.rotation_delta, Quaternion(1, 0, 0, 0));

    const auto straight = relative_pose(Pose({0, 0, 0}, {1, 0, 0, 0}), Pose({1, 0, 0}, {1, 0, 0, 0}));
    expect_vec(straight.displacement_local, {1, 0, 0}, 0.0);
    EXPECT_EQ(straight.rotation_delta, Quaternion(1, 0, 0, 0));

    const auto yawed = relative_pose(Pose({0, 0, 0}, kYaw90), Pose({1, 0, 0}, kYaw90));
    expect_vec(yawed.displacement_local, {0, -1, 0}, 1e-15);
    EXPECT_NEAR(yawed.rotation_delta.w, 1.0, 1e-15);
}

TEST(RelativePose, ExactIdentityForEqualPoses) {
    std::mt19937_64 rng(19);
    for (int i = 0; i < 500; ++i) {
        const Pose a(random_vec(rng), oracle::random_unit_quaternion(rng));
        const auto rel = relative_pose(a, a);
        EXPECT_EQ(rel.displacement_local, Vec3(0, 0, 0));
        EXPECT_NEAR(rel.rotation_delta.w, 1.0, 1e-15);
        EXPECT_NEAR(rel.rotation_delta.x, 0.0, 1e-15);
        EXPECT_NEAR(rel.rotation_delta.y, 0.0, 1e-15);
        EXPECT_NEAR(rel.rotation_delta.z, 0.0, 1e-15);
    }
}

TEST(RelativePose, MatchesMatrixOracleAndComposes) {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 1000; ++i) {
        const Pose a(random_vec(rng), oracle::random_unit_quaternion(rng));
        const Pose b(random_vec(rng), oracle::random_unit_quaternion(rng));
        const auto rel = relative_pose(a, b);
        const auto ra = oracle::rodrigues(a.orientation);
        const auto d = b.position - a.position;
        const auto local = oracle::mul_transposed(ra, {d.x, d.y, d.z});
        expect_vec(rel.displacement_local, {local[0], local[1], local[2]}, 1e-12);
        EXPECT_TRUE(rel.rotation_delta.is_unit(1e-12));
        EXPECT_GE(rel.rotation_delta.w, 0.0);

        const Vec3 p = a.position + to_global_frame(rel.displacement_local, a.orientation);
        const Quaternion q = (a.orientation * rel.rotation_delta).normalized();
        expect_vec(p, b.position, 1e-9);
        EXPECT_NEAR(std::abs(q.dot(b.orientation)), 1.0, 1e-9);
        const Pose c = compose(a, rel);
        expect_vec(c.position, b.position, 1e-9);
        EXPECT_LT(angular_error_deg(c.orientation, b.orientation), 1e-5);
    }
}

TEST(Geometry, ConcurrentCallsAgree) {
    std::mt19937_64 rng(29);
    std::vector<std::pair<Pose, Pose>> pairs;
    for (int i = 0; i < 200; ++i)
        pairs.emplace_back(Pose(random_vec(rng), oracle::random_unit_quaternion(rng)),
                           Pose(random_vec(rng), oracle::random_unit_quaternion(rng)));
    std::vector<RelativePose> serial;
    for (const auto& [a, b] : pairs) serial.push_back(relative_pose(a, b));
    std::vector<std::vector<RelativePose>> parallel(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (const auto& [a, b] : pairs) parallel[t].push_back(relative_pose(a, b));
        });
    for (auto& th : threads) th.join();
    for (const auto& out : parallel)
        for (std::size_t i = 0; i < serial.size(); ++i) {
            EXPECT_EQ(out[i].displacement_local, serial[i].displacement_local);
            EXPECT_EQ(out[i].rotation_delta, serial[i].rotation_delta);
        }
}

TEST(PoseText, RoundTrip) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 100; ++i) {
        const Pose p(random_vec(rng), oracle::random_unit_quaternion(rng));
        const Pose back = parse_pose_line(format_pose_line(p));
        expect_vec(back.position, p.position, 1e-12);
        EXPECT_NEAR(back.orientation.dot(p.orientation), 1.0, 1e-12);
    }
}

TEST(PoseText, ParseErrorsNameLine) {
    try {
        parse_pose_line("1 2 3 1 0 0", 42);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
    }
    EXPECT_THROW(parse_pose_line("1 2 3 1 0 0 x", 1), ParseError);
    EXPECT_THROW(parse_pose_line("1 2 3 0 0 0 0", 1), ParseError);
}

TEST(PoseText, FileRoundTripWithHeader) {
    const auto dir = oracle::temp_dir("geometry-pose-file");
    std::vector<Pose> poses{Pose({0, 0, 0}, {1, 0, 0, 0}), Pose({1, 2, 3}, kYaw90)};
    write_pose_file(dir / "p.txt", poses, "run metadata");
    const auto back = read_pose_file(dir / "p.txt");
    ASSERT_EQ(back.size(), 2u);
    expect_vec(back[1].position, {1, 2, 3}, 1e-12);
    EXPECT_THROW(read_pose_file(dir / "missing.txt"), DataError);
}

TEST(MatrixPose, IdentityAndYaw) {
    const Pose id = pose_from_matrix({1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    EXPECT_EQ(id.position, Vec3(0, 0, 0));
    EXPECT_EQ(id.orientation, Quaternion(1, 0, 0, 0));
    const Pose yaw = pose_from_matrix({0, -1, 0, 1, 1, 0, 0, 2, 0, 0, 1, 3, 0, 0, 0, 1});
    expect_vec(yaw.position, {1, 2, 3}, 0.0);
    EXPECT_LT(angular_error_deg(yaw.orientation, kYaw90), 1e-6);
}

TEST(MatrixPose, RejectsNonOrthogonalAndSingular) {
    EXPECT_THROW(pose_from_matrix({1, 0.01, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}), DataError);
    EXPECT_THROW(pose_from_matrix({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1}), DataError);
    const auto dir = oracle::temp_dir("geometry-matrix");
    std::ofstream(dir / "bad.pose.txt") << "1 0 0 0\n0 1 0 0\n";
    EXPECT_THROW(read_matrix_pose_file(dir / "bad.pose.txt"), DataError);
    std::ofstream(dir / "ok.pose.txt") << "1 0 0 0.5\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
    expect_vec(read_matrix_pose_file(dir / "ok.pose.txt").position, {0.5, 0, 0}, 0.0);
}
