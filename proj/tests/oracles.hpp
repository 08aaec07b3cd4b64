#pragma once

// Reference implementations written independently of the library, used as
// comparison oracles by the unit and acceptance tests.

#include <torch/torch.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vipr/flow.hpp"
#include "vipr/geometry.hpp"

namespace oracle {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Rotation matrix via Rodrigues' formula from the axis-angle form of q.
inline Mat3 rodrigues(const vipr::Quaternion& q_in) {
    vipr::Quaternion q = q_in;
    const double n = q.norm();
    q = {q.w / n, q.x / n, q.y / n, q.z / n};
    const double s = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
    Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    if (s < 1e-15) return r;
    const double angle = 2.0 * std::atan2(s, q.w);
    const double kx = q.x / s, ky = q.y / s, kz = q.z / s;
    const Mat3 k{{{0, -kz, ky}, {kz, 0, -kx}, {-ky, kx, 0}}};
    Mat3 k2{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int m = 0; m < 3; ++m) k2[i][j] += k[i][m] * k[m][j];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] += std::sin(angle) * k[i][j] + (1.0 - std::cos(angle)) * k2[i][j];
    return r;
}

inline std::array<double, 3> mul(const Mat3& m, const std::array<double, 3>& v) {
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i] += m[i][j] * v[j];
    return out;
}

inline std::array<double, 3> mul_transposed(const Mat3& m, const std::array<double, 3>& v) {
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i] += m[j][i] * v[j];
    return out;
}

inline vipr::Quaternion random_unit_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    double w = g(rng), x = g(rng), y = g(rng), z = g(rng);
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    return {w / n, x / n, y / n, z / n};
}

inline vipr::FlowField random_field(std::mt19937_64& rng, int w, int h, double scale = 10.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    vipr::FlowField f(w, h);
    for (auto& x : f.u) x = static_cast<float>(u(rng));
    for (auto& x : f.v) x = static_cast<float>(u(rng));
    return f;
}

// Per-zone mean by explicit pixel loops. Zone sizes: extent / zones, with
// the first extent % zones zones one pixel larger.
struct BruteZones {
    std::vector<double> mean_u, mean_v;
};

inline std::vector<int> zone_sizes(int extent, int zones) {
    std::vector<int> sizes(zones, extent / zones);
    for (int i = 0; i < extent % zones; ++i) ++sizes[i];
    return sizes;
}

inline BruteZones brute_zone_mean(const vipr::FlowField& f, int zx, int zy) {
    const auto wx = zone_sizes(f.width, zx);
    const auto wy = zone_sizes(f.height, zy);
    BruteZones out{std::vector<double>(zx * zy, 0.0), std::vector<double>(zx * zy, 0.0)};
    int r0 = 0;
    for (int a = 0; a < zy; ++a) {
        int c0 = 0;
        for (int b = 0; b < zx; ++b) {
            double su = 0.0, sv = 0.0;
            int count = 0;
            for (int r = r0; r < r0 + wy[a]; ++r)
                for (int c = c0; c < c0 + wx[b]; ++c) {
                    su += f.u[r * f.width + c];
                    sv += f.v[r * f.width + c];
                    ++count;
                }
            out.mean_u[a * zx + b] = count ? su / count : 0.0;
            out.mean_v[a * zx + b] = count ? sv / count : 0.0;
            c0 += wx[b];
        }
        r0 += wy[a];
    }
    return out;
}

// Middlebury layout: float magic, int32 width, int32 height, then
// interleaved (u, v) float pairs, row-major, little-endian.
inline std::vector<std::uint8_t> flo_bytes(const vipr::FlowField& f, float magic = 202021.25f) {
    std::vector<std::uint8_t> out;
    auto put = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    };
    const std::int32_t w = f.width, h = f.height;
    put(&magic, 4);
    put(&w, 4);
    put(&h, 4);
    for (int i = 0; i < w * h; ++i) {
        put(&f.u[i], 4);
        put(&f.v[i], 4);
    }
    return out;
}

// Central finite differences of a scalar function of a double tensor,
// compared against autograd. Returns the maximum relative error
// |fd - ad| / max(|fd| + |ad|, floor).
inline double gradient_check(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                             std::vector<torch::Tensor> inputs, double h = 1e-6, double floor = 1e-8) {
    for (auto& t : inputs) t = t.detach().clone().to(torch::kFloat64).set_requires_grad(true);
    auto y = f(inputs);
    auto grads = torch::autograd::grad({y}, inputs);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto base = inputs[k].detach().clone();
        auto flat = base.view({-1});
        auto g = grads[k].reshape({-1});
        for (std::int64_t i = 0; i < flat.numel(); ++i) {
            const double orig = flat[i].item<double>();
            std::vector<torch::Tensor> plus(inputs.begin(), inputs.end()), minus(inputs.begin(), inputs.end());
            auto bp = base.clone();
            bp.view({-1})[i] = orig + h;
            auto bm = base.clone();
            bm.view({-1})[i] = orig - h;
            plus[k] = bp;
            minus[k] = bm;
            torch::NoGradGuard guard;
            const double fd = (f(plus).item<double>() - f(minus).item<double>()) / (2.0 * h);
            const double ad = g[i].item<double>();
            const double denom = std::max(std::abs(fd) + std::abs(ad), floor);
            worst = std::max(worst, std::abs(fd - ad) / denom);
        }
    }
    return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("vipr-test-" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace oracle
