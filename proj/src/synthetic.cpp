#include "commin/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "commin/error.hpp"
#include "commin/image_io.hpp"
#include "commin/random.hpp"

namespace commin::synthetic {

namespace {

using Rgb = std::array<double, 3>;

struct Ellipse {
    double cx, cy, rx, ry;
    bool contains(double u, double v) const {
        const double a = (u - cx) / rx, b = (v - cy) / ry;
        return a * a + b * b <= 1.0;
    }
};

struct FaceParams {
    Rgb bg_top, bg_bottom, skin, hair, iris, lips, shirt;
    Ellipse face, hair_outline, eye_l, eye_r, iris_l, iris_r, mouth;
    double hairline;
    int hair_pattern;   // 0 horizontal stripes, 1 vertical stripes, 2 checker, 3 diagonal
    double hair_period;  // in pixels
    double hair_contrast;
    double shade;        // side lighting strength on the face
};

FaceParams draw_params(Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
    auto colour = [&](double lo, double hi) { return Rgb{uni(lo, hi), uni(lo, hi), uni(lo, hi)}; };

    static constexpr std::array<Rgb, 5> kSkin{{{0.96, 0.80, 0.69},
                                               {0.89, 0.67, 0.52},
                                               {0.76, 0.55, 0.40},
                                               {0.55, 0.38, 0.26},
                                               {0.38, 0.26, 0.18}}};
    FaceParams p{};
    p.bg_top = colour(0.15, 0.95);
    p.bg_bottom = colour(0.05, 0.8);
    p.skin = kSkin[std::uniform_int_distribution<int>(0, 4)(rng)];
    for (auto& c : p.skin) c = std::clamp(c + uni(-0.05, 0.05), 0.0, 1.0);
    const double hair_base = uni(0.05, 0.7);
    p.hair = {hair_base * uni(0.8, 1.3), hair_base * uni(0.6, 1.0), hair_base * uni(0.3, 0.8)};
    p.iris = colour(0.05, 0.5);
    p.lips = {uni(0.55, 0.85), uni(0.2, 0.4), uni(0.25, 0.45)};
    p.shirt = colour(0.1, 0.9);

    const double cx = uni(0.44, 0.56), cy = uni(0.48, 0.58);
    const double rx = uni(0.22, 0.30), ry = uni(0.29, 0.36);
    p.face = {cx, cy, rx, ry};
    p.hair_outline = {cx, cy - ry * uni(0.05, 0.15), rx * uni(1.12, 1.3), ry * uni(1.08, 1.2)};
    p.hairline = cy - ry * uni(0.35, 0.6);
    const double eye_dx = rx * uni(0.35, 0.45), eye_y = cy - ry * uni(0.02, 0.15);
    const double erx = rx * uni(0.18, 0.24), ery = ry * uni(0.09, 0.13);
    p.eye_l = {cx - eye_dx, eye_y, erx, ery};
    p.eye_r = {cx + eye_dx, eye_y, erx, ery};
    p.iris_l = {cx - eye_dx, eye_y, erx * 0.5, ery * 0.9};
    p.iris_r = {cx + eye_dx, eye_y, erx * 0.5, ery * 0.9};
    p.mouth = {cx, cy + ry * uni(0.45, 0.6), rx * uni(0.3, 0.45), ry * uni(0.06, 0.1)};
    p.hair_pattern = std::uniform_int_distribution<int>(0, 3)(rng);
    p.hair_period = uni(2.0, 4.0);
    p.hair_contrast = uni(0.15, 0.35);
    p.shade = uni(-0.25, 0.25);
    return p;
}

double hair_texture(const FaceParams& p, double px, double py) {
    const double f = 2.0 * 3.14159265358979323846 / p.hair_period;
    double s = 0.0;
    switch (p.hair_pattern) {
        case 0: s = std::sin(f * py); break;
        case 1: s = std::sin(f * px); break;
        case 2: s = std::sin(f * px) * std::sin(f * py); break;
        default: s = std::sin(f * (px + py) * 0.7071); break;
    }
    return 1.0 + p.hair_contrast * s;
}

// Colour at continuous position (u, v) in [0,1]^2; px, py are the same point
// in pixel units for the textures.
Rgb shade_point(const FaceParams& p, double u, double v, double px, double py) {
    Rgb c;
    for (int i = 0; i < 3; ++i) c[i] = p.bg_top[i] * (1.0 - v) + p.bg_bottom[i] * v;

    const bool in_face = p.face.contains(u, v);
    const double shoulder_top = p.face.cy + p.face.ry * 0.85;
    if (!in_face && v > shoulder_top) {
        const double half = 0.2 + (v - shoulder_top) * 1.2;
        if (std::abs(u - p.face.cx) < half) c = p.shirt;
    }
    const bool in_hair = p.hair_outline.contains(u, v) && (!in_face || v < p.hairline);
    if (in_hair) {
        const double t = hair_texture(p, px, py);
        for (int i = 0; i < 3; ++i) c[i] = p.hair[i] * t;
        return c;
    }
    if (!in_face) return c;

    const double light = 1.0 + p.shade * (u - p.face.cx) / p.face.rx;
    for (int i = 0; i < 3; ++i) c[i] = p.skin[i] * light;
    if (p.iris_l.contains(u, v) || p.iris_r.contains(u, v)) return p.iris;
    if (p.eye_l.contains(u, v) || p.eye_r.contains(u, v)) return {0.95, 0.95, 0.93};
    if (p.mouth.contains(u, v)) return p.lips;
    return c;
}

}  // namespace

torch::Tensor render_face(const ImageShape& shape, std::uint64_t seed, std::int64_t index) {
    if (shape.channels != 1 && shape.channels != 3) throw InvalidArgument("render_face: channels must be 1 or 3");
    if (shape.height <= 0 || shape.width <= 0) throw InvalidArgument("render_face: empty image");
    Rng rng(derive_seed(seed, {label("synthetic-face"), static_cast<std::uint64_t>(index)}));
    const auto p = draw_params(rng);
    std::normal_distribution<double> grain(0.0, 0.015);

    constexpr int kSuper = 3;  // 3x3 supersampling
    const auto h = shape.height, w = shape.width;
    auto out = torch::empty({shape.channels, h, w}, torch::kFloat);
    auto acc = out.accessor<float, 3>();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            Rgb sum{0, 0, 0};
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
                    const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
                    const auto c = shade_point(p, px / static_cast<double>(w), py / static_cast<double>(h), px, py);
                    for (int i = 0; i < 3; ++i) sum[i] += c[i];
                }
            }
            const double g = grain(rng);
            for (int i = 0; i < 3; ++i) sum[i] = std::clamp(sum[i] / (kSuper * kSuper) + g, 0.0, 1.0);
            if (shape.channels == 1) {
                acc[0][y][x] = static_cast<float>((0.299 * sum[0] + 0.587 * sum[1] + 0.114 * sum[2]) * 2.0 - 1.0);
            } else {
                for (int i = 0; i < 3; ++i) acc[i][y][x] = static_cast<float>(sum[i] * 2.0 - 1.0);
            }
        }
    }
    return out;
}

torch::Tensor render_faces(const ImageShape& shape, std::uint64_t seed, std::int64_t count) {
    if (count <= 0) throw InvalidArgument("render_faces: count must be positive");
    std::vector<torch::Tensor> v;
    v.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) v.push_back(render_face(shape, seed, i));
    return torch::stack(v);
}

void write_faces(const std::filesystem::path& dir, const ImageShape& shape, std::uint64_t seed,
                 std::int64_t count) {
    if (count <= 0) throw InvalidArgument("write_faces: count must be positive");
    std::filesystem::create_directories(dir);
    for (std::int64_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "face_%05lld.png", static_cast<long long>(i));
        io::write_png(dir / name, io::from_tensor(render_face(shape, seed, i)));
    }
}

}  // namespace commin::synthetic
