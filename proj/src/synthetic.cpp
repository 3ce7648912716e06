#include "mspe/synthetic.hpp"

#include "mspe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mspe {

namespace {

// Smallest renderable side length: below this no shape carries usable signal.
constexpr std::int64_t kMinSide = 4;

// Shape extents relative to the scene scale, chosen so every class covers a
// similar area (mean brightness alone is then a weak class cue) while staying
// inside a bounding radius of ~1.05 * scale.
constexpr double kDiskRadius = 0.80;
constexpr double kSquareHalf = 0.70;
constexpr double kCrossArm = 0.30;
constexpr double kTriangleBaseX = 0.8660254037844386; // sin(60 deg)

double edge_side(double ay, double ax, double by, double bx, double py, double px) {
    return (by - ay) * (px - ax) - (bx - ax) * (py - ay);
}

bool inside_shape(const ShapeScene& scene, double y, double x) {
    const double dy = y - scene.center_y;
    const double dx = x - scene.center_x;
    const double sc = scene.scale;
    switch (static_cast<ShapeClass>(scene.label)) {
    case ShapeClass::disk: {
        const double r = kDiskRadius * sc;
        return dy * dy + dx * dx <= r * r;
    }
    case ShapeClass::square: {
        const double half = kSquareHalf * sc;
        return std::max(std::abs(dy), std::abs(dx)) <= half;
    }
    case ShapeClass::triangle: {
        // Equilateral with circumradius = scale, apex toward smaller y.
        const double c0 = edge_side(-sc, 0.0, 0.5 * sc, kTriangleBaseX * sc, dy, dx);
        const double c1 = edge_side(0.5 * sc, kTriangleBaseX * sc, 0.5 * sc,
                                    -kTriangleBaseX * sc, dy, dx);
        const double c2 = edge_side(0.5 * sc, -kTriangleBaseX * sc, -sc, 0.0, dy, dx);
        return (c0 >= 0.0 && c1 >= 0.0 && c2 >= 0.0) ||
               (c0 <= 0.0 && c1 <= 0.0 && c2 <= 0.0);
    }
    case ShapeClass::cross: {
        const double arm = kCrossArm * sc;
        const bool horizontal = std::abs(dy) <= arm && std::abs(dx) <= sc;
        const bool vertical = std::abs(dx) <= arm && std::abs(dy) <= sc;
        return horizontal || vertical;
    }
    }
    throw std::invalid_argument("unknown shape label " + std::to_string(scene.label));
}

void validate_spec(const SyntheticShapesSpec& spec) {
    if (spec.num_classes < 1 || spec.num_classes > 4)
        throw std::invalid_argument("num_classes must be in [1, 4], got " +
                                    std::to_string(spec.num_classes));
    if (spec.samples_per_class < 0)
        throw std::invalid_argument("samples_per_class must be non-negative");
    if (spec.min_resolution < kMinSide)
        throw std::invalid_argument("min_resolution " + std::to_string(spec.min_resolution) +
                                    " is below the minimum of " + std::to_string(kMinSide));
    if (spec.max_resolution < spec.min_resolution)
        throw std::invalid_argument("max_resolution must be >= min_resolution");
    if (!(spec.background_lo >= 0.0 && spec.background_lo <= spec.background_hi))
        throw std::invalid_argument("background intensity range is invalid");
    if (!(spec.foreground_lo <= spec.foreground_hi && spec.foreground_hi <= 1.0))
        throw std::invalid_argument("foreground intensity range is invalid");
    if (!(spec.background_hi < spec.foreground_lo))
        throw std::invalid_argument("foreground range must sit strictly above background range");
    if (spec.position_jitter < 0.0)
        throw std::invalid_argument("position_jitter must be non-negative");
    if (!(spec.scale_lo > 0.0 && spec.scale_lo <= spec.scale_hi))
        throw std::invalid_argument("scale range is invalid");
}

} // namespace

std::vector<ShapeScene> sample_scenes(const SyntheticShapesSpec& spec) {
    validate_spec(spec);
    const std::int64_t total = spec.num_classes * spec.samples_per_class;
    std::vector<ShapeScene> scenes(static_cast<std::size_t>(total));
    const std::uint64_t span =
        static_cast<std::uint64_t>(spec.max_resolution - spec.min_resolution) + 1;
    for (std::int64_t i = 0; i < total; ++i) {
        // One independent stream per scene: draw counts cannot leak between
        // samples, so any subset of the dataset is reproducible in isolation.
        Rng rng = Rng::stream(spec.seed, 1, static_cast<std::uint64_t>(i), 0);
        ShapeScene& s = scenes[static_cast<std::size_t>(i)];
        s.label = i % spec.num_classes;
        const std::int64_t side = spec.min_resolution + static_cast<std::int64_t>(rng.below(span));
        s.native_h = side;
        s.native_w = side;
        s.center_y = 0.5 + rng.uniform(-spec.position_jitter, spec.position_jitter);
        s.center_x = 0.5 + rng.uniform(-spec.position_jitter, spec.position_jitter);
        s.scale = rng.uniform(spec.scale_lo, spec.scale_hi);
        s.foreground = rng.uniform(spec.foreground_lo, spec.foreground_hi);
        s.background = rng.uniform(spec.background_lo, spec.background_hi);
    }
    return scenes;
}

template <typename T>
Image<T> render_scene(const ShapeScene& scene, std::int64_t height, std::int64_t width) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("render resolution must be positive");
    if (scene.label < 0 || scene.label > 3)
        throw std::invalid_argument("unknown shape label " + std::to_string(scene.label));
    Image<T> img({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 1});
    // 3x3 subsamples per pixel: coverage is a tenth-step grey level, giving
    // anti-aliased edges whose width tracks the render resolution.
    constexpr int kSub = 3;
    constexpr double kInv = 1.0 / kSub;
    for (std::int64_t i = 0; i < height; ++i) {
        for (std::int64_t j = 0; j < width; ++j) {
            int covered = 0;
            for (int a = 0; a < kSub; ++a) {
                const double y =
                    (static_cast<double>(i) + (a + 0.5) * kInv) / static_cast<double>(height);
                for (int b = 0; b < kSub; ++b) {
                    const double x =
                        (static_cast<double>(j) + (b + 0.5) * kInv) / static_cast<double>(width);
                    if (inside_shape(scene, y, x)) ++covered;
                }
            }
            const double v = scene.background + (scene.foreground - scene.background) *
                                                    (static_cast<double>(covered) /
                                                     static_cast<double>(kSub * kSub));
            img(static_cast<std::size_t>(i), static_cast<std::size_t>(j), std::size_t{0}) =
                static_cast<T>(v);
        }
    }
    return img;
}

template <typename T>
LabeledImages<T> generate_synthetic(const SyntheticShapesSpec& spec) {
    const std::vector<ShapeScene> scenes = sample_scenes(spec);
    LabeledImages<T> out;
    out.num_classes = spec.num_classes;
    out.images.reserve(scenes.size());
    out.labels.reserve(scenes.size());
    for (const ShapeScene& s : scenes) {
        out.images.push_back(render_scene<T>(s, s.native_h, s.native_w));
        out.labels.push_back(s.label);
    }
    return out;
}

template <typename T>
LabeledImages<T> render_scenes_at(const std::vector<ShapeScene>& scenes, std::int64_t height,
                                  std::int64_t width, std::int64_t num_classes) {
    LabeledImages<T> out;
    out.num_classes = num_classes;
    out.images.reserve(scenes.size());
    out.labels.reserve(scenes.size());
    for (const ShapeScene& s : scenes) {
        out.images.push_back(render_scene<T>(s, height, width));
        out.labels.push_back(s.label);
    }
    return out;
}

template <typename T>
DatasetAt<T> scene_dataset(std::vector<ShapeScene> scenes, std::int64_t num_classes) {
    return [scenes = std::move(scenes), num_classes](std::int64_t h, std::int64_t w) {
        return render_scenes_at<T>(scenes, h, w, num_classes);
    };
}

#define MSPE_INSTANTIATE_SYNTHETIC(T)                                                           \
    template Image<T> render_scene<T>(const ShapeScene&, std::int64_t, std::int64_t);          \
    template LabeledImages<T> generate_synthetic<T>(const SyntheticShapesSpec&);                \
    template LabeledImages<T> render_scenes_at<T>(const std::vector<ShapeScene>&, std::int64_t, \
                                                  std::int64_t, std::int64_t);                  \
    template DatasetAt<T> scene_dataset<T>(std::vector<ShapeScene>, std::int64_t);

MSPE_INSTANTIATE_SYNTHETIC(float)
MSPE_INSTANTIATE_SYNTHETIC(double)

#undef MSPE_INSTANTIATE_SYNTHETIC

} // namespace mspe
