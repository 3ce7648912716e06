#pragma once

#include "mspe/dataset.hpp"

#include <cstdint>
#include <vector>

namespace mspe {

/// Shape classes rendered by the procedural generator, in label order.
enum class ShapeClass : std::int64_t { disk = 0, square = 1, triangle = 2, cross = 3 };

/// Configuration for the procedural shapes dataset. Geometry lives in unit
/// coordinates so every sample can be rendered at any pixel resolution
/// without resampling a stored bitmap.
struct SyntheticShapesSpec {
    std::int64_t num_classes = 4;     ///< uses the first num_classes ShapeClass entries
    std::int64_t samples_per_class = 64;
    std::int64_t min_resolution = 32; ///< native side length range, inclusive
    std::int64_t max_resolution = 32;
    double background_lo = 0.05;
    double background_hi = 0.35;
    double foreground_lo = 0.65;
    double foreground_hi = 0.95;
    double position_jitter = 0.08; ///< max |center offset| from 0.5 per axis
    double scale_lo = 0.24;        ///< shape extent as a fraction of the unit square
    double scale_hi = 0.34;
    std::uint64_t seed = 0;
};

/// One sampled scene: everything needed to render the sample at any
/// resolution. Coordinates are in the unit square; `center_y` runs down the
/// rows and `center_x` across the columns.
struct ShapeScene {
    std::int64_t label = 0;
    std::int64_t native_h = 0;
    std::int64_t native_w = 0;
    double center_y = 0.5;
    double center_x = 0.5;
    double scale = 0.3;
    double foreground = 0.8;
    double background = 0.2;
};

/// Draws the scene parameters for every sample in the spec. Classes are
/// interleaved (sample i has label i mod num_classes) so counts per class
/// equal samples_per_class and every prefix is near-balanced. Each scene is
/// drawn from its own counter-derived stream, so the set is deterministic
/// per seed and scenes are independent of one another.
std::vector<ShapeScene> sample_scenes(const SyntheticShapesSpec& spec);

/// Renders one scene at the given resolution with 3x3 supersampling per
/// pixel. Pure arithmetic: the same scene and resolution always produce
/// bitwise-identical pixels.
template <typename T>
Image<T> render_scene(const ShapeScene& scene, std::int64_t height, std::int64_t width);

/// Renders every scene at its own native resolution.
template <typename T>
LabeledImages<T> generate_synthetic(const SyntheticShapesSpec& spec);

/// Renders the given scenes at one shared resolution (resolution sweeps).
template <typename T>
LabeledImages<T> render_scenes_at(const std::vector<ShapeScene>& scenes, std::int64_t height,
                                  std::int64_t width, std::int64_t num_classes);

/// Dataset view that renders the scenes natively at whatever resolution the
/// caller requests.
template <typename T>
DatasetAt<T> scene_dataset(std::vector<ShapeScene> scenes, std::int64_t num_classes);

} // namespace mspe
