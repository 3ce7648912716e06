#pragma once

#include "mspe/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mspe {

/// In-memory classification dataset. Images may have heterogeneous shapes
/// (native-resolution rendering produces one shape per sample).
template <typename T>
struct LabeledImages {
    std::vector<Image<T>> images;
    std::vector<std::int64_t> labels;
    std::int64_t num_classes = 0;

    [[nodiscard]] std::size_t size() const { return images.size(); }
};

/// Materializes the same underlying dataset at a requested resolution.
/// Procedural data renders each sample natively at (height, width); stored
/// datasets fall back to resizing. Evaluation sweeps consume this view so a
/// resolution change never silently mixes the two behaviours.
template <typename T>
using DatasetAt = std::function<LabeledImages<T>(std::int64_t height, std::int64_t width)>;

} // namespace mspe
