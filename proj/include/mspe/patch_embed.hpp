#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mspe/resize.hpp"
#include "mspe/tensor.hpp"

namespace mspe {

/// Bank of K patch-embedding kernels. Kernel k has base spatial size
/// base_patch·(k+1)/K and is "native" at anchor resolution N × base size;
/// at other resolutions it is resized to (⌊h/N⌋, ⌊w/N⌋) before use. The
/// largest kernel doubles as the original single-kernel embedding.
template <typename T>
struct PatchKernelBank {
    std::size_t token_grid = 0; // N: tokens per side after embedding
    std::size_t embed_dim = 0;  // D
    std::size_t channels = 0;   // C
    std::vector<Kernel<T>> kernels;    // K entries, (base_h, base_w, C, D)
    std::vector<std::vector<T>> biases; // K entries, each length D
    std::vector<Extent2> anchors;       // K entries, strictly increasing
    KernelResizeMode adapt_mode = KernelResizeMode::pseudo_inverse;
    ResizeMethod adapt_method = ResizeMethod::bilinear;

    std::size_t kernel_count() const { return kernels.size(); }
    /// Index of the kernel playing the role of the original embedding.
    std::size_t original_index() const { return kernels.size() - 1; }
};

enum class TokenMode { non_overlap, overlap };

/// Token-grid size produced by a (possibly strided, padded) convolution.
/// non_overlap requires stride == kernel and gives (⌊h/hk⌋, ⌊w/wk⌋);
/// overlap gives (⌈(h−hk)/hs⌉ + p, ⌈(w−wk)/ws⌉ + p).
std::pair<std::size_t, std::size_t> token_count(std::size_t h, std::size_t w, Extent2 kernel,
                                                Extent2 stride, std::size_t padding,
                                                TokenMode mode);

/// Zero-filled bank with the stated base-size/anchor layout.
/// base_patch must be divisible by K.
template <typename T>
PatchKernelBank<T> make_bank(std::size_t token_grid, std::size_t base_patch, std::size_t K,
                             std::size_t channels, std::size_t embed_dim);

/// Bank whose every base kernel is the pseudo-inverse resize of one
/// pretrained kernel (spatial size base_patch, divisible by K).
template <typename T>
PatchKernelBank<T> bank_from_pretrained(const Kernel<T>& kernel, const std::vector<T>& bias,
                                        std::size_t token_grid, std::size_t K);

/// Throws invalid-argument when a bank violates its structural invariants.
template <typename T>
void validate_bank(const PatchKernelBank<T>& bank);

/// Index of the anchor nearest to (h, w) in Euclidean distance;
/// ties break toward the smaller index.
template <typename T>
std::size_t select_kernel(const PatchKernelBank<T>& bank, Extent2 resolution);

/// Kernel size used at a resolution: (⌊h/N⌋, ⌊w/N⌋).
/// Throws ResolutionTooSmallError when h < N or w < N.
Extent2 adaptive_kernel_size(Extent2 resolution, std::size_t token_grid);

/// Kernel `index` resized from its base size to the adaptive size for this
/// resolution, plus its bias (unchanged).
template <typename T>
std::pair<Kernel<T>, std::vector<T>> adaptive_kernel(const PatchKernelBank<T>& bank,
                                                     std::size_t index, Extent2 resolution);

/// Center-crop offsets discarding h−N·hk rows and w−N·wk columns, split
/// evenly with the extra pixel discarded at the top/left when odd.
Extent2 center_crop_offset(Extent2 image, Extent2 kept);

/// Full embedding: select kernel by resolution, resize it adaptively,
/// center-crop the image to N·hk × N·wk, then non-overlapping convolution
/// plus bias. Output grid is exactly N×N.
template <typename T>
TokenGrid<T> embed(const PatchKernelBank<T>& bank, const Image<T>& image);

/// As embed, but with a caller-chosen kernel index (training needs the
/// branch fixed by the resolution subset rather than nearest-anchor).
template <typename T>
TokenGrid<T> embed_with_kernel(const PatchKernelBank<T>& bank, std::size_t index,
                               const Image<T>& image);

/// Accumulates the gradient of embed_with_kernel into the bank's base
/// kernel `index` and its bias: the convolution gradient w.r.t. the resized
/// kernel is routed back through the (fixed) resize map's transpose.
/// dkernel must match the base kernel's shape; dbias must have length D.
template <typename T>
void embed_with_kernel_backward(const PatchKernelBank<T>& bank, std::size_t index,
                                const Image<T>& image, const Grid<T>& dtokens,
                                Kernel<T>& dkernel, std::vector<T>& dbias);

/// Bilinear resample of a position grid to a new token-grid shape.
template <typename T>
Grid<T> interpolate_pos_embed(const Grid<T>& pos, Extent2 target);

} // namespace mspe
