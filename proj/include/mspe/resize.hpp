#pragma once

#include <cstddef>
#include <string>

#include "mspe/matrix.hpp"
#include "mspe/tensor.hpp"

namespace mspe {

/// A (height, width) pair: a resolution or a kernel size.
struct Extent2 {
    std::size_t h = 0;
    std::size_t w = 0;

    bool operator==(const Extent2&) const = default;
};

enum class ResizeMethod { bilinear, nearest, bicubic };

std::string to_string(ResizeMethod m);
ResizeMethod parse_resize_method(const std::string& name);

/// Separable linear operator realizing an image resize. The full operator on
/// row-major vectorized images is row_matrix ⊗ col_matrix; applying it to an
/// image computes row_matrix · X · col_matrixᵀ per channel.
///
/// Interpolation convention: target center i maps to source coordinate
/// (i + 0.5) · src/dst − 0.5, taps clamped to the source range. Bicubic uses
/// the Catmull-Rom kernel (a = −0.5).
template <typename T>
struct ResizeOperator {
    std::size_t src_h = 0, src_w = 0;
    std::size_t dst_h = 0, dst_w = 0;
    ResizeMethod method = ResizeMethod::bilinear;
    DenseMatrix<T> row_matrix; // dst_h × src_h
    DenseMatrix<T> col_matrix; // dst_w × src_w
};

/// Single-axis interpolation matrix (dst × src).
template <typename T>
DenseMatrix<T> resize_axis_matrix(std::size_t src, std::size_t dst, ResizeMethod method);

template <typename T>
ResizeOperator<T> build_resize_operator(Extent2 src, Extent2 dst, ResizeMethod method);

template <typename T>
Image<T> apply_resize(const ResizeOperator<T>& op, const Image<T>& image);

/// Moore-Penrose pseudo-inverse by SVD. Singular values below
/// rel_tol × σ_max are treated as zero. Always computed in f64 internally.
template <typename T>
DenseMatrix<T> pseudo_inverse(const DenseMatrix<T>& m, double rel_tol = 1e-10);

/// How patch-kernel weights are resized to a new kernel size.
enum class KernelResizeMode {
    pseudo_inverse, // ŵ = (Bᵀ)⁺ vec(w): preserves token values on upscaled inputs
    direct          // ŵ = B vec(w): resizes the weights like an image
};

std::string to_string(KernelResizeMode m);
KernelResizeMode parse_kernel_resize_mode(const std::string& name);

/// Separable factors of a kernel-resize map: resized = row_map · W · col_mapᵀ
/// per (channel, embed-dim) slice. The adjoint routes gradients back:
/// dW = row_mapᵀ · dŴ · col_map.
template <typename T>
struct KernelResizePlan {
    Extent2 src, dst;
    DenseMatrix<T> row_map; // dst.h × src.h
    DenseMatrix<T> col_map; // dst.w × src.w
};

template <typename T>
KernelResizePlan<T> kernel_resize_plan(Extent2 src, Extent2 dst, ResizeMethod method,
                                       KernelResizeMode mode = KernelResizeMode::pseudo_inverse,
                                       double rel_tol = 1e-10);

/// Applies a plan to every (channel, embed-dim) slice of a kernel.
template <typename T>
Kernel<T> apply_kernel_resize(const KernelResizePlan<T>& plan, const Kernel<T>& kernel);

/// Routes a gradient w.r.t. the resized kernel back to the base kernel.
template <typename T>
Kernel<T> route_kernel_gradient(const KernelResizePlan<T>& plan, const Kernel<T>& grad_resized);

/// Pseudo-inverse resize of kernel weights: per slice, (Bᵀ)⁺ vec(w) where B
/// is the src→dst interpolation map. For any src-sized patch x this makes
/// ⟨Bx, ŵ⟩ = ⟨x, w⟩ hold exactly whenever Bᵀ has full row rank (upscaling).
/// src must match the kernel's spatial dims; dst == src returns a copy
/// (the operator is the identity under the half-pixel convention).
template <typename T>
Kernel<T> pi_resize_kernel(const Kernel<T>& kernel, Extent2 src, Extent2 dst,
                           ResizeMethod method = ResizeMethod::bilinear);

} // namespace mspe
