#include "mspe/resize.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mspe {

std::string to_string(ResizeMethod m) {
    switch (m) {
    case ResizeMethod::bilinear: return "bilinear";
    case ResizeMethod::nearest: return "nearest";
    case ResizeMethod::bicubic: return "bicubic";
    }
    throw std::invalid_argument("unknown ResizeMethod value");
}

ResizeMethod parse_resize_method(const std::string& name) {
    if (name == "bilinear") return ResizeMethod::bilinear;
    if (name == "nearest") return ResizeMethod::nearest;
    if (name == "bicubic") return ResizeMethod::bicubic;
    throw std::invalid_argument("unknown resize method '" + name +
                                "' (expected bilinear, nearest, or bicubic)");
}

std::string to_string(KernelResizeMode m) {
    switch (m) {
    case KernelResizeMode::pseudo_inverse: return "pi";
    case KernelResizeMode::direct: return "direct";
    }
    throw std::invalid_argument("unknown KernelResizeMode value");
}

KernelResizeMode parse_kernel_resize_mode(const std::string& name) {
    if (name == "pi") return KernelResizeMode::pseudo_inverse;
    if (name == "direct") return KernelResizeMode::direct;
    throw std::invalid_argument("unknown kernel resize mode '" + name +
                                "' (expected pi or direct)");
}

namespace {

// Catmull-Rom weights (a = −0.5) for taps at offsets −1, 0, 1, 2 from the
// integer part of the source coordinate, with fractional part u ∈ [0, 1).
// The four weights sum to 1 for every u.
void catmull_rom_weights(double u, double w[4]) {
    w[0] = ((-0.5 * u + 1.0) * u - 0.5) * u;
    w[1] = (1.5 * u - 2.5) * u * u + 1.0;
    w[2] = ((-1.5 * u + 2.0) * u + 0.5) * u;
    w[3] = (0.5 * u - 0.5) * u * u;
}

std::size_t clamp_index(long i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<long>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

// dst × src single-axis matrix in f64. Out-of-range taps are clamped to the
// edge sample and their weights accumulated there, so every row sums to 1.
DenseMatrix<double> axis_matrix_f64(std::size_t src, std::size_t dst, ResizeMethod method) {
    if (src == 0 || dst == 0)
        throw std::invalid_argument("resize axis lengths must be positive");
    DenseMatrix<double> m(dst, src);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
        const double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
        const long i0 = static_cast<long>(std::floor(s));
        const double u = s - static_cast<double>(i0);
        switch (method) {
        case ResizeMethod::nearest: {
            // Round half up: floor(s + 0.5).
            const long idx = static_cast<long>(std::floor(s + 0.5));
            m(i, clamp_index(idx, src)) += 1.0;
            break;
        }
        case ResizeMethod::bilinear: {
            m(i, clamp_index(i0, src)) += 1.0 - u;
            m(i, clamp_index(i0 + 1, src)) += u;
            break;
        }
        case ResizeMethod::bicubic: {
            double w[4];
            catmull_rom_weights(u, w);
            for (int t = 0; t < 4; ++t)
                m(i, clamp_index(i0 - 1 + t, src)) += w[t];
            break;
        }
        }
    }
    return m;
}

template <typename T>
DenseMatrix<T> narrow(const DenseMatrix<double>& m) {
    DenseMatrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows() * m.cols(); ++i)
        out.data()[i] = static_cast<T>(m.data()[i]);
    return out;
}

DenseMatrix<double> to_f64(const DenseMatrix<float>& m) {
    DenseMatrix<double> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows() * m.cols(); ++i)
        out.data()[i] = static_cast<double>(m.data()[i]);
    return out;
}

const DenseMatrix<double>& to_f64(const DenseMatrix<double>& m) { return m; }

DenseMatrix<double> pinv_f64(const DenseMatrix<double>& m, double rel_tol) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const double cutoff = sigma.size() > 0 ? rel_tol * sigma(0) : 0.0;
    Eigen::VectorXd inv_sigma(sigma.size());
    for (Eigen::Index k = 0; k < sigma.size(); ++k)
        inv_sigma(k) = sigma(k) > cutoff ? 1.0 / sigma(k) : 0.0;

    Eigen::MatrixXd p = svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
    DenseMatrix<double> out(m.cols(), m.rows());
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c)
            out(r, c) = p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return out;
}

} // namespace

template <typename T>
DenseMatrix<T> resize_axis_matrix(std::size_t src, std::size_t dst, ResizeMethod method) {
    return narrow<T>(axis_matrix_f64(src, dst, method));
}

template <typename T>
ResizeOperator<T> build_resize_operator(Extent2 src, Extent2 dst, ResizeMethod method) {
    if (src.h == 0 || src.w == 0 || dst.h == 0 || dst.w == 0)
        throw std::invalid_argument("resize extents must be positive");
    ResizeOperator<T> op;
    op.src_h = src.h;
    op.src_w = src.w;
    op.dst_h = dst.h;
    op.dst_w = dst.w;
    op.method = method;
    op.row_matrix = resize_axis_matrix<T>(src.h, dst.h, method);
    op.col_matrix = resize_axis_matrix<T>(src.w, dst.w, method);
    return op;
}

template <typename T>
Image<T> apply_resize(const ResizeOperator<T>& op, const Image<T>& image) {
    const auto [h, w, ch] = image.shape;
    if (h != op.src_h || w != op.src_w)
        throw std::invalid_argument("apply_resize: image is " + std::to_string(h) + "x" +
                                    std::to_string(w) + " but operator expects " +
                                    std::to_string(op.src_h) + "x" + std::to_string(op.src_w));
    Image<T> out({op.dst_h, op.dst_w, ch});
    // Per channel: out_c = R · X_c · Cᵀ, with tmp = R · X_c first.
    DenseMatrix<T> tmp(op.dst_h, op.src_w);
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t i = 0; i < op.dst_h; ++i)
            for (std::size_t j = 0; j < op.src_w; ++j) {
                T acc = 0;
                for (std::size_t k = 0; k < op.src_h; ++k) {
                    const T r = op.row_matrix(i, k);
                    if (r != T(0)) acc += r * image(k, j, c);
                }
                tmp(i, j) = acc;
            }
        for (std::size_t i = 0; i < op.dst_h; ++i)
            for (std::size_t j = 0; j < op.dst_w; ++j) {
                T acc = 0;
                for (std::size_t k = 0; k < op.src_w; ++k) {
                    const T cw = op.col_matrix(j, k);
                    if (cw != T(0)) acc += cw * tmp(i, k);
                }
                out(i, j, c) = acc;
            }
    }
    return out;
}

template <typename T>
DenseMatrix<T> pseudo_inverse(const DenseMatrix<T>& m, double rel_tol) {
    if (m.rows() == 0 || m.cols() == 0)
        throw std::invalid_argument("pseudo_inverse: matrix must be non-empty");
    if (!m.all_finite())
        throw std::invalid_argument("pseudo_inverse: matrix has non-finite entries");
    return narrow<T>(pinv_f64(to_f64(m), rel_tol));
}

template <typename T>
KernelResizePlan<T> kernel_resize_plan(Extent2 src, Extent2 dst, ResizeMethod method,
                                       KernelResizeMode mode, double rel_tol) {
    if (src.h == 0 || src.w == 0 || dst.h == 0 || dst.w == 0)
        throw std::invalid_argument("kernel_resize_plan: extents must be positive");
    KernelResizePlan<T> plan;
    plan.src = src;
    plan.dst = dst;
    if (src == dst) {
        // Same-size interpolation is the identity under the half-pixel
        // convention for every supported method, and so is its PI map.
        plan.row_map = DenseMatrix<T>::identity(src.h);
        plan.col_map = DenseMatrix<T>::identity(src.w);
        return plan;
    }
    // B resizes patches from the kernel's current size to the target size
    // (per axis: dst × src). Token preservation ⟨Bx, ŵ⟩ = ⟨x, w⟩ then gives
    // ŵ = (Bᵀ)⁺ vec(w), which factors over axes as (Rᵀ)⁺ · W · ((Cᵀ)⁺)ᵀ.
    const DenseMatrix<double> row_b = axis_matrix_f64(src.h, dst.h, method);
    const DenseMatrix<double> col_b = axis_matrix_f64(src.w, dst.w, method);
    switch (mode) {
    case KernelResizeMode::pseudo_inverse:
        plan.row_map = narrow<T>(pinv_f64(transpose(row_b), rel_tol));
        plan.col_map = narrow<T>(pinv_f64(transpose(col_b), rel_tol));
        break;
    case KernelResizeMode::direct:
        // Resize the weights as if they were an image: B : src→dst this time.
        plan.row_map = narrow<T>(axis_matrix_f64(src.h, dst.h, method));
        plan.col_map = narrow<T>(axis_matrix_f64(src.w, dst.w, method));
        break;
    }
    return plan;
}

template <typename T>
Kernel<T> apply_kernel_resize(const KernelResizePlan<T>& plan, const Kernel<T>& kernel) {
    const auto [kh, kw, ch, dim] = kernel.shape;
    if (kh != plan.src.h || kw != plan.src.w)
        throw std::invalid_argument("apply_kernel_resize: kernel is " + std::to_string(kh) + "x" +
                                    std::to_string(kw) + " but plan expects " +
                                    std::to_string(plan.src.h) + "x" + std::to_string(plan.src.w));
    Kernel<T> out({plan.dst.h, plan.dst.w, ch, dim});
    DenseMatrix<T> tmp(plan.dst.h, kw);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t d = 0; d < dim; ++d) {
            for (std::size_t i = 0; i < plan.dst.h; ++i)
                for (std::size_t j = 0; j < kw; ++j) {
                    T acc = 0;
                    for (std::size_t k = 0; k < kh; ++k)
                        acc += plan.row_map(i, k) * kernel(k, j, c, d);
                    tmp(i, j) = acc;
                }
            for (std::size_t i = 0; i < plan.dst.h; ++i)
                for (std::size_t j = 0; j < plan.dst.w; ++j) {
                    T acc = 0;
                    for (std::size_t k = 0; k < kw; ++k)
                        acc += plan.col_map(j, k) * tmp(i, k);
                    out(i, j, c, d) = acc;
                }
        }
    return out;
}

template <typename T>
Kernel<T> route_kernel_gradient(const KernelResizePlan<T>& plan, const Kernel<T>& grad_resized) {
    const auto [gh, gw, ch, dim] = grad_resized.shape;
    if (gh != plan.dst.h || gw != plan.dst.w)
        throw std::invalid_argument("route_kernel_gradient: gradient is " + std::to_string(gh) +
                                    "x" + std::to_string(gw) + " but plan produces " +
                                    std::to_string(plan.dst.h) + "x" + std::to_string(plan.dst.w));
    Kernel<T> out({plan.src.h, plan.src.w, ch, dim});
    DenseMatrix<T> tmp(plan.src.h, gw);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t d = 0; d < dim; ++d) {
            // dW = row_mapᵀ · dŴ · col_map.
            for (std::size_t i = 0; i < plan.src.h; ++i)
                for (std::size_t j = 0; j < gw; ++j) {
                    T acc = 0;
                    for (std::size_t k = 0; k < gh; ++k)
                        acc += plan.row_map(k, i) * grad_resized(k, j, c, d);
                    tmp(i, j) = acc;
                }
            for (std::size_t i = 0; i < plan.src.h; ++i)
                for (std::size_t j = 0; j < plan.src.w; ++j) {
                    T acc = 0;
                    for (std::size_t k = 0; k < gw; ++k)
                        acc += plan.col_map(k, j) * tmp(i, k);
                    out(i, j, c, d) = acc;
                }
        }
    return out;
}

template <typename T>
Kernel<T> pi_resize_kernel(const Kernel<T>& kernel, Extent2 src, Extent2 dst,
                           ResizeMethod method) {
    const auto [kh, kw, ch, dim] = kernel.shape;
    (void)ch;
    (void)dim;
    if (kh != src.h || kw != src.w)
        throw std::invalid_argument("pi_resize_kernel: kernel is " + std::to_string(kh) + "x" +
                                    std::to_string(kw) + " but src says " + std::to_string(src.h) +
                                    "x" + std::to_string(src.w));
    if (src == dst) return kernel;
    return apply_kernel_resize(kernel_resize_plan<T>(src, dst, method), kernel);
}

#define MSPE_INSTANTIATE_RESIZE(T)                                                              \
    template DenseMatrix<T> resize_axis_matrix<T>(std::size_t, std::size_t, ResizeMethod);      \
    template ResizeOperator<T> build_resize_operator<T>(Extent2, Extent2, ResizeMethod);        \
    template Image<T> apply_resize<T>(const ResizeOperator<T>&, const Image<T>&);               \
    template DenseMatrix<T> pseudo_inverse<T>(const DenseMatrix<T>&, double);                   \
    template KernelResizePlan<T> kernel_resize_plan<T>(Extent2, Extent2, ResizeMethod,          \
                                                       KernelResizeMode, double);               \
    template Kernel<T> apply_kernel_resize<T>(const KernelResizePlan<T>&, const Kernel<T>&);    \
    template Kernel<T> route_kernel_gradient<T>(const KernelResizePlan<T>&, const Kernel<T>&);  \
    template Kernel<T> pi_resize_kernel<T>(const Kernel<T>&, Extent2, Extent2, ResizeMethod);

MSPE_INSTANTIATE_RESIZE(float)
MSPE_INSTANTIATE_RESIZE(double)

#undef MSPE_INSTANTIATE_RESIZE

} // namespace mspe
