#include "mspe/patch_embed.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mspe/errors.hpp"

namespace mspe {

std::pair<std::size_t, std::size_t> token_count(std::size_t h, std::size_t w, Extent2 kernel,
                                                Extent2 stride, std::size_t padding,
                                                TokenMode mode) {
    if (h == 0 || w == 0 || kernel.h == 0 || kernel.w == 0 || stride.h == 0 || stride.w == 0)
        throw std::invalid_argument("token_count: all extents must be positive");
    if (mode == TokenMode::non_overlap) {
        if (stride != kernel)
            throw std::invalid_argument("token_count: non_overlap mode requires stride == kernel");
        return {h / kernel.h, w / kernel.w};
    }
    if (h < kernel.h || w < kernel.w)
        throw std::invalid_argument("token_count: overlap mode requires the image to cover the kernel");
    auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
    return {ceil_div(h - kernel.h, stride.h) + padding, ceil_div(w - kernel.w, stride.w) + padding};
}

template <typename T>
PatchKernelBank<T> make_bank(std::size_t token_grid, std::size_t base_patch, std::size_t K,
                             std::size_t channels, std::size_t embed_dim) {
    if (K == 0) throw std::invalid_argument("make_bank: kernel count must be >= 1");
    if (token_grid == 0 || base_patch == 0 || channels == 0 || embed_dim == 0)
        throw std::invalid_argument("make_bank: all dimensions must be positive");
    if (base_patch % K != 0)
        throw std::invalid_argument("make_bank: base patch " + std::to_string(base_patch) +
                                    " is not divisible by kernel count " + std::to_string(K));
    PatchKernelBank<T> bank;
    bank.token_grid = token_grid;
    bank.embed_dim = embed_dim;
    bank.channels = channels;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t size = base_patch * (k + 1) / K;
        bank.kernels.emplace_back(std::array<std::size_t, 4>{size, size, channels, embed_dim});
        bank.biases.emplace_back(embed_dim, T(0));
        bank.anchors.push_back({token_grid * size, token_grid * size});
    }
    return bank;
}

template <typename T>
PatchKernelBank<T> bank_from_pretrained(const Kernel<T>& kernel, const std::vector<T>& bias,
                                        std::size_t token_grid, std::size_t K) {
    const auto [kh, kw, c, d] = kernel.shape;
    if (kh != kw)
        throw std::invalid_argument("bank_from_pretrained: pretrained kernel must be square");
    if (bias.size() != d)
        throw std::invalid_argument("bank_from_pretrained: bias length does not match embed dim");
    PatchKernelBank<T> bank = make_bank<T>(token_grid, kh, K, c, d);
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t size = bank.kernels[k].shape[0];
        bank.kernels[k] = pi_resize_kernel(kernel, {kh, kw}, {size, size});
        bank.biases[k] = bias;
    }
    return bank;
}

template <typename T>
void validate_bank(const PatchKernelBank<T>& bank) {
    const std::size_t K = bank.kernel_count();
    if (K == 0) throw std::invalid_argument("bank has no kernels");
    if (bank.biases.size() != K || bank.anchors.size() != K)
        throw std::invalid_argument("bank kernel/bias/anchor counts disagree");
    const std::size_t base_patch = bank.kernels[K - 1].shape[0];
    if (base_patch % K != 0)
        throw std::invalid_argument("bank base patch is not divisible by kernel count");
    for (std::size_t k = 0; k < K; ++k) {
        const auto [kh, kw, c, d] = bank.kernels[k].shape;
        if (kh != base_patch * (k + 1) / K || kw != kh)
            throw std::invalid_argument("bank kernel " + std::to_string(k) +
                                        " has size " + std::to_string(kh) + "x" +
                                        std::to_string(kw) + ", not the scaled base size");
        if (c != bank.channels || d != bank.embed_dim)
            throw std::invalid_argument("bank kernel " + std::to_string(k) +
                                        " channel/embed dims disagree with the bank");
        if (bank.biases[k].size() != bank.embed_dim)
            throw std::invalid_argument("bank bias " + std::to_string(k) + " has wrong length");
        if (!bank.kernels[k].all_finite())
            throw std::invalid_argument("bank kernel " + std::to_string(k) + " has non-finite values");
        if (k > 0 && bank.anchors[k].h <= bank.anchors[k - 1].h)
            throw std::invalid_argument("bank anchors must be strictly increasing");
    }
}

template <typename T>
std::size_t select_kernel(const PatchKernelBank<T>& bank, Extent2 resolution) {
    if (bank.kernel_count() == 0) throw std::invalid_argument("select_kernel: empty bank");
    std::size_t best = 0;
    double best_d2 = 0;
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
        const double dh = static_cast<double>(bank.anchors[k].h) - static_cast<double>(resolution.h);
        const double dw = static_cast<double>(bank.anchors[k].w) - static_cast<double>(resolution.w);
        const double d2 = dh * dh + dw * dw;
        if (k == 0 || d2 < best_d2) {
            best = k;
            best_d2 = d2;
        }
    }
    return best;
}

Extent2 adaptive_kernel_size(Extent2 resolution, std::size_t token_grid) {
    if (resolution.h < token_grid || resolution.w < token_grid)
        throw ResolutionTooSmallError(resolution.h, resolution.w, token_grid);
    return {resolution.h / token_grid, resolution.w / token_grid};
}

template <typename T>
std::pair<Kernel<T>, std::vector<T>> adaptive_kernel(const PatchKernelBank<T>& bank,
                                                     std::size_t index, Extent2 resolution) {
    if (index >= bank.kernel_count())
        throw std::invalid_argument("adaptive_kernel: kernel index out of range");
    const Extent2 target = adaptive_kernel_size(resolution, bank.token_grid);
    const Kernel<T>& base = bank.kernels[index];
    const Extent2 src{base.shape[0], base.shape[1]};
    if (src == target) return {base, bank.biases[index]};
    auto plan = kernel_resize_plan<T>(src, target, bank.adapt_method, bank.adapt_mode);
    return {apply_kernel_resize(plan, base), bank.biases[index]};
}

Extent2 center_crop_offset(Extent2 image, Extent2 kept) {
    if (kept.h > image.h || kept.w > image.w)
        throw std::invalid_argument("center_crop_offset: kept region exceeds the image");
    // Odd remainders discard the extra pixel at the top/left.
    return {(image.h - kept.h + 1) / 2, (image.w - kept.w + 1) / 2};
}

template <typename T>
TokenGrid<T> embed_with_kernel(const PatchKernelBank<T>& bank, std::size_t index,
                               const Image<T>& image) {
    const auto [h, w, c] = image.shape;
    if (c != bank.channels)
        throw std::invalid_argument("embed: image has " + std::to_string(c) +
                                    " channels but the bank expects " +
                                    std::to_string(bank.channels));
    auto [kernel, bias] = adaptive_kernel(bank, index, {h, w});
    const std::size_t N = bank.token_grid;
    const std::size_t kh = kernel.shape[0], kw = kernel.shape[1];
    const Extent2 off = center_crop_offset({h, w}, {N * kh, N * kw});

    TokenGrid<T> out;
    out.source_h = h;
    out.source_w = w;
    out.tokens = Grid<T>({N, N, bank.embed_dim});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t d = 0; d < bank.embed_dim; ++d) {
                T acc = bias[d];
                for (std::size_t p = 0; p < kh; ++p)
                    for (std::size_t q = 0; q < kw; ++q)
                        for (std::size_t cc = 0; cc < c; ++cc)
                            acc += image(off.h + i * kh + p, off.w + j * kw + q, cc) *
                                   kernel(p, q, cc, d);
                out.tokens(i, j, d) = acc;
            }
    return out;
}

template <typename T>
TokenGrid<T> embed(const PatchKernelBank<T>& bank, const Image<T>& image) {
    return embed_with_kernel(bank, select_kernel(bank, {image.shape[0], image.shape[1]}), image);
}

template <typename T>
void embed_with_kernel_backward(const PatchKernelBank<T>& bank, std::size_t index,
                                const Image<T>& image, const Grid<T>& dtokens,
                                Kernel<T>& dkernel, std::vector<T>& dbias) {
    if (index >= bank.kernel_count())
        throw std::invalid_argument("embed backward: kernel index out of range");
    const auto [h, w, c] = image.shape;
    if (c != bank.channels)
        throw std::invalid_argument("embed backward: channel count mismatch");
    const std::size_t N = bank.token_grid;
    const std::size_t D = bank.embed_dim;
    if (dtokens.shape != std::array<std::size_t, 3>{N, N, D})
        throw std::invalid_argument("embed backward: dtokens shape mismatch");
    const Kernel<T>& base = bank.kernels[index];
    if (dkernel.shape != base.shape || dbias.size() != D)
        throw std::invalid_argument("embed backward: gradient buffer shape mismatch");

    const Extent2 src{base.shape[0], base.shape[1]};
    const Extent2 target = adaptive_kernel_size({h, w}, N);
    const std::size_t kh = target.h, kw = target.w;
    const Extent2 off = center_crop_offset({h, w}, {N * kh, N * kw});

    Kernel<T> dresized({kh, kw, c, D});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t d = 0; d < D; ++d) {
                const T g = dtokens(i, j, d);
                dbias[d] += g;
                for (std::size_t p = 0; p < kh; ++p)
                    for (std::size_t q = 0; q < kw; ++q)
                        for (std::size_t cc = 0; cc < c; ++cc)
                            dresized(p, q, cc, d) +=
                                image(off.h + i * kh + p, off.w + j * kw + q, cc) * g;
            }

    if (src == target) {
        for (std::size_t t = 0; t < dkernel.size(); ++t) dkernel.data[t] += dresized.data[t];
        return;
    }
    auto plan = kernel_resize_plan<T>(src, target, bank.adapt_method, bank.adapt_mode);
    Kernel<T> routed = route_kernel_gradient(plan, dresized);
    for (std::size_t t = 0; t < dkernel.size(); ++t) dkernel.data[t] += routed.data[t];
}

template <typename T>
Grid<T> interpolate_pos_embed(const Grid<T>& pos, Extent2 target) {
    const auto [nh, nw, d] = pos.shape;
    (void)d;
    if (target.h == nh && target.w == nw) return pos;
    auto op = build_resize_operator<T>({nh, nw}, target, ResizeMethod::bilinear);
    return apply_resize(op, pos);
}

#define MSPE_INSTANTIATE_PATCH_EMBED(T)                                                          \
    template PatchKernelBank<T> make_bank<T>(std::size_t, std::size_t, std::size_t, std::size_t, \
                                             std::size_t);                                       \
    template PatchKernelBank<T> bank_from_pretrained<T>(const Kernel<T>&, const std::vector<T>&, \
                                                        std::size_t, std::size_t);               \
    template void validate_bank<T>(const PatchKernelBank<T>&);                                   \
    template std::size_t select_kernel<T>(const PatchKernelBank<T>&, Extent2);                   \
    template std::pair<Kernel<T>, std::vector<T>> adaptive_kernel<T>(const PatchKernelBank<T>&,  \
                                                                     std::size_t, Extent2);      \
    template TokenGrid<T> embed_with_kernel<T>(const PatchKernelBank<T>&, std::size_t,           \
                                               const Image<T>&);                                 \
    template TokenGrid<T> embed<T>(const PatchKernelBank<T>&, const Image<T>&);                  \
    template void embed_with_kernel_backward<T>(const PatchKernelBank<T>&, std::size_t,          \
                                                const Image<T>&, const Grid<T>&, Kernel<T>&,     \
                                                std::vector<T>&);                                \
    template Grid<T> interpolate_pos_embed<T>(const Grid<T>&, Extent2);

MSPE_INSTANTIATE_PATCH_EMBED(float)
MSPE_INSTANTIATE_PATCH_EMBED(double)

#undef MSPE_INSTANTIATE_PATCH_EMBED

} // namespace mspe
