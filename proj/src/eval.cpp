#include "mspe/eval.hpp"

#include "mspe/resize.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mspe {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
std::size_t argmax(const std::vector<T>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b,
              std::size_t& zero_norm_warnings) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        ++zero_norm_warnings;
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Class feature: row 0 of the sequence after the final layer norm.
template <typename T>
std::vector<double> cls_feature(const ViTParams<T>& params, const TokenGrid<T>& tokens) {
    auto [logits, cache] = encoder_forward(params, tokens);
    (void)logits;
    std::vector<double> f(cache.final_ln.out.cols());
    for (std::size_t d = 0; d < f.size(); ++d)
        f[d] = static_cast<double>(cache.final_ln.out(0, d));
    return f;
}

} // namespace

EvalMode parse_eval_mode(const std::string& name) {
    if (name == "vanilla") return EvalMode::vanilla_resize;
    if (name == "flexivit") return EvalMode::flexivit;
    if (name == "mspe") return EvalMode::mspe;
    throw std::invalid_argument("unknown eval mode '" + name +
                                "' (expected vanilla, flexivit, or mspe)");
}

std::string to_string(EvalMode mode) {
    switch (mode) {
    case EvalMode::vanilla_resize: return "vanilla";
    case EvalMode::flexivit: return "flexivit";
    case EvalMode::mspe: return "mspe";
    }
    throw std::invalid_argument("unknown eval mode value");
}

template <typename T>
EvalRow evaluate_cell(const EvalState<T>& state, const DatasetAt<T>& dataset, EvalMode mode,
                      Extent2 resolution) {
    if (state.params == nullptr || state.baseline == nullptr)
        throw std::invalid_argument("evaluate_cell: missing encoder or baseline bank");
    const PatchKernelBank<T>* bank = state.baseline;
    if (mode == EvalMode::mspe) {
        bank = state.tuned != nullptr ? state.tuned : state.baseline;
    }

    const LabeledImages<T> data =
        dataset(static_cast<std::int64_t>(resolution.h), static_cast<std::int64_t>(resolution.w));
    if (data.size() == 0) throw std::invalid_argument("evaluate_cell: empty dataset");

    ResizeOperator<T> to_base;
    const bool needs_resize = mode == EvalMode::vanilla_resize &&
                              (resolution.h != state.base_resolution ||
                               resolution.w != state.base_resolution);
    if (needs_resize)
        to_base = build_resize_operator<T>(resolution,
                                           {state.base_resolution, state.base_resolution},
                                           ResizeMethod::bilinear);

    std::size_t hits = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        TokenGrid<T> tokens;
        switch (mode) {
        case EvalMode::vanilla_resize: {
            const Image<T>& img =
                needs_resize ? apply_resize(to_base, data.images[i]) : data.images[i];
            tokens = embed_with_kernel(*state.baseline, state.baseline->original_index(), img);
            break;
        }
        case EvalMode::flexivit:
            tokens = embed_with_kernel(*state.baseline, state.baseline->original_index(),
                                       data.images[i]);
            break;
        case EvalMode::mspe:
            tokens = embed(*bank, data.images[i]);
            break;
        }
        auto [logits, cache] = encoder_forward(*state.params, tokens);
        (void)cache;
        loss += static_cast<double>(
                    cross_entropy(logits, static_cast<std::size_t>(data.labels[i])).first) /
                static_cast<double>(data.size());
        if (argmax(logits) == static_cast<std::size_t>(data.labels[i])) ++hits;
    }

    EvalRow row;
    row.mode = mode;
    row.height = resolution.h;
    row.width = resolution.w;
    row.top1 = static_cast<double>(hits) / static_cast<double>(data.size());
    row.mean_loss = loss;
    row.samples = data.size();
    return row;
}

template <typename T>
EvalReport sweep(const EvalState<T>& state, const DatasetAt<T>& dataset,
                 const std::vector<EvalMode>& modes, const std::vector<Extent2>& resolutions) {
    if (resolutions.empty()) throw std::invalid_argument("sweep: empty resolution list");
    if (modes.empty()) throw std::invalid_argument("sweep: empty mode list");
    EvalReport report;
    for (EvalMode mode : modes)
        for (Extent2 res : resolutions) {
            try {
                report.rows.push_back(evaluate_cell(state, dataset, mode, res));
            } catch (const std::exception& e) {
                EvalRow row;
                row.mode = mode;
                row.height = res.h;
                row.width = res.w;
                row.ok = false;
                row.error = e.what();
                report.rows.push_back(std::move(row));
            }
        }
    return report;
}

std::vector<Extent2> square_resolutions(std::size_t a, std::size_t b, std::size_t step) {
    if (a == 0 || step == 0 || b < a)
        throw std::invalid_argument("square_resolutions: need 1 <= a <= b and step >= 1");
    std::vector<Extent2> out;
    for (std::size_t r = a; r <= b; r += step) out.push_back({r, r});
    return out;
}

std::vector<Extent2> aspect_resolutions(std::size_t fixed_height, std::size_t a, std::size_t b,
                                        std::size_t step) {
    if (fixed_height == 0 || a == 0 || step == 0 || b < a)
        throw std::invalid_argument("aspect_resolutions: need positive sizes and a <= b");
    std::vector<Extent2> out;
    for (std::size_t w = a; w <= b; w += step) out.push_back({fixed_height, w});
    return out;
}

std::string report_csv(const EvalReport& report) {
    std::string csv = "mode,height,width,top1,loss,n\n";
    for (const EvalRow& r : report.rows) {
        csv += to_string(r.mode);
        csv += ',' + std::to_string(r.height) + ',' + std::to_string(r.width) + ',';
        if (r.ok) {
            csv += fmt_double(r.top1) + ',' + fmt_double(r.mean_loss) + ',' +
                   std::to_string(r.samples);
        } else {
            csv += "ERR,ERR,0";
        }
        csv += '\n';
    }
    return csv;
}

template <typename T>
TokenGrid<T> embed_any(const EmbedState<T>& state, const Image<T>& image) {
    if (state.bank == nullptr) throw std::invalid_argument("embed_any: missing bank");
    if (state.adaptive_select) return embed(*state.bank, image);
    return embed_with_kernel(*state.bank, state.bank->original_index(), image);
}

template <typename T>
SimilarityReport cosine_similarity_diag(const ViTParams<T>& params, const EmbedState<T>& state_a,
                                        const EmbedState<T>& state_b, const DatasetAt<T>& dataset,
                                        Extent2 r_low, Extent2 r_high, std::size_t max_images) {
    if (max_images == 0) throw std::invalid_argument("cosine_similarity_diag: need max_images >= 1");
    const LabeledImages<T> low =
        dataset(static_cast<std::int64_t>(r_low.h), static_cast<std::int64_t>(r_low.w));
    const LabeledImages<T> high =
        dataset(static_cast<std::int64_t>(r_high.h), static_cast<std::int64_t>(r_high.w));
    if (low.size() != high.size())
        throw std::invalid_argument("cosine_similarity_diag: dataset views disagree on size");
    if (low.size() == 0) throw std::invalid_argument("cosine_similarity_diag: empty dataset");
    const std::size_t n = std::min(max_images, low.size());

    SimilarityReport report;
    for (std::size_t i = 0; i < n; ++i) {
        const TokenGrid<T> ta = embed_any(state_a, low.images[i]);
        const TokenGrid<T> tb = embed_any(state_b, high.images[i]);
        if (ta.tokens.shape != tb.tokens.shape)
            throw std::invalid_argument("cosine_similarity_diag: token grids disagree");
        const std::size_t grid = ta.tokens.shape[0] * ta.tokens.shape[1];
        const std::size_t dim = ta.tokens.shape[2];

        SimilarityRow row;
        row.image_id = i;
        double patch_sum = 0.0;
        for (std::size_t g = 0; g < grid; ++g) {
            std::vector<double> va(dim), vb(dim);
            for (std::size_t d = 0; d < dim; ++d) {
                va[d] = static_cast<double>(ta.tokens.data[g * dim + d]);
                vb[d] = static_cast<double>(tb.tokens.data[g * dim + d]);
            }
            patch_sum += cosine(va, vb, report.zero_norm_warnings);
        }
        row.patch_cos = patch_sum / static_cast<double>(grid);
        row.cls_cos = cosine(cls_feature(params, ta), cls_feature(params, tb),
                             report.zero_norm_warnings);
        report.rows.push_back(row);
        report.mean_patch_cos += row.patch_cos / static_cast<double>(n);
        report.mean_cls_cos += row.cls_cos / static_cast<double>(n);
    }
    return report;
}

std::string similarity_csv(const SimilarityReport& report) {
    std::string csv = "image_id,patch_cos,cls_cos\n";
    for (const SimilarityRow& r : report.rows)
        csv += std::to_string(r.image_id) + ',' + fmt_double(r.patch_cos) + ',' +
               fmt_double(r.cls_cos) + '\n';
    return csv;
}

std::size_t forward_macs(const ViTConfig& config, Extent2 kernel_size, std::size_t channels) {
    const std::size_t n2 = config.token_grid * config.token_grid;
    const std::size_t s = n2 + 1;
    const std::size_t d = config.embed_dim;
    const std::size_t hidden = config.mlp_hidden == 0 ? 4 * d : config.mlp_hidden;
    const std::size_t embed = n2 * kernel_size.h * kernel_size.w * channels * d;
    const std::size_t per_block = s * d * (3 * d)  // qkv projection
                                  + 2 * s * s * d  // attention scores and context
                                  + s * d * d      // output projection
                                  + 2 * s * d * hidden; // MLP
    return embed + config.depth * per_block + config.num_classes * d;
}

std::size_t resize_macs(Extent2 from, Extent2 to) {
    // Separable resample: rows first (to.h × from.w outputs, from.h taps
    // each), then columns (to.h × to.w outputs, from.w taps each).
    return to.h * from.w * from.h + to.h * to.w * from.w;
}

#define MSPE_INSTANTIATE_EVAL(T)                                                                \
    template EvalRow evaluate_cell<T>(const EvalState<T>&, const DatasetAt<T>&, EvalMode,      \
                                      Extent2);                                                \
    template EvalReport sweep<T>(const EvalState<T>&, const DatasetAt<T>&,                     \
                                 const std::vector<EvalMode>&, const std::vector<Extent2>&);   \
    template TokenGrid<T> embed_any<T>(const EmbedState<T>&, const Image<T>&);                 \
    template SimilarityReport cosine_similarity_diag<T>(                                       \
        const ViTParams<T>&, const EmbedState<T>&, const EmbedState<T>&, const DatasetAt<T>&, \
        Extent2, Extent2, std::size_t);

MSPE_INSTANTIATE_EVAL(float)
MSPE_INSTANTIATE_EVAL(double)

#undef MSPE_INSTANTIATE_EVAL

} // namespace mspe
