#pragma once

#include "mspe/dataset.hpp"
#include "mspe/patch_embed.hpp"
#include "mspe/vit.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mspe {

enum class EvalMode { vanilla_resize, flexivit, mspe };

EvalMode parse_eval_mode(const std::string& name);
std::string to_string(EvalMode mode);

/// One sweep cell. Failed cells carry ok = false and the error text; their
/// numeric fields are meaningless and the CSV writer emits an error marker.
struct EvalRow {
    EvalMode mode = EvalMode::vanilla_resize;
    std::size_t height = 0;
    std::size_t width = 0;
    double top1 = 0.0;
    double mean_loss = 0.0;
    std::size_t samples = 0;
    bool ok = true;
    std::string error;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string checkpoint_id;
    std::string dataset_id;
    std::uint64_t seed = 0;
};

/// Everything a sweep needs: the frozen encoder, the pretrained single-kernel
/// bank driving the vanilla and flexivit baselines, and (optionally) the
/// fine-tuned bank driving mspe mode. `tuned` may equal `baseline`.
template <typename T>
struct EvalState {
    const ViTParams<T>* params = nullptr;
    const PatchKernelBank<T>* baseline = nullptr;
    const PatchKernelBank<T>* tuned = nullptr;
    std::size_t base_resolution = 0;
};

/// Accuracy/loss of one mode at one resolution.
///  - vanilla_resize: bilinearly resizes every native image to the base
///    resolution and embeds with the baseline's original kernel.
///  - flexivit: keeps the native resolution and adaptively resizes the
///    baseline's original kernel.
///  - mspe: nearest-anchor kernel selection from the tuned bank.
template <typename T>
EvalRow evaluate_cell(const EvalState<T>& state, const DatasetAt<T>& dataset, EvalMode mode,
                      Extent2 resolution);

/// Cross product of modes × resolutions in declaration order. Per-cell
/// failures are recorded in the row, not thrown.
template <typename T>
EvalReport sweep(const EvalState<T>& state, const DatasetAt<T>& dataset,
                 const std::vector<EvalMode>& modes, const std::vector<Extent2>& resolutions);

/// Square sweep list {a, a+step, ...} ≤ b, and a fixed-height aspect sweep.
std::vector<Extent2> square_resolutions(std::size_t a, std::size_t b, std::size_t step);
std::vector<Extent2> aspect_resolutions(std::size_t fixed_height, std::size_t a, std::size_t b,
                                        std::size_t step);

/// CSV with header "mode,height,width,top1,loss,n"; failed cells write ERR
/// in the numeric columns.
std::string report_csv(const EvalReport& report);

/// One embedding pathway for the similarity diagnostic: a bank plus the rule
/// for picking its kernel (nearest-anchor like mspe mode, or always the
/// original kernel like the baselines).
template <typename T>
struct EmbedState {
    const PatchKernelBank<T>* bank = nullptr;
    bool adaptive_select = false;
};

template <typename T>
TokenGrid<T> embed_any(const EmbedState<T>& state, const Image<T>& image);

/// Per-image cosine similarities between two embedding pathways evaluated at
/// two resolutions: patch similarity averages position-wise token cosines
/// over the shared N×N grid; class similarity compares the final-layernorm
/// class features. Zero-norm vectors score 0 and bump `zero_norm_warnings`.
struct SimilarityRow {
    std::size_t image_id = 0;
    double patch_cos = 0.0;
    double cls_cos = 0.0;
};

struct SimilarityReport {
    std::vector<SimilarityRow> rows;
    double mean_patch_cos = 0.0;
    double mean_cls_cos = 0.0;
    std::size_t zero_norm_warnings = 0;
};

/// Images come from the dataset view rendered at r_low (for state_a) and at
/// r_high (for state_b), paired by index; at most `max_images` are used.
template <typename T>
SimilarityReport cosine_similarity_diag(const ViTParams<T>& params, const EmbedState<T>& state_a,
                                        const EmbedState<T>& state_b, const DatasetAt<T>& dataset,
                                        Extent2 r_low, Extent2 r_high,
                                        std::size_t max_images = 256);

/// CSV with header "image_id,patch_cos,cls_cos".
std::string similarity_csv(const SimilarityReport& report);

/// Multiply-accumulate count of one forward pass: embedding convolution at
/// the given kernel size plus the transformer encoder and classifier head.
/// `resize_macs` adds the image-resize work of the vanilla pathway.
std::size_t forward_macs(const ViTConfig& config, Extent2 kernel_size, std::size_t channels);
std::size_t resize_macs(Extent2 from, Extent2 to);

} // namespace mspe
