#pragma once

#include "mspe/dataset.hpp"
#include "mspe/patch_embed.hpp"
#include "mspe/rng.hpp"
#include "mspe/vit.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mspe {

enum class Precision { f32, f64 };

/// Hyperparameters shared by pretraining and bank fine-tuning.
struct TrainConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    std::size_t batch_size = 64;
    std::size_t epochs = 5;
    double lambda = 1.0;  ///< weight of the base-resolution loss term
    std::size_t K = 4;    ///< number of bank kernels / resolution subsets
    std::vector<std::size_t> resolution_set; ///< distinct side lengths, any order
    std::size_t base_resolution = 32;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
};

/// One recorded loss value. `term` is "total" for pretraining; fine-tuning
/// additionally records "branch0".."branchK-1" and "original".
struct LossRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::string term;
    double value = 0.0;
};

struct LossHistory {
    std::vector<LossRecord> steps;                        ///< every step, every term
    std::vector<std::map<std::string, double>> epoch_means; ///< index = epoch

    [[nodiscard]] double epoch_mean(std::size_t epoch, const std::string& term) const;
};

/// Momentum buffers keyed by tensor name; missing entries mean zero.
template <typename T>
struct SgdState {
    std::map<std::string, std::vector<T>> velocity;
};

/// One SGD step on a single tensor: weight decay (for decaying tensors) is
/// folded into the gradient before the momentum update.
template <typename T>
void sgd_update(const NamedTensor<T>& tensor, const std::vector<T>& grad,
                const TrainConfig& cfg, SgdState<T>& state);

/// Named views over the bank's trainable tensors ("bank.kernel0.weight",
/// "bank.kernel0.bias", ...) in a stable order.
template <typename T>
std::vector<NamedTensor<T>> bank_tensors(PatchKernelBank<T>& bank);

/// Sorts the resolution set and splits it into K contiguous blocks of equal
/// cardinality. Requires K >= 1, distinct resolutions, and K | M.
std::vector<std::vector<std::size_t>> make_subsets(std::vector<std::size_t> resolution_set,
                                                   std::size_t K);

/// One uniform draw per subset, consumed from `rng` in subset order.
std::vector<std::size_t> sample_resolutions(const std::vector<std::vector<std::size_t>>& subsets,
                                            Rng& rng);

/// Per-kernel gradient accumulators matching a bank's shapes.
template <typename T>
struct BankGrad {
    std::vector<Kernel<T>> kernels;
    std::vector<std::vector<T>> biases;
};

template <typename T>
BankGrad<T> zero_bank_grad(const PatchKernelBank<T>& bank);

/// Per-term losses of one fine-tuning step. branches[k] and original are raw
/// batch-mean cross-entropies; total = sum(branches) + lambda * original.
struct MspeTerms {
    std::vector<double> branches;
    double original = 0.0;
    double total = 0.0;
};

/// Loss and bank gradient of the multi-resolution objective with the branch
/// resolutions pinned: each branch k resizes the batch to resolutions[k]
/// (bilinear) and embeds with kernel k; the lambda term runs the unresized
/// batch through the original (largest) kernel. The encoder is frozen:
/// gradients flow through it but only bank tensors receive any.
template <typename T>
MspeTerms mspe_loss_and_grad(const ViTParams<T>& params, const PatchKernelBank<T>& bank,
                             const std::vector<Image<T>>& batch,
                             const std::vector<std::int64_t>& labels,
                             const std::vector<std::size_t>& resolutions, double lambda,
                             BankGrad<T>& grad);

/// Samples one resolution per subset from `rng`, computes the objective, and
/// applies one SGD step to the bank only. Throws TrainingFailure (tagged with
/// `epoch_index`) if the loss is non-finite.
template <typename T>
MspeTerms mspe_step(const ViTParams<T>& params, PatchKernelBank<T>& bank,
                    const std::vector<Image<T>>& batch, const std::vector<std::int64_t>& labels,
                    const TrainConfig& cfg, Rng& rng, SgdState<T>& opt,
                    std::size_t epoch_index = 0);

/// Full-model SGD training at the base resolution with the bank's single
/// kernel. The dataset must hold base-resolution images.
template <typename T>
LossHistory pretrain(ViTParams<T>& params, PatchKernelBank<T>& bank,
                     const LabeledImages<T>& dataset, const TrainConfig& cfg);

/// Fine-tunes the kernel bank over shuffled batches for cfg.epochs epochs.
/// The encoder parameters are read-only throughout.
template <typename T>
LossHistory mspe_train(const ViTParams<T>& params, PatchKernelBank<T>& bank,
                       const LabeledImages<T>& dataset, const TrainConfig& cfg);

} // namespace mspe
