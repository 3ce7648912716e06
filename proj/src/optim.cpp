#include "mspe/optim.hpp"

#include "mspe/errors.hpp"
#include "mspe/resize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mspe {

namespace {

// Disjoint stream salts so shuffling and resolution sampling can never
// consume each other's draws, whatever the loop shapes are.
constexpr std::uint64_t kPretrainShuffleSalt = 1000;
constexpr std::uint64_t kFineTuneShuffleSalt = 2000;
constexpr std::uint64_t kResolutionSalt = 3000;

template <typename T>
void check_base_resolution(const LabeledImages<T>& dataset, std::size_t base,
                           std::size_t channels, const char* who) {
    if (dataset.size() == 0) throw std::invalid_argument(std::string(who) + ": empty dataset");
    if (dataset.labels.size() != dataset.images.size())
        throw std::invalid_argument(std::string(who) + ": image/label count mismatch");
    for (const auto& img : dataset.images)
        if (img.shape[0] != base || img.shape[1] != base || img.shape[2] != channels)
            throw std::invalid_argument(std::string(who) +
                                        ": dataset images must be at the base resolution");
}

template <typename T>
void add_param_grads(ViTParams<T>& acc, ViTParams<T>& g) {
    auto a = vit_tensors(acc);
    auto b = vit_tensors(g);
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto& av = *a[i].values;
        const auto& bv = *b[i].values;
        for (std::size_t j = 0; j < av.size(); ++j) av[j] += bv[j];
    }
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t s = 0; s < n; s += batch_size) {
        const std::size_t e = std::min(n, s + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                             order.begin() + static_cast<std::ptrdiff_t>(e));
    }
    return batches;
}

void record_epoch_means(LossHistory& history, std::size_t epoch) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const LossRecord& r : history.steps)
        if (r.epoch == epoch) {
            auto& s = sums[r.term];
            s.first += r.value;
            s.second += 1;
        }
    std::map<std::string, double> means;
    for (const auto& [term, s] : sums) means[term] = s.first / static_cast<double>(s.second);
    history.epoch_means.push_back(std::move(means));
}

} // namespace

double LossHistory::epoch_mean(std::size_t epoch, const std::string& term) const {
    if (epoch >= epoch_means.size())
        throw std::out_of_range("epoch " + std::to_string(epoch) + " not in history");
    return epoch_means[epoch].at(term);
}

template <typename T>
void sgd_update(const NamedTensor<T>& tensor, const std::vector<T>& grad, const TrainConfig& cfg,
                SgdState<T>& state) {
    std::vector<T>& w = *tensor.values;
    if (grad.size() != w.size())
        throw std::invalid_argument("sgd_update: gradient size mismatch for " + tensor.name);
    std::vector<T>& v = state.velocity[tensor.name];
    if (v.empty()) v.assign(w.size(), T(0));
    if (v.size() != w.size())
        throw std::invalid_argument("sgd_update: stale momentum buffer for " + tensor.name);
    const T lr = static_cast<T>(cfg.learning_rate);
    const T mom = static_cast<T>(cfg.momentum);
    const T wd = decays(tensor.name) ? static_cast<T>(cfg.weight_decay) : T(0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const T g = grad[i] + wd * w[i];
        v[i] = mom * v[i] + g;
        w[i] -= lr * v[i];
    }
}

template <typename T>
std::vector<NamedTensor<T>> bank_tensors(PatchKernelBank<T>& bank) {
    std::vector<NamedTensor<T>> out;
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
        const std::string prefix = "bank.kernel" + std::to_string(k);
        out.push_back({prefix + ".weight", &bank.kernels[k].data});
        out.push_back({prefix + ".bias", &bank.biases[k]});
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_subsets(std::vector<std::size_t> resolution_set,
                                                   std::size_t K) {
    if (K == 0) throw std::invalid_argument("make_subsets: K must be >= 1");
    if (resolution_set.empty()) throw std::invalid_argument("make_subsets: empty resolution set");
    if (resolution_set.size() % K != 0)
        throw std::invalid_argument("make_subsets: " + std::to_string(resolution_set.size()) +
                                    " resolutions cannot split into " + std::to_string(K) +
                                    " equal subsets");
    std::sort(resolution_set.begin(), resolution_set.end());
    if (std::adjacent_find(resolution_set.begin(), resolution_set.end()) != resolution_set.end())
        throw std::invalid_argument("make_subsets: resolutions must be distinct");
    const std::size_t per = resolution_set.size() / K;
    std::vector<std::vector<std::size_t>> subsets(K);
    for (std::size_t k = 0; k < K; ++k)
        subsets[k].assign(resolution_set.begin() + static_cast<std::ptrdiff_t>(k * per),
                          resolution_set.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
    return subsets;
}

std::vector<std::size_t> sample_resolutions(const std::vector<std::vector<std::size_t>>& subsets,
                                            Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(subsets.size());
    for (const auto& s : subsets) {
        if (s.empty()) throw std::invalid_argument("sample_resolutions: empty subset");
        out.push_back(s[rng.below(s.size())]);
    }
    return out;
}

template <typename T>
BankGrad<T> zero_bank_grad(const PatchKernelBank<T>& bank) {
    BankGrad<T> g;
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
        g.kernels.emplace_back(bank.kernels[k].shape);
        g.biases.emplace_back(bank.biases[k].size(), T(0));
    }
    return g;
}

namespace {

/// Batch-mean cross-entropy of one embedding branch, with the token
/// gradients routed into the bank accumulator. `scale` weights the gradient
/// contribution (1 for sampled branches, lambda for the base-resolution
/// term); a zero scale skips the backward pass entirely.
template <typename T>
double branch_loss(const ViTParams<T>& params, const PatchKernelBank<T>& bank,
                   std::size_t kernel_index, const std::vector<Image<T>>& images,
                   const std::vector<std::int64_t>& labels, double scale, BankGrad<T>& grad) {
    const T inv_b = T(1) / static_cast<T>(images.size());
    double mean_ce = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const TokenGrid<T> tokens = embed_with_kernel(bank, kernel_index, images[i]);
        auto [logits, cache] = encoder_forward(params, tokens);
        auto [ce, dlogits] = cross_entropy(logits, static_cast<std::size_t>(labels[i]));
        mean_ce += static_cast<double>(ce) / static_cast<double>(images.size());
        if (scale == 0.0) continue;
        const T s = static_cast<T>(scale) * inv_b;
        for (T& d : dlogits) d *= s;
        BackwardResult<T> back =
            encoder_backward(params, cache, dlogits, FreezeMode::freeze_encoder);
        embed_with_kernel_backward(bank, kernel_index, images[i], back.dtokens,
                                   grad.kernels[kernel_index], grad.biases[kernel_index]);
    }
    return mean_ce;
}

} // namespace

template <typename T>
MspeTerms mspe_loss_and_grad(const ViTParams<T>& params, const PatchKernelBank<T>& bank,
                             const std::vector<Image<T>>& batch,
                             const std::vector<std::int64_t>& labels,
                             const std::vector<std::size_t>& resolutions, double lambda,
                             BankGrad<T>& grad) {
    if (batch.empty()) throw std::invalid_argument("mspe_loss_and_grad: empty batch");
    if (labels.size() != batch.size())
        throw std::invalid_argument("mspe_loss_and_grad: image/label count mismatch");
    if (resolutions.size() != bank.kernel_count())
        throw std::invalid_argument("mspe_loss_and_grad: one resolution per bank kernel required");
    if (lambda < 0.0) throw std::invalid_argument("mspe_loss_and_grad: lambda must be >= 0");
    const auto shape = batch.front().shape;
    for (const auto& img : batch)
        if (img.shape != shape)
            throw std::invalid_argument("mspe_loss_and_grad: batch images must share one shape");

    MspeTerms terms;
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
        const std::size_t r = resolutions[k];
        std::vector<Image<T>> resized;
        const std::vector<Image<T>>* branch_images = &batch;
        if (r != shape[0] || r != shape[1]) {
            auto op = build_resize_operator<T>({shape[0], shape[1]}, {r, r},
                                               ResizeMethod::bilinear);
            resized.reserve(batch.size());
            for (const auto& img : batch) resized.push_back(apply_resize(op, img));
            branch_images = &resized;
        }
        terms.branches.push_back(
            branch_loss(params, bank, k, *branch_images, labels, 1.0, grad));
    }
    terms.original =
        branch_loss(params, bank, bank.original_index(), batch, labels, lambda, grad);
    terms.total = std::accumulate(terms.branches.begin(), terms.branches.end(), 0.0) +
                  lambda * terms.original;
    return terms;
}

template <typename T>
MspeTerms mspe_step(const ViTParams<T>& params, PatchKernelBank<T>& bank,
                    const std::vector<Image<T>>& batch, const std::vector<std::int64_t>& labels,
                    const TrainConfig& cfg, Rng& rng, SgdState<T>& opt,
                    std::size_t epoch_index) {
    if (bank.kernel_count() != cfg.K)
        throw std::invalid_argument("mspe_step: bank kernel count does not match config K");
    const auto subsets = make_subsets(cfg.resolution_set, cfg.K);
    const auto resolutions = sample_resolutions(subsets, rng);

    BankGrad<T> grad = zero_bank_grad(bank);
    MspeTerms terms =
        mspe_loss_and_grad(params, bank, batch, labels, resolutions, cfg.lambda, grad);
    if (!std::isfinite(terms.total))
        throw TrainingFailure("fine-tuning produced a non-finite loss", epoch_index);

    auto tensors = bank_tensors(bank);
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
        sgd_update(tensors[2 * k], grad.kernels[k].data, cfg, opt);
        sgd_update(tensors[2 * k + 1], grad.biases[k], cfg, opt);
    }
    return terms;
}

template <typename T>
LossHistory pretrain(ViTParams<T>& params, PatchKernelBank<T>& bank,
                     const LabeledImages<T>& dataset, const TrainConfig& cfg) {
    if (bank.kernel_count() != 1)
        throw std::invalid_argument("pretrain: expects a single-kernel bank");
    check_base_resolution(dataset, cfg.base_resolution, bank.channels, "pretrain");

    LossHistory history;
    SgdState<T> opt;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, kPretrainShuffleSalt + epoch, 0, 0);
        const auto batches = batch_indices(dataset.size(), cfg.batch_size, shuffle_rng);
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const auto& idx = batches[step];
            const T inv_b = T(1) / static_cast<T>(idx.size());
            ViTParams<T> gacc = zero_like(params);
            BankGrad<T> bgrad = zero_bank_grad(bank);
            double mean_ce = 0.0;
            for (std::size_t i : idx) {
                const TokenGrid<T> tokens = embed_with_kernel(bank, 0, dataset.images[i]);
                auto [logits, cache] = encoder_forward(params, tokens);
                auto [ce, dlogits] =
                    cross_entropy(logits, static_cast<std::size_t>(dataset.labels[i]));
                mean_ce += static_cast<double>(ce) / static_cast<double>(idx.size());
                for (T& d : dlogits) d *= inv_b;
                BackwardResult<T> back =
                    encoder_backward(params, cache, dlogits, FreezeMode::train_all);
                add_param_grads(gacc, *back.dparams);
                embed_with_kernel_backward(bank, 0, dataset.images[i], back.dtokens,
                                           bgrad.kernels[0], bgrad.biases[0]);
            }
            if (!std::isfinite(mean_ce))
                throw TrainingFailure("pretraining produced a non-finite loss", epoch);

            auto ptensors = vit_tensors(params);
            auto gtensors = vit_tensors(gacc);
            for (std::size_t t = 0; t < ptensors.size(); ++t)
                sgd_update(ptensors[t], *gtensors[t].values, cfg, opt);
            auto btensors = bank_tensors(bank);
            sgd_update(btensors[0], bgrad.kernels[0].data, cfg, opt);
            sgd_update(btensors[1], bgrad.biases[0], cfg, opt);

            history.steps.push_back({epoch, step, "total", mean_ce});
        }
        record_epoch_means(history, epoch);
    }
    return history;
}

template <typename T>
LossHistory mspe_train(const ViTParams<T>& params, PatchKernelBank<T>& bank,
                       const LabeledImages<T>& dataset, const TrainConfig& cfg) {
    check_base_resolution(dataset, cfg.base_resolution, bank.channels, "mspe_train");

    LossHistory history;
    SgdState<T> opt;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, kFineTuneShuffleSalt + epoch, 0, 0);
        const auto batches = batch_indices(dataset.size(), cfg.batch_size, shuffle_rng);
        for (std::size_t step = 0; step < batches.size(); ++step) {
            std::vector<Image<T>> images;
            std::vector<std::int64_t> labels;
            images.reserve(batches[step].size());
            labels.reserve(batches[step].size());
            for (std::size_t i : batches[step]) {
                images.push_back(dataset.images[i]);
                labels.push_back(dataset.labels[i]);
            }
            Rng step_rng = Rng::stream(cfg.seed, kResolutionSalt + epoch, step + 1, 0);
            MspeTerms terms = mspe_step(params, bank, images, labels, cfg, step_rng, opt, epoch);
            for (std::size_t k = 0; k < terms.branches.size(); ++k)
                history.steps.push_back(
                    {epoch, step, "branch" + std::to_string(k), terms.branches[k]});
            history.steps.push_back({epoch, step, "original", terms.original});
            history.steps.push_back({epoch, step, "total", terms.total});
        }
        record_epoch_means(history, epoch);
    }
    return history;
}

#define MSPE_INSTANTIATE_OPTIM(T)                                                               \
    template void sgd_update<T>(const NamedTensor<T>&, const std::vector<T>&,                   \
                                const TrainConfig&, SgdState<T>&);                              \
    template std::vector<NamedTensor<T>> bank_tensors<T>(PatchKernelBank<T>&);                  \
    template BankGrad<T> zero_bank_grad<T>(const PatchKernelBank<T>&);                          \
    template MspeTerms mspe_loss_and_grad<T>(const ViTParams<T>&, const PatchKernelBank<T>&,    \
                                             const std::vector<Image<T>>&,                     \
                                             const std::vector<std::int64_t>&,                  \
                                             const std::vector<std::size_t>&, double,           \
                                             BankGrad<T>&);                                     \
    template MspeTerms mspe_step<T>(const ViTParams<T>&, PatchKernelBank<T>&,                   \
                                    const std::vector<Image<T>>&,                              \
                                    const std::vector<std::int64_t>&, const TrainConfig&, Rng&, \
                                    SgdState<T>&, std::size_t);                                 \
    template LossHistory pretrain<T>(ViTParams<T>&, PatchKernelBank<T>&,                        \
                                     const LabeledImages<T>&, const TrainConfig&);              \
    template LossHistory mspe_train<T>(const ViTParams<T>&, PatchKernelBank<T>&,                \
                                       const LabeledImages<T>&, const TrainConfig&);

MSPE_INSTANTIATE_OPTIM(float)
MSPE_INSTANTIATE_OPTIM(double)

#undef MSPE_INSTANTIATE_OPTIM

} // namespace mspe
