#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mspe/matrix.hpp"
#include "mspe/rng.hpp"
#include "mspe/tensor.hpp"

namespace mspe {

template <typename T>
struct LinearLayer {
    DenseMatrix<T> weight; // out × in
    std::vector<T> bias;   // out
};

template <typename T>
struct LayerNormParams {
    std::vector<T> gamma, beta;
};

template <typename T>
struct BlockParams {
    LayerNormParams<T> ln1, ln2;
    LinearLayer<T> qkv;      // 3D × D, rows ordered [Q | K | V]
    LinearLayer<T> attn_out; // D × D
    LinearLayer<T> mlp_in;   // hidden × D
    LinearLayer<T> mlp_out;  // D × hidden
};

struct ViTConfig {
    std::size_t token_grid = 0;  // N (grid is N×N)
    std::size_t embed_dim = 0;   // D
    std::size_t heads = 0;       // H, must divide D
    std::size_t depth = 0;       // L
    std::size_t num_classes = 0;
    std::size_t mlp_hidden = 0;  // defaults to 4·D when 0
};

/// Encoder + classifier parameters. Pre-norm blocks; the class token carries
/// its own learned position vector and is the only token fed to the head.
template <typename T>
struct ViTParams {
    std::size_t token_grid = 0;
    std::size_t embed_dim = 0;
    std::size_t heads = 0;
    std::size_t num_classes = 0;
    std::size_t mlp_hidden = 0;
    Grid<T> pos_embed;        // N × N × D
    std::vector<T> cls_token; // D
    std::vector<T> cls_pos;   // D
    std::vector<BlockParams<T>> blocks;
    LayerNormParams<T> final_ln;
    LinearLayer<T> head; // num_classes × D

    std::size_t depth() const { return blocks.size(); }
    std::size_t sequence_len() const { return token_grid * token_grid + 1; }
};

/// Zero-valued parameters with layer-norm scales set to one.
template <typename T>
ViTParams<T> make_vit(const ViTConfig& config);

/// Same shapes as `like`, every value zero (gradient accumulator).
template <typename T>
ViTParams<T> zero_like(const ViTParams<T>& like);

/// Random initialization: fan-in-scaled normal weights (stddev 1/sqrt(in)),
/// normal(0, 0.5) position/class vectors, zero biases, unit LN scale.
template <typename T>
void init_vit(ViTParams<T>& params, Rng& rng);

/// Named views over every parameter tensor, in a stable order shared by the
/// optimizer, the gradient checker, and the checkpoint writer.
template <typename T>
struct NamedTensor {
    std::string name;
    std::vector<T>* values;
};

template <typename T>
std::vector<NamedTensor<T>> vit_tensors(ViTParams<T>& params);

/// True when the tensor should receive weight decay (weights yes;
/// biases, layer-norm parameters, and position/class vectors no).
bool decays(const std::string& tensor_name);

template <typename T>
struct LayerNormCache {
    std::vector<T> mean, invstd; // per row
    DenseMatrix<T> xhat;         // normalized pre-affine
    DenseMatrix<T> out;          // after affine
};

template <typename T>
struct BlockCache {
    LayerNormCache<T> ln1, ln2;
    DenseMatrix<T> q, k, v;             // S × D each
    std::vector<DenseMatrix<T>> probs;  // per head, S × S attention rows
    DenseMatrix<T> ctx;                 // S × D concatenated head outputs
    DenseMatrix<T> x_mid;               // after attention residual
    DenseMatrix<T> h1;                  // S × hidden, pre-GELU
    DenseMatrix<T> g;                   // S × hidden, post-GELU
};

template <typename T>
struct ForwardCache {
    std::size_t token_grid = 0;
    std::size_t embed_dim = 0;
    DenseMatrix<T> x0; // embedded sequence with positions, S × D
    std::vector<BlockCache<T>> blocks;
    LayerNormCache<T> final_ln;
};

enum class FreezeMode { train_all, freeze_encoder };

/// Adds position embeddings, prepends the class token, runs the pre-norm
/// blocks and final layer norm, and classifies from the class token.
template <typename T>
std::pair<std::vector<T>, ForwardCache<T>> encoder_forward(const ViTParams<T>& params,
                                                           const TokenGrid<T>& tokens);

/// loss = −log softmax(logits)[label]; also returns d loss / d logits.
template <typename T>
std::pair<T, std::vector<T>> cross_entropy(const std::vector<T>& logits, std::size_t label);

template <typename T>
struct BackwardResult {
    Grid<T> dtokens;                        // N × N × D
    std::optional<ViTParams<T>> dparams;    // absent in freeze_encoder mode
};

/// Exact gradients of the scalar loss whose logit gradient is `dlogits`.
/// Token gradients are always produced; parameter gradients only when
/// mode == train_all.
template <typename T>
BackwardResult<T> encoder_backward(const ViTParams<T>& params, const ForwardCache<T>& cache,
                                   const std::vector<T>& dlogits, FreezeMode mode);

/// Stabilized softmax (max subtracted); sums to 1.
template <typename T>
std::vector<T> softmax(const std::vector<T>& v);

} // namespace mspe
