#include "mspe/vit.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mspe {

namespace {

constexpr double kLnEps = 1e-6;

template <typename T>
LinearLayer<T> make_linear(std::size_t out, std::size_t in) {
    return {DenseMatrix<T>(out, in), std::vector<T>(out, T(0))};
}

template <typename T>
LayerNormParams<T> make_layer_norm(std::size_t d, T scale) {
    return {std::vector<T>(d, scale), std::vector<T>(d, T(0))};
}

// y = x · Wᵀ + b, with x: S×in, W: out×in.
template <typename T>
DenseMatrix<T> linear_forward(const DenseMatrix<T>& x, const LinearLayer<T>& lin) {
    const std::size_t S = x.rows(), in = x.cols(), out = lin.weight.rows();
    DenseMatrix<T> y(S, out);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t o = 0; o < out; ++o) {
            T acc = lin.bias[o];
            for (std::size_t i = 0; i < in; ++i) acc += x(s, i) * lin.weight(o, i);
            y(s, o) = acc;
        }
    return y;
}

// Backprop of linear_forward. Returns dx; accumulates dW/db when given.
template <typename T>
DenseMatrix<T> linear_backward(const DenseMatrix<T>& x, const LinearLayer<T>& lin,
                               const DenseMatrix<T>& dy, LinearLayer<T>* grad) {
    const std::size_t S = x.rows(), in = x.cols(), out = lin.weight.rows();
    DenseMatrix<T> dx(S, in);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t i = 0; i < in; ++i) {
            T acc = 0;
            for (std::size_t o = 0; o < out; ++o) acc += dy(s, o) * lin.weight(o, i);
            dx(s, i) = acc;
        }
    if (grad) {
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < in; ++i) {
                T acc = 0;
                for (std::size_t s = 0; s < S; ++s) acc += dy(s, o) * x(s, i);
                grad->weight(o, i) += acc;
            }
        for (std::size_t o = 0; o < out; ++o) {
            T acc = 0;
            for (std::size_t s = 0; s < S; ++s) acc += dy(s, o);
            grad->bias[o] += acc;
        }
    }
    return dx;
}

template <typename T>
LayerNormCache<T> layer_norm_forward(const DenseMatrix<T>& x, const LayerNormParams<T>& ln) {
    const std::size_t S = x.rows(), D = x.cols();
    LayerNormCache<T> c;
    c.mean.resize(S);
    c.invstd.resize(S);
    c.xhat = DenseMatrix<T>(S, D);
    c.out = DenseMatrix<T>(S, D);
    for (std::size_t s = 0; s < S; ++s) {
        double mu = 0;
        for (std::size_t d = 0; d < D; ++d) mu += static_cast<double>(x(s, d));
        mu /= static_cast<double>(D);
        double var = 0;
        for (std::size_t d = 0; d < D; ++d) {
            const double dev = static_cast<double>(x(s, d)) - mu;
            var += dev * dev;
        }
        var /= static_cast<double>(D); // biased variance
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        c.mean[s] = static_cast<T>(mu);
        c.invstd[s] = static_cast<T>(inv);
        for (std::size_t d = 0; d < D; ++d) {
            const T xh = static_cast<T>((static_cast<double>(x(s, d)) - mu) * inv);
            c.xhat(s, d) = xh;
            c.out(s, d) = ln.gamma[d] * xh + ln.beta[d];
        }
    }
    return c;
}

// Backprop through layer norm given the cache. Returns dx; accumulates
// dgamma/dbeta when given.
template <typename T>
DenseMatrix<T> layer_norm_backward(const LayerNormCache<T>& c, const LayerNormParams<T>& ln,
                                   const DenseMatrix<T>& dy, LayerNormParams<T>* grad) {
    const std::size_t S = dy.rows(), D = dy.cols();
    DenseMatrix<T> dx(S, D);
    for (std::size_t s = 0; s < S; ++s) {
        double mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (std::size_t d = 0; d < D; ++d) {
            const double dxh = static_cast<double>(dy(s, d)) * static_cast<double>(ln.gamma[d]);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * static_cast<double>(c.xhat(s, d));
        }
        mean_dxhat /= static_cast<double>(D);
        mean_dxhat_xhat /= static_cast<double>(D);
        for (std::size_t d = 0; d < D; ++d) {
            const double dxh = static_cast<double>(dy(s, d)) * static_cast<double>(ln.gamma[d]);
            dx(s, d) = static_cast<T>(static_cast<double>(c.invstd[s]) *
                                      (dxh - mean_dxhat -
                                       static_cast<double>(c.xhat(s, d)) * mean_dxhat_xhat));
        }
    }
    if (grad) {
        for (std::size_t d = 0; d < D; ++d) {
            T dg = 0, db = 0;
            for (std::size_t s = 0; s < S; ++s) {
                dg += dy(s, d) * c.xhat(s, d);
                db += dy(s, d);
            }
            grad->gamma[d] += dg;
            grad->beta[d] += db;
        }
    }
    return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double phi_cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double phi_pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return phi_cdf + x * phi_pdf;
}

} // namespace

template <typename T>
ViTParams<T> make_vit(const ViTConfig& config) {
    if (config.token_grid == 0 || config.embed_dim == 0 || config.heads == 0 ||
        config.depth == 0 || config.num_classes == 0)
        throw std::invalid_argument("make_vit: all model dimensions must be positive");
    if (config.embed_dim % config.heads != 0)
        throw std::invalid_argument("make_vit: head count must divide the embed dim");
    const std::size_t hidden = config.mlp_hidden ? config.mlp_hidden : 4 * config.embed_dim;
    ViTParams<T> p;
    p.token_grid = config.token_grid;
    p.embed_dim = config.embed_dim;
    p.heads = config.heads;
    p.num_classes = config.num_classes;
    p.mlp_hidden = hidden;
    p.pos_embed = Grid<T>({config.token_grid, config.token_grid, config.embed_dim});
    p.cls_token.assign(config.embed_dim, T(0));
    p.cls_pos.assign(config.embed_dim, T(0));
    for (std::size_t l = 0; l < config.depth; ++l) {
        BlockParams<T> b;
        b.ln1 = make_layer_norm<T>(config.embed_dim, T(1));
        b.ln2 = make_layer_norm<T>(config.embed_dim, T(1));
        b.qkv = make_linear<T>(3 * config.embed_dim, config.embed_dim);
        b.attn_out = make_linear<T>(config.embed_dim, config.embed_dim);
        b.mlp_in = make_linear<T>(hidden, config.embed_dim);
        b.mlp_out = make_linear<T>(config.embed_dim, hidden);
        p.blocks.push_back(std::move(b));
    }
    p.final_ln = make_layer_norm<T>(config.embed_dim, T(1));
    p.head = make_linear<T>(config.num_classes, config.embed_dim);
    return p;
}

template <typename T>
ViTParams<T> zero_like(const ViTParams<T>& like) {
    ViTConfig cfg{like.token_grid, like.embed_dim, like.heads, like.depth(),
                  like.num_classes, like.mlp_hidden};
    ViTParams<T> z = make_vit<T>(cfg);
    // make_vit sets layer-norm scales to one; a gradient starts at zero.
    for (auto& t : vit_tensors(z))
        for (auto& v : *t.values) v = T(0);
    return z;
}

template <typename T>
void init_vit(ViTParams<T>& params, Rng& rng) {
    auto fill = [&rng](std::vector<T>& v, double stddev) {
        for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
    };
    // Weight matrices are fan-in scaled so activations keep unit-order
    // variance from the first step; position/class vectors start wide so
    // attention can discriminate grid positions before the weights learn to.
    auto fill_linear = [&fill](LinearLayer<T>& lin) {
        fill(lin.weight.data(), 1.0 / std::sqrt(static_cast<double>(lin.weight.cols())));
    };
    fill(params.pos_embed.data, 0.5);
    fill(params.cls_token, 0.5);
    fill(params.cls_pos, 0.5);
    for (auto& b : params.blocks) {
        fill_linear(b.qkv);
        fill_linear(b.attn_out);
        fill_linear(b.mlp_in);
        fill_linear(b.mlp_out);
    }
    fill_linear(params.head);
}

template <typename T>
std::vector<NamedTensor<T>> vit_tensors(ViTParams<T>& p) {
    std::vector<NamedTensor<T>> out;
    out.push_back({"pos_embed", &p.pos_embed.data});
    out.push_back({"cls_token", &p.cls_token});
    out.push_back({"cls_pos", &p.cls_pos});
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        auto& b = p.blocks[l];
        const std::string pre = "block" + std::to_string(l) + ".";
        out.push_back({pre + "ln1.gamma", &b.ln1.gamma});
        out.push_back({pre + "ln1.beta", &b.ln1.beta});
        out.push_back({pre + "qkv.weight", &b.qkv.weight.data()});
        out.push_back({pre + "qkv.bias", &b.qkv.bias});
        out.push_back({pre + "attn_out.weight", &b.attn_out.weight.data()});
        out.push_back({pre + "attn_out.bias", &b.attn_out.bias});
        out.push_back({pre + "ln2.gamma", &b.ln2.gamma});
        out.push_back({pre + "ln2.beta", &b.ln2.beta});
        out.push_back({pre + "mlp_in.weight", &b.mlp_in.weight.data()});
        out.push_back({pre + "mlp_in.bias", &b.mlp_in.bias});
        out.push_back({pre + "mlp_out.weight", &b.mlp_out.weight.data()});
        out.push_back({pre + "mlp_out.bias", &b.mlp_out.bias});
    }
    out.push_back({"final_ln.gamma", &p.final_ln.gamma});
    out.push_back({"final_ln.beta", &p.final_ln.beta});
    out.push_back({"head.weight", &p.head.weight.data()});
    out.push_back({"head.bias", &p.head.bias});
    return out;
}

bool decays(const std::string& tensor_name) {
    const auto n = tensor_name.size();
    return n > 7 && tensor_name.compare(n - 7, 7, ".weight") == 0;
}

template <typename T>
std::pair<std::vector<T>, ForwardCache<T>> encoder_forward(const ViTParams<T>& params,
                                                           const TokenGrid<T>& tokens) {
    const std::size_t N = params.token_grid, D = params.embed_dim, H = params.heads;
    if (tokens.tokens.shape != std::array<std::size_t, 3>{N, N, D})
        throw std::invalid_argument("encoder_forward: token grid does not match the model "
                                    "(expected " + std::to_string(N) + "x" + std::to_string(N) +
                                    "x" + std::to_string(D) + ")");
    const std::size_t S = params.sequence_len();
    const std::size_t dh = D / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ForwardCache<T> cache;
    cache.token_grid = N;
    cache.embed_dim = D;
    cache.x0 = DenseMatrix<T>(S, D);
    for (std::size_t d = 0; d < D; ++d)
        cache.x0(0, d) = params.cls_token[d] + params.cls_pos[d];
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t d = 0; d < D; ++d)
                cache.x0(1 + i * N + j, d) = tokens.tokens(i, j, d) + params.pos_embed(i, j, d);

    DenseMatrix<T> x = cache.x0;
    for (const auto& blk : params.blocks) {
        BlockCache<T> bc;
        bc.ln1 = layer_norm_forward(x, blk.ln1);
        DenseMatrix<T> qkv = linear_forward(bc.ln1.out, blk.qkv);
        bc.q = DenseMatrix<T>(S, D);
        bc.k = DenseMatrix<T>(S, D);
        bc.v = DenseMatrix<T>(S, D);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t d = 0; d < D; ++d) {
                bc.q(s, d) = qkv(s, d);
                bc.k(s, d) = qkv(s, D + d);
                bc.v(s, d) = qkv(s, 2 * D + d);
            }
        bc.ctx = DenseMatrix<T>(S, D);
        bc.probs.reserve(H);
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t base = h * dh;
            DenseMatrix<T> probs(S, S);
            for (std::size_t i = 0; i < S; ++i) {
                double row_max = -std::numeric_limits<double>::infinity();
                std::vector<double> scores(S);
                for (std::size_t j = 0; j < S; ++j) {
                    double acc = 0;
                    for (std::size_t d = 0; d < dh; ++d)
                        acc += static_cast<double>(bc.q(i, base + d)) *
                               static_cast<double>(bc.k(j, base + d));
                    scores[j] = acc * scale;
                    row_max = std::max(row_max, scores[j]);
                }
                double denom = 0;
                for (std::size_t j = 0; j < S; ++j) {
                    scores[j] = std::exp(scores[j] - row_max);
                    denom += scores[j];
                }
                for (std::size_t j = 0; j < S; ++j)
                    probs(i, j) = static_cast<T>(scores[j] / denom);
            }
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t d = 0; d < dh; ++d) {
                    T acc = 0;
                    for (std::size_t j = 0; j < S; ++j) acc += probs(i, j) * bc.v(j, base + d);
                    bc.ctx(i, base + d) = acc;
                }
            bc.probs.push_back(std::move(probs));
        }
        DenseMatrix<T> attn = linear_forward(bc.ctx, blk.attn_out);
        bc.x_mid = DenseMatrix<T>(S, D);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t d = 0; d < D; ++d) bc.x_mid(s, d) = x(s, d) + attn(s, d);

        bc.ln2 = layer_norm_forward(bc.x_mid, blk.ln2);
        bc.h1 = linear_forward(bc.ln2.out, blk.mlp_in);
        bc.g = DenseMatrix<T>(S, params.mlp_hidden);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t m = 0; m < params.mlp_hidden; ++m)
                bc.g(s, m) = static_cast<T>(gelu(static_cast<double>(bc.h1(s, m))));
        DenseMatrix<T> h2 = linear_forward(bc.g, blk.mlp_out);
        x = DenseMatrix<T>(S, D);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t d = 0; d < D; ++d) x(s, d) = bc.x_mid(s, d) + h2(s, d);
        cache.blocks.push_back(std::move(bc));
    }

    cache.final_ln = layer_norm_forward(x, params.final_ln);
    std::vector<T> logits(params.num_classes);
    for (std::size_t cidx = 0; cidx < params.num_classes; ++cidx) {
        T acc = params.head.bias[cidx];
        for (std::size_t d = 0; d < D; ++d) acc += params.head.weight(cidx, d) * cache.final_ln.out(0, d);
        logits[cidx] = acc;
    }
    return {std::move(logits), std::move(cache)};
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (T x : v) m = std::max(m, static_cast<double>(x));
    double denom = 0;
    std::vector<double> e(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        e[i] = std::exp(static_cast<double>(v[i]) - m);
        denom += e[i];
    }
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(e[i] / denom);
    return out;
}

template <typename T>
std::pair<T, std::vector<T>> cross_entropy(const std::vector<T>& logits, std::size_t label) {
    if (label >= logits.size())
        throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(logits.size()) +
                                    " classes");
    double m = -std::numeric_limits<double>::infinity();
    for (T x : logits) m = std::max(m, static_cast<double>(x));
    double denom = 0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - m);
        denom += e[i];
    }
    const double loss = std::log(denom) - (static_cast<double>(logits[label]) - m);
    std::vector<T> dlogits(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        dlogits[i] = static_cast<T>(e[i] / denom - (i == label ? 1.0 : 0.0));
    return {static_cast<T>(loss), std::move(dlogits)};
}

template <typename T>
BackwardResult<T> encoder_backward(const ViTParams<T>& params, const ForwardCache<T>& cache,
                                   const std::vector<T>& dlogits, FreezeMode mode) {
    const std::size_t N = params.token_grid, D = params.embed_dim, H = params.heads;
    const std::size_t S = params.sequence_len();
    const std::size_t dh = D / H;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    if (cache.token_grid != N || cache.embed_dim != D || cache.blocks.size() != params.depth())
        throw std::logic_error("encoder_backward: cache does not match the model");
    if (dlogits.size() != params.num_classes)
        throw std::invalid_argument("encoder_backward: dlogits length mismatch");

    BackwardResult<T> result;
    ViTParams<T>* gp = nullptr;
    if (mode == FreezeMode::train_all) {
        result.dparams = zero_like(params);
        gp = &*result.dparams;
    }

    // Head: logits = W · z0 + b with z0 the class row of the final layer norm.
    DenseMatrix<T> d_final(S, D); // gradient w.r.t. final_ln.out
    for (std::size_t d = 0; d < D; ++d) {
        T acc = 0;
        for (std::size_t c = 0; c < params.num_classes; ++c)
            acc += dlogits[c] * params.head.weight(c, d);
        d_final(0, d) = acc;
    }
    if (gp) {
        for (std::size_t c = 0; c < params.num_classes; ++c) {
            for (std::size_t d = 0; d < D; ++d)
                gp->head.weight(c, d) += dlogits[c] * cache.final_ln.out(0, d);
            gp->head.bias[c] += dlogits[c];
        }
    }

    DenseMatrix<T> dx = layer_norm_backward(cache.final_ln, params.final_ln, d_final,
                                            gp ? &gp->final_ln : nullptr);

    for (std::size_t l = params.depth(); l-- > 0;) {
        const auto& blk = params.blocks[l];
        const auto& bc = cache.blocks[l];
        BlockParams<T>* bg = gp ? &gp->blocks[l] : nullptr;

        // x_out = x_mid + mlp_out(gelu(mlp_in(ln2(x_mid))))
        DenseMatrix<T> dg = linear_backward(bc.g, blk.mlp_out, dx, bg ? &bg->mlp_out : nullptr);
        DenseMatrix<T> dh1(S, params.mlp_hidden);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t m = 0; m < params.mlp_hidden; ++m)
                dh1(s, m) = static_cast<T>(static_cast<double>(dg(s, m)) *
                                           gelu_grad(static_cast<double>(bc.h1(s, m))));
        DenseMatrix<T> dln2out =
            linear_backward(bc.ln2.out, blk.mlp_in, dh1, bg ? &bg->mlp_in : nullptr);
        DenseMatrix<T> dx_mid =
            layer_norm_backward(bc.ln2, blk.ln2, dln2out, bg ? &bg->ln2 : nullptr);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t d = 0; d < D; ++d) dx_mid(s, d) += dx(s, d); // residual

        // x_mid = x_in + attn_out(ctx)
        DenseMatrix<T> dctx =
            linear_backward(bc.ctx, blk.attn_out, dx_mid, bg ? &bg->attn_out : nullptr);
        DenseMatrix<T> dqkv(S, 3 * D);
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t base = h * dh;
            const DenseMatrix<T>& probs = bc.probs[h];
            // dprobs = dctx_h · v_hᵀ ; dv_h = probsᵀ · dctx_h
            DenseMatrix<T> dprobs(S, S);
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t j = 0; j < S; ++j) {
                    T acc = 0;
                    for (std::size_t d = 0; d < dh; ++d)
                        acc += dctx(i, base + d) * bc.v(j, base + d);
                    dprobs(i, j) = acc;
                }
            for (std::size_t j = 0; j < S; ++j)
                for (std::size_t d = 0; d < dh; ++d) {
                    T acc = 0;
                    for (std::size_t i = 0; i < S; ++i) acc += probs(i, j) * dctx(i, base + d);
                    dqkv(j, 2 * D + base + d) = acc;
                }
            // Softmax backward per row, then the scaled score products.
            DenseMatrix<T> dscores(S, S);
            for (std::size_t i = 0; i < S; ++i) {
                double dot = 0;
                for (std::size_t j = 0; j < S; ++j)
                    dot += static_cast<double>(dprobs(i, j)) * static_cast<double>(probs(i, j));
                for (std::size_t j = 0; j < S; ++j)
                    dscores(i, j) = static_cast<T>(static_cast<double>(probs(i, j)) *
                                                   (static_cast<double>(dprobs(i, j)) - dot));
            }
            for (std::size_t i = 0; i < S; ++i)
                for (std::size_t d = 0; d < dh; ++d) {
                    T acc = 0;
                    for (std::size_t j = 0; j < S; ++j) acc += dscores(i, j) * bc.k(j, base + d);
                    dqkv(i, base + d) = acc * scale;
                }
            for (std::size_t j = 0; j < S; ++j)
                for (std::size_t d = 0; d < dh; ++d) {
                    T acc = 0;
                    for (std::size_t i = 0; i < S; ++i) acc += dscores(i, j) * bc.q(i, base + d);
                    dqkv(j, D + base + d) = acc * scale;
                }
        }
        DenseMatrix<T> dln1out =
            linear_backward(bc.ln1.out, blk.qkv, dqkv, bg ? &bg->qkv : nullptr);
        DenseMatrix<T> dx_in =
            layer_norm_backward(bc.ln1, blk.ln1, dln1out, bg ? &bg->ln1 : nullptr);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t d = 0; d < D; ++d) dx_in(s, d) += dx_mid(s, d); // residual
        dx = std::move(dx_in);
    }

    result.dtokens = Grid<T>({N, N, D});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t d = 0; d < D; ++d) result.dtokens(i, j, d) = dx(1 + i * N + j, d);
    if (gp) {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                for (std::size_t d = 0; d < D; ++d)
                    gp->pos_embed(i, j, d) += dx(1 + i * N + j, d);
        for (std::size_t d = 0; d < D; ++d) {
            gp->cls_token[d] += dx(0, d);
            gp->cls_pos[d] += dx(0, d);
        }
    }
    return result;
}

#define MSPE_INSTANTIATE_VIT(T)                                                                  \
    template ViTParams<T> make_vit<T>(const ViTConfig&);                                         \
    template ViTParams<T> zero_like<T>(const ViTParams<T>&);                                     \
    template void init_vit<T>(ViTParams<T>&, Rng&);                                              \
    template std::vector<NamedTensor<T>> vit_tensors<T>(ViTParams<T>&);                          \
    template std::pair<std::vector<T>, ForwardCache<T>> encoder_forward<T>(const ViTParams<T>&,  \
                                                                           const TokenGrid<T>&); \
    template std::vector<T> softmax<T>(const std::vector<T>&);                                   \
    template std::pair<T, std::vector<T>> cross_entropy<T>(const std::vector<T>&, std::size_t);  \
    template BackwardResult<T> encoder_backward<T>(const ViTParams<T>&, const ForwardCache<T>&,  \
                                                   const std::vector<T>&, FreezeMode);

MSPE_INSTANTIATE_VIT(float)
MSPE_INSTANTIATE_VIT(double)

#undef MSPE_INSTANTIATE_VIT

} // namespace mspe
