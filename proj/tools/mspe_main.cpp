// Command-line driver: train, fine-tune, evaluate, and inspect multi-scale
// patch-embedding models. Every subcommand accepts --config <file> with
// plain-text key=value lines (# comments); command-line flags override file
// values, which override built-in defaults. Machine-parsable failures: one
// "error: ..." line on stderr, exit 2 for usage problems, 1 otherwise.
#include "CLI11.hpp"

#include "mspe/errors.hpp"
#include "mspe/eval.hpp"
#include "mspe/io.hpp"
#include "mspe/optim.hpp"
#include "mspe/patch_embed.hpp"
#include "mspe/resize.hpp"
#include "mspe/rng.hpp"
#include "mspe/synthetic.hpp"
#include "mspe/vit.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

using namespace mspe;

namespace {

/// Flag misuse discovered after parsing (missing files, bad combinations).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* flag) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto token = text.substr(start, comma == std::string::npos ? comma : comma - start);
        try {
            std::size_t used = 0;
            const auto v = std::stoull(token, &used);
            if (used != token.size() || v == 0) throw std::invalid_argument(token);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": '" + token +
                             "' is not a positive integer");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw UsageError(std::string(flag) + " must list at least one value");
    return out;
}

struct Range {
    std::size_t a = 0, b = 0, step = 0;
};

Range parse_range(const std::string& text, const char* flag) {
    Range r;
    char extra;
    if (std::sscanf(text.c_str(), "%zu:%zu:%zu%c", &r.a, &r.b, &r.step, &extra) != 3 ||
        r.a == 0 || r.step == 0)
        throw UsageError(std::string(flag) + ": '" + text + "' must look like a:b:step");
    return r;
}

std::vector<EvalMode> parse_mode_list(const std::string& text) {
    std::vector<EvalMode> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto token = text.substr(start, comma == std::string::npos ? comma : comma - start);
        try {
            out.push_back(parse_eval_mode(token));
        } catch (const std::exception&) {
            throw UsageError("--modes: unknown mode '" + token +
                             "' (expected vanilla, flexivit, or mspe)");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto from = s.find_first_not_of(" \t\r");
    if (from == std::string::npos) return "";
    const auto to = s.find_last_not_of(" \t\r");
    return s.substr(from, to - from + 1);
}

/// Config layer: `--config <file>` holds `key=value` lines (# comments).
/// Every key whose `--key` flag is absent from the command line is appended
/// as `--key=value`, so explicit flags override file values, which override
/// the built-in defaults.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    bool have = false;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
            path = args[++i];
            have = true;
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            have = true;
        } else {
            out.push_back(args[i]);
        }
    }
    if (!have) return out;

    std::ifstream in(path);
    if (!in) throw UsageError("missing config file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        const auto comment = body.find(" #");
        if (comment != std::string::npos) body = trim(body.substr(0, comment));
        const auto eq = body.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key == "config")
            throw UsageError(path + ":" + std::to_string(lineno) +
                             ": config files cannot nest");
        const std::string flag = "--" + key;
        bool given = false;
        for (const auto& a : out)
            if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
        if (!given) out.push_back(flag + "=" + value);
    }
    return out;
}

void add_config_flag(CLI::App* cmd) {
    static std::string sink;
    cmd->add_option("--config", sink,
                    "Plain-text key=value config file; flags override file values");
}

TensorMap load_checkpoint_flag(const std::string& path, const char* flag) {
    if (!std::filesystem::exists(path))
        throw UsageError(std::string("missing checkpoint '") + path + "' for " + flag);
    return load_checkpoint(path);
}

/// Writes to stdout when `path` is empty, else atomically to the file.
void emit(const std::string& text, const std::string& path) {
    if (path.empty())
        std::cout << text;
    else
        write_text_atomic(path, text);
}

std::string loss_csv(const LossHistory& history) {
    std::string out = "epoch,step,term,value\n";
    for (const auto& r : history.steps)
        out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + r.term + "," +
               fmt_g(r.value) + "\n";
    return out;
}

double final_epoch_total(const LossHistory& history) {
    if (history.epoch_means.empty()) return 0.0;
    return history.epoch_means.back().at("total");
}

// ---------------------------------------------------------------------------
// Dataset flags shared by the training/eval subcommands.
// ---------------------------------------------------------------------------
struct DataOpts {
    std::string images, labels;
    std::int64_t classes = 4;
    std::int64_t per_class = 64;
    std::uint64_t data_seed = 0;
    CLI::Option* data_seed_opt = nullptr;
    double scale_lo = 0.24, scale_hi = 0.34, jitter = 0.08;
};

void add_data_flags(CLI::App* cmd, DataOpts& d) {
    auto* imgs = cmd->add_option("--images", d.images, "IDX image file (default: synthetic shapes)");
    auto* labs = cmd->add_option("--labels", d.labels, "IDX label file");
    imgs->needs(labs);
    labs->needs(imgs);
    cmd->add_option("--classes", d.classes, "Synthetic shape classes")->default_val(4);
    cmd->add_option("--per-class", d.per_class, "Synthetic samples per class")->default_val(64);
    d.data_seed_opt =
        cmd->add_option("--data-seed", d.data_seed, "Dataset seed (defaults to --seed)");
    cmd->add_option("--scale-lo", d.scale_lo, "Min shape extent fraction")->default_val(0.24);
    cmd->add_option("--scale-hi", d.scale_hi, "Max shape extent fraction")->default_val(0.34);
    cmd->add_option("--jitter", d.jitter, "Max center offset per axis")->default_val(0.08);
}

template <typename T>
DatasetAt<T> make_dataset(const DataOpts& d, std::uint64_t fallback_seed, std::string& id) {
    if (!d.images.empty()) {
        if (!std::filesystem::exists(d.images))
            throw UsageError("missing dataset file '" + d.images + "' for --images");
        if (!std::filesystem::exists(d.labels))
            throw UsageError("missing dataset file '" + d.labels + "' for --labels");
        auto stored = load_idx_dataset<T>(d.images, d.labels);
        id = d.images;
        return idx_dataset<T>(std::move(stored.images), std::move(stored.labels));
    }
    SyntheticShapesSpec spec;
    spec.num_classes = d.classes;
    spec.samples_per_class = d.per_class;
    spec.scale_lo = d.scale_lo;
    spec.scale_hi = d.scale_hi;
    spec.position_jitter = d.jitter;
    spec.seed = (d.data_seed_opt && d.data_seed_opt->count() > 0) ? d.data_seed : fallback_seed;
    id = "synthetic:seed=" + std::to_string(spec.seed);
    return scene_dataset<T>(sample_scenes(spec), spec.num_classes);
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------
struct PretrainOpts {
    std::uint64_t seed = 0;
    std::string out, loss_out, precision = "f32";
    std::size_t grid = 4, dim = 32, heads = 2, depth = 2, mlp_hidden = 0;
    std::size_t base = 32, batch = 16, epochs = 200;
    double lr = 0.03, momentum = 0.9, weight_decay = 5e-4, kernel_std = 0.15;
    DataOpts data;
};

template <typename T>
void run_pretrain_t(const PretrainOpts& o) {
    if (o.grid == 0 || o.base % o.grid != 0)
        throw UsageError("--base must be a positive multiple of --grid");
    std::string dataset_id;
    auto view = make_dataset<T>(o.data, o.seed, dataset_id);
    auto data = view(static_cast<std::int64_t>(o.base), static_cast<std::int64_t>(o.base));

    ModelState<T> model;
    model.config = ViTConfig{o.grid, o.dim, o.heads, o.depth,
                             static_cast<std::size_t>(data.num_classes), o.mlp_hidden};
    model.params = make_vit<T>(model.config);
    Rng init_rng = Rng::stream(o.seed, 0, 0, 0);
    init_vit(model.params, init_rng);
    model.bank = make_bank<T>(o.grid, o.base / o.grid, 1, 1, o.dim);
    Rng kernel_rng = Rng::stream(o.seed, 1, 0, 0);
    for (auto& v : model.bank.kernels[0].data)
        v = static_cast<T>(kernel_rng.normal(0.0, o.kernel_std));

    TrainConfig cfg;
    cfg.learning_rate = o.lr;
    cfg.momentum = o.momentum;
    cfg.weight_decay = o.weight_decay;
    cfg.batch_size = o.batch;
    cfg.epochs = o.epochs;
    cfg.K = 1;
    cfg.base_resolution = o.base;
    cfg.seed = o.seed;
    cfg.precision = sizeof(T) == 4 ? Precision::f32 : Precision::f64;

    const auto history = pretrain(model.params, model.bank, data, cfg);
    save_checkpoint(o.out, checkpoint_from_model(model));
    if (!o.loss_out.empty()) write_text_atomic(o.loss_out, loss_csv(history));
    std::cerr << "pretrain done: dataset=" << dataset_id << " epochs=" << o.epochs
              << " final_total=" << fmt_g(final_epoch_total(history)) << " out=" << o.out
              << "\n";
}

void add_pretrain(CLI::App& app) {
    auto o = std::make_shared<PretrainOpts>();
    auto* cmd = app.add_subcommand("pretrain",
                                   "Train the full encoder at the base resolution");
    add_config_flag(cmd);
    cmd->add_option("--seed", o->seed, "Training/init seed")->required();
    cmd->add_option("--out", o->out, "Output checkpoint path")->required();
    cmd->add_option("--loss-out", o->loss_out, "Per-step loss CSV path");
    cmd->add_option("--precision", o->precision, "Scalar type: f32 or f64")->default_val("f32");
    cmd->add_option("--grid", o->grid, "Tokens per side")->default_val(4);
    cmd->add_option("--dim", o->dim, "Embedding width")->default_val(32);
    cmd->add_option("--heads", o->heads, "Attention heads")->default_val(2);
    cmd->add_option("--depth", o->depth, "Transformer blocks")->default_val(2);
    cmd->add_option("--mlp-hidden", o->mlp_hidden, "MLP width (0 = 4x dim)")->default_val(0);
    cmd->add_option("--base", o->base, "Base training resolution")->default_val(32);
    cmd->add_option("--batch", o->batch, "Batch size")->default_val(16);
    cmd->add_option("--epochs", o->epochs, "Training epochs")->default_val(200);
    cmd->add_option("--lr", o->lr, "Learning rate")->default_val(0.03);
    cmd->add_option("--momentum", o->momentum, "SGD momentum")->default_val(0.9);
    cmd->add_option("--weight-decay", o->weight_decay, "Weight decay")->default_val(5e-4);
    cmd->add_option("--kernel-std", o->kernel_std, "Patch-kernel init stddev")
        ->default_val(0.15);
    add_data_flags(cmd, o->data);
    cmd->callback([o]() {
        if (o->precision == "f32")
            run_pretrain_t<float>(*o);
        else if (o->precision == "f64")
            run_pretrain_t<double>(*o);
        else
            throw UsageError("--precision must be f32 or f64");
    });
}

// ---------------------------------------------------------------------------
// mspe-train
// ---------------------------------------------------------------------------
struct MspeTrainOpts {
    std::uint64_t seed = 0;
    std::string checkpoint, out, loss_out;
    std::string resolutions = "12,16,24,32";
    std::size_t K = 4, base = 32, batch = 16, epochs = 30;
    double lr = 0.02, momentum = 0.9, weight_decay = 5e-4, lambda = 1.0;
    DataOpts data;
};

template <typename T>
void run_mspe_train_t(const MspeTrainOpts& o, const TensorMap& tensors) {
    auto model = model_from_checkpoint<T>(tensors);
    std::string dataset_id;
    auto view = make_dataset<T>(o.data, o.seed, dataset_id);
    auto data = view(static_cast<std::int64_t>(o.base), static_cast<std::int64_t>(o.base));

    const auto original = model.bank.original_index();
    auto bank = bank_from_pretrained(model.bank.kernels[original], model.bank.biases[original],
                                     model.bank.token_grid, o.K);

    TrainConfig cfg;
    cfg.learning_rate = o.lr;
    cfg.momentum = o.momentum;
    cfg.weight_decay = o.weight_decay;
    cfg.batch_size = o.batch;
    cfg.epochs = o.epochs;
    cfg.lambda = o.lambda;
    cfg.K = o.K;
    cfg.resolution_set = parse_size_list(o.resolutions, "--resolutions");
    cfg.base_resolution = o.base;
    cfg.seed = o.seed;
    cfg.precision = sizeof(T) == 4 ? Precision::f32 : Precision::f64;

    const auto history = mspe_train(model.params, bank, data, cfg);
    ModelState<T> out{model.config, std::move(model.params), std::move(bank)};
    save_checkpoint(o.out, checkpoint_from_model(out));
    if (!o.loss_out.empty()) write_text_atomic(o.loss_out, loss_csv(history));
    std::cerr << "mspe-train done: dataset=" << dataset_id << " epochs=" << o.epochs
              << " final_total=" << fmt_g(final_epoch_total(history)) << " out=" << o.out
              << "\n";
}

void add_mspe_train(CLI::App& app) {
    auto o = std::make_shared<MspeTrainOpts>();
    auto* cmd = app.add_subcommand(
        "mspe-train", "Fine-tune a multi-kernel patch bank against a frozen encoder");
    add_config_flag(cmd);
    cmd->add_option("--seed", o->seed, "Fine-tuning seed")->required();
    cmd->add_option("--checkpoint", o->checkpoint, "Pretrained checkpoint")->required();
    cmd->add_option("--out", o->out, "Output checkpoint path")->required();
    cmd->add_option("--loss-out", o->loss_out, "Per-step loss CSV path");
    cmd->add_option("--K", o->K, "Number of bank kernels")->default_val(4);
    cmd->add_option("--resolutions", o->resolutions,
                    "Comma-separated training resolution set")
        ->default_val("12,16,24,32");
    cmd->add_option("--base", o->base, "Base resolution")->default_val(32);
    cmd->add_option("--batch", o->batch, "Batch size")->default_val(16);
    cmd->add_option("--epochs", o->epochs, "Fine-tuning epochs")->default_val(30);
    cmd->add_option("--lr", o->lr, "Learning rate")->default_val(0.02);
    cmd->add_option("--momentum", o->momentum, "SGD momentum")->default_val(0.9);
    cmd->add_option("--weight-decay", o->weight_decay, "Weight decay")->default_val(5e-4);
    cmd->add_option("--lambda", o->lambda, "Weight of the base-resolution loss term")
        ->default_val(1.0);
    add_data_flags(cmd, o->data);
    cmd->callback([o]() {
        auto tensors = load_checkpoint_flag(o->checkpoint, "--checkpoint");
        if (checkpoint_precision(tensors) == StoredDtype::f32)
            run_mspe_train_t<float>(*o, tensors);
        else
            run_mspe_train_t<double>(*o, tensors);
    });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
struct EvalOpts {
    std::uint64_t seed = 0;
    std::string checkpoint, baseline, out;
    std::string modes = "vanilla,flexivit,mspe";
    std::string square, widths;
    std::size_t fixed_height = 0, base = 32;
    bool macs = false;
    DataOpts data;
};

template <typename T>
void run_eval_t(const EvalOpts& o, const TensorMap& tensors) {
    auto model = model_from_checkpoint<T>(tensors);
    ModelState<T> baseline_model;
    const PatchKernelBank<T>* baseline_bank = &model.bank;
    if (!o.baseline.empty()) {
        auto base_tensors = load_checkpoint_flag(o.baseline, "--baseline");
        if (checkpoint_precision(base_tensors) != checkpoint_precision(tensors))
            throw std::invalid_argument("--baseline precision differs from --checkpoint");
        baseline_model = model_from_checkpoint<T>(base_tensors);
        baseline_bank = &baseline_model.bank;
    }

    const auto modes = parse_mode_list(o.modes);
    std::vector<Extent2> resolutions;
    if (!o.square.empty()) {
        const auto r = parse_range(o.square, "--square");
        resolutions = square_resolutions(r.a, r.b, r.step);
    } else if (!o.widths.empty()) {
        const auto r = parse_range(o.widths, "--widths");
        resolutions = aspect_resolutions(o.fixed_height, r.a, r.b, r.step);
    } else {
        throw UsageError("one of --square or --fixed-height/--widths is required");
    }

    std::string dataset_id;
    auto dataset = make_dataset<T>(o.data, o.seed, dataset_id);
    EvalState<T> state{&model.params, baseline_bank, &model.bank, o.base};
    auto report = sweep(state, dataset, modes, resolutions);
    report.checkpoint_id = o.checkpoint;
    report.dataset_id = dataset_id;
    report.seed = o.seed;
    emit(report_csv(report), o.out);

    if (o.macs) {
        const auto& k0 = baseline_bank->kernels[baseline_bank->original_index()];
        const Extent2 base_kernel{k0.shape[0], k0.shape[1]};
        for (const auto& row : report.rows) {
            if (!row.ok) continue;
            const Extent2 res{row.height, row.width};
            std::size_t total = 0;
            if (row.mode == EvalMode::vanilla_resize) {
                total = forward_macs(model.config, base_kernel, model.bank.channels);
                if (res != Extent2{o.base, o.base})
                    total += resize_macs(res, {o.base, o.base});
            } else {
                total = forward_macs(model.config,
                                     adaptive_kernel_size(res, model.config.token_grid),
                                     model.bank.channels);
            }
            std::cerr << "macs mode=" << to_string(row.mode) << " h=" << row.height
                      << " w=" << row.width << " total=" << total << "\n";
        }
    }
    std::cerr << "eval done: rows=" << report.rows.size() << " checkpoint=" << o.checkpoint
              << " dataset=" << dataset_id << " seed=" << o.seed << "\n";
}

void add_eval(CLI::App& app) {
    auto o = std::make_shared<EvalOpts>();
    auto* cmd = app.add_subcommand("eval", "Multi-resolution accuracy sweep");
    add_config_flag(cmd);
    cmd->add_option("--seed", o->seed, "Dataset seed for the sweep")->required();
    cmd->add_option("--checkpoint", o->checkpoint, "Model checkpoint (tuned bank)")
        ->required();
    cmd->add_option("--baseline", o->baseline,
                    "Pretrained checkpoint driving the vanilla/flexivit baselines "
                    "(default: --checkpoint)");
    cmd->add_option("--out", o->out, "CSV output path (default: stdout)");
    cmd->add_option("--modes", o->modes, "Comma-separated: vanilla,flexivit,mspe")
        ->default_val("vanilla,flexivit,mspe");
    auto* sq = cmd->add_option("--square", o->square, "Square resolution sweep a:b:step");
    auto* wd = cmd->add_option("--widths", o->widths, "Width sweep a:b:step");
    auto* fh = cmd->add_option("--fixed-height", o->fixed_height,
                               "Fixed height for a --widths sweep");
    sq->excludes(wd);
    sq->excludes(fh);
    wd->needs(fh);
    cmd->add_option("--base", o->base, "Base resolution")->default_val(32);
    cmd->add_flag("--macs", o->macs, "Print per-cell multiply-accumulate counts to stderr");
    add_data_flags(cmd, o->data);
    cmd->callback([o]() {
        auto tensors = load_checkpoint_flag(o->checkpoint, "--checkpoint");
        if (checkpoint_precision(tensors) == StoredDtype::f32)
            run_eval_t<float>(*o, tensors);
        else
            run_eval_t<double>(*o, tensors);
    });
}

// ---------------------------------------------------------------------------
// diag-sim
// ---------------------------------------------------------------------------
struct DiagOpts {
    std::uint64_t seed = 0;
    std::string checkpoint, baseline, out;
    std::string pathway = "mspe";
    std::size_t r_low = 16, r_high = 32, samples = 256;
    DataOpts data;
};

template <typename T>
void run_diag_t(const DiagOpts& o, const TensorMap& tensors) {
    auto model = model_from_checkpoint<T>(tensors);
    ModelState<T> baseline_model;
    const PatchKernelBank<T>* baseline_bank = &model.bank;
    if (!o.baseline.empty()) {
        auto base_tensors = load_checkpoint_flag(o.baseline, "--baseline");
        if (checkpoint_precision(base_tensors) != checkpoint_precision(tensors))
            throw std::invalid_argument("--baseline precision differs from --checkpoint");
        baseline_model = model_from_checkpoint<T>(base_tensors);
        baseline_bank = &baseline_model.bank;
    }

    EmbedState<T> low;
    if (o.pathway == "mspe")
        low = EmbedState<T>{&model.bank, true};
    else if (o.pathway == "flexivit")
        low = EmbedState<T>{baseline_bank, true};
    else
        throw UsageError("--pathway must be mspe or flexivit");
    const EmbedState<T> high{baseline_bank, false};

    std::string dataset_id;
    auto dataset = make_dataset<T>(o.data, o.seed, dataset_id);
    const auto report = cosine_similarity_diag(model.params, low, high, dataset,
                                               {o.r_low, o.r_low}, {o.r_high, o.r_high},
                                               o.samples);
    emit(similarity_csv(report), o.out);
    std::cerr << "diag-sim done: pathway=" << o.pathway << " dataset=" << dataset_id
              << " mean_patch=" << fmt_g(report.mean_patch_cos)
              << " mean_cls=" << fmt_g(report.mean_cls_cos)
              << " zero_norm_warnings=" << report.zero_norm_warnings << "\n";
}

void add_diag(CLI::App& app) {
    auto o = std::make_shared<DiagOpts>();
    auto* cmd = app.add_subcommand(
        "diag-sim", "Token cosine similarity between low- and base-resolution pathways");
    add_config_flag(cmd);
    cmd->add_option("--seed", o->seed, "Dataset seed")->required();
    cmd->add_option("--checkpoint", o->checkpoint, "Model checkpoint (tuned bank)")
        ->required();
    cmd->add_option("--baseline", o->baseline,
                    "Pretrained checkpoint for the reference pathway (default: --checkpoint)");
    cmd->add_option("--out", o->out, "CSV output path (default: stdout)");
    cmd->add_option("--pathway", o->pathway,
                    "Low-resolution pathway: mspe (tuned bank) or flexivit (resized original)")
        ->default_val("mspe");
    cmd->add_option("--r-low", o->r_low, "Low resolution")->default_val(16);
    cmd->add_option("--r-high", o->r_high, "Reference resolution")->default_val(32);
    cmd->add_option("--samples", o->samples, "Max images to compare")->default_val(256);
    add_data_flags(cmd, o->data);
    cmd->callback([o]() {
        auto tensors = load_checkpoint_flag(o->checkpoint, "--checkpoint");
        if (checkpoint_precision(tensors) == StoredDtype::f32)
            run_diag_t<float>(*o, tensors);
        else
            run_diag_t<double>(*o, tensors);
    });
}

// ---------------------------------------------------------------------------
// inspect-resize
// ---------------------------------------------------------------------------
struct InspectOpts {
    std::size_t src = 0, dst = 0;
    std::string method = "bilinear", out;
};

void add_inspect(CLI::App& app) {
    auto o = std::make_shared<InspectOpts>();
    auto* cmd = app.add_subcommand("inspect-resize",
                                   "Dump a single-axis resize matrix as CSV");
    add_config_flag(cmd);
    cmd->add_option("--src", o->src, "Source axis length")->required();
    cmd->add_option("--dst", o->dst, "Target axis length")->required();
    cmd->add_option("--method", o->method, "bilinear, nearest, or bicubic")
        ->default_val("bilinear");
    cmd->add_option("--out", o->out, "CSV output path (default: stdout)");
    cmd->callback([o]() {
        if (o->src == 0 || o->dst == 0) throw UsageError("--src and --dst must be positive");
        const auto m = resize_axis_matrix<double>(o->src, o->dst,
                                                  parse_resize_method(o->method));
        std::string csv;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < m.cols(); ++c) {
                if (c) csv += ",";
                csv += fmt_g(m(r, c));
            }
            csv += "\n";
        }
        emit(csv, o->out);
    });
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------
struct GenOpts {
    std::uint64_t seed = 0;
    std::size_t resolution = 32;
    std::string out_images, out_labels;
    std::int64_t classes = 4, per_class = 64;
    double scale_lo = 0.24, scale_hi = 0.34, jitter = 0.08;
};

void add_gen(CLI::App& app) {
    auto o = std::make_shared<GenOpts>();
    auto* cmd = app.add_subcommand(
        "gen-data", "Render a synthetic shape dataset to an IDX image/label pair");
    add_config_flag(cmd);
    cmd->add_option("--seed", o->seed, "Scene sampling seed")->default_val(0);
    cmd->add_option("--resolution", o->resolution, "Rendered side length (IDX is uniform)")
        ->default_val(32);
    cmd->add_option("--out-images", o->out_images, "IDX image output path")->required();
    cmd->add_option("--out-labels", o->out_labels, "IDX label output path")->required();
    cmd->add_option("--classes", o->classes, "Shape classes")->default_val(4);
    cmd->add_option("--per-class", o->per_class, "Samples per class")->default_val(64);
    cmd->add_option("--scale-lo", o->scale_lo, "Min shape extent fraction")->default_val(0.24);
    cmd->add_option("--scale-hi", o->scale_hi, "Max shape extent fraction")->default_val(0.34);
    cmd->add_option("--jitter", o->jitter, "Max center offset per axis")->default_val(0.08);
    cmd->callback([o]() {
        if (o->resolution == 0) throw UsageError("--resolution must be positive");
        SyntheticShapesSpec spec;
        spec.num_classes = o->classes;
        spec.samples_per_class = o->per_class;
        spec.min_resolution = static_cast<std::int64_t>(o->resolution);
        spec.max_resolution = static_cast<std::int64_t>(o->resolution);
        spec.scale_lo = o->scale_lo;
        spec.scale_hi = o->scale_hi;
        spec.position_jitter = o->jitter;
        spec.seed = o->seed;
        const auto scenes = sample_scenes(spec);
        const auto data = render_scenes_at<double>(scenes,
                                                   static_cast<std::int64_t>(o->resolution),
                                                   static_cast<std::int64_t>(o->resolution),
                                                   spec.num_classes);
        save_idx_images(o->out_images, data.images);
        save_idx_labels(o->out_labels, data.labels);
        std::cerr << "gen-data done: images=" << o->out_images << " labels=" << o->out_labels
                  << " n=" << data.size() << " resolution=" << o->resolution << "\n";
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale patch embedding: train, fine-tune, evaluate, inspect"};
    app.require_subcommand(1);
    add_pretrain(app);
    add_mspe_train(app);
    add_eval(app);
    add_diag(app);
    add_inspect(app);
    add_gen(app);

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << " (run with --help for usage)\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
