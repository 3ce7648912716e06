#include "mspe/io.hpp"

#include "mspe/errors.hpp"
#include "mspe/optim.hpp"
#include "mspe/resize.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mspe {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'P', 'E'};
constexpr std::size_t kMaxRank = 8;

void append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

/// Bounds-checked little-endian reads; `pos` advances past the value.
struct Reader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) throw FormatError(std::string("truncated ") + what, pos);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

std::size_t dtype_size(StoredDtype dtype) {
    switch (dtype) {
    case StoredDtype::f32: return 4;
    case StoredDtype::f64: return 8;
    }
    throw std::invalid_argument("unknown stored dtype");
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("failed reading '" + path + "'");
    return bytes;
}

void append_scalar_le(std::vector<unsigned char>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_u32(out, bits);
}

void append_scalar_le(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    append_u64(out, bits);
}

float decode_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double decode_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

template <typename T>
constexpr StoredDtype dtype_of() {
    return sizeof(T) == 4 ? StoredDtype::f32 : StoredDtype::f64;
}

std::vector<double> meta_values(const TensorMap& tensors, const std::string& name,
                                std::size_t expected) {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::invalid_argument("checkpoint is missing tensor '" + name + "'");
    auto v = stored_to<double>(it->second);
    if (v.size() != expected)
        throw std::invalid_argument("tensor '" + name + "' has " + std::to_string(v.size()) +
                                    " values, expected " + std::to_string(expected));
    return v;
}

} // namespace

std::size_t StoredTensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

template <typename T>
StoredTensor stored_from(const std::vector<T>& values, std::vector<std::uint64_t> dims) {
    StoredTensor t;
    t.dtype = dtype_of<T>();
    t.dims = dims.empty() ? std::vector<std::uint64_t>{values.size()} : std::move(dims);
    if (t.element_count() != values.size())
        throw std::invalid_argument("dims describe " + std::to_string(t.element_count()) +
                                    " elements but " + std::to_string(values.size()) +
                                    " values were given");
    t.raw.reserve(values.size() * sizeof(T));
    for (T v : values) append_scalar_le(t.raw, v);
    return t;
}

template <typename T>
std::vector<T> stored_to(const StoredTensor& tensor) {
    if (tensor.dtype != dtype_of<T>())
        throw std::invalid_argument("stored dtype does not match the requested scalar type");
    const std::size_t n = tensor.element_count();
    if (tensor.raw.size() != n * sizeof(T))
        throw std::invalid_argument("stored payload size disagrees with dims");
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if constexpr (sizeof(T) == 4)
            out[i] = static_cast<T>(decode_f32(tensor.raw.data() + 4 * i));
        else
            out[i] = static_cast<T>(decode_f64(tensor.raw.data() + 8 * i));
    }
    return out;
}

void save_checkpoint(const std::string& path, const TensorMap& tensors) {
    // Directory size must be known before offsets can be assigned.
    std::size_t directory_bytes = 0;
    for (const auto& [name, t] : tensors) {
        if (t.raw.size() != t.element_count() * dtype_size(t.dtype))
            throw std::invalid_argument("tensor '" + name + "' payload disagrees with dims");
        directory_bytes += 4 + name.size() + 1 + 4 + 8 * t.dims.size() + 8;
    }

    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u32(out, kCheckpointVersion);
    append_u64(out, tensors.size());

    std::uint64_t offset = 16 + directory_bytes;
    for (const auto& [name, t] : tensors) {
        append_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<unsigned char>(t.dtype));
        append_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) append_u64(out, d);
        append_u64(out, offset);
        offset += t.raw.size();
    }
    for (const auto& [name, t] : tensors) out.insert(out.end(), t.raw.begin(), t.raw.end());

    write_file_atomic(path, out.data(), out.size());
}

TensorMap load_checkpoint(const std::string& path) {
    const auto bytes = read_file(path);
    Reader r{bytes};

    for (int i = 0; i < 4; ++i) {
        if (r.pos >= bytes.size()) throw FormatError("truncated magic", r.pos);
        if (static_cast<char>(bytes[r.pos]) != kMagic[i])
            throw FormatError("bad checkpoint magic", r.pos);
        ++r.pos;
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion),
                          4);
    const std::uint64_t count = r.u64("tensor count");

    struct Entry {
        std::string name;
        StoredTensor tensor;
        std::uint64_t offset;
        std::size_t declared_at;
    };
    std::vector<Entry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t entry_pos = r.pos;
        const std::uint32_t name_len = r.u32("name length");
        Entry e;
        e.name = r.text(name_len, "tensor name");
        const std::uint8_t tag = r.u8("dtype tag");
        if (tag != static_cast<std::uint8_t>(StoredDtype::f32) &&
            tag != static_cast<std::uint8_t>(StoredDtype::f64))
            throw FormatError("unknown dtype tag " + std::to_string(tag), r.pos - 1);
        e.tensor.dtype = static_cast<StoredDtype>(tag);
        const std::uint32_t rank = r.u32("rank");
        if (rank > kMaxRank) throw FormatError("implausible tensor rank", r.pos - 4);
        for (std::uint32_t d = 0; d < rank; ++d) e.tensor.dims.push_back(r.u64("dims"));
        e.offset = r.u64("payload offset");
        e.declared_at = entry_pos;

        const std::size_t len = e.tensor.element_count() * dtype_size(e.tensor.dtype);
        if (e.offset > bytes.size() || len > bytes.size() - e.offset)
            throw FormatError("payload for '" + e.name + "' runs past end of file", e.offset);
        entries.push_back(std::move(e));
    }

    // Reject overlapping payload ranges (and payloads inside the directory).
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges; // offset, length
    const std::uint64_t payload_start = r.pos;
    for (const auto& e : entries) {
        const std::uint64_t len = e.tensor.element_count() * dtype_size(e.tensor.dtype);
        if (e.offset < payload_start)
            throw FormatError("payload for '" + e.name + "' overlaps the directory", e.offset);
        for (auto [o, l] : ranges)
            if (e.offset < o + l && o < e.offset + len)
                throw FormatError("payload for '" + e.name + "' overlaps another tensor",
                                  e.offset);
        ranges.emplace_back(e.offset, len);
    }

    TensorMap out;
    for (auto& e : entries) {
        const std::size_t len = e.tensor.element_count() * dtype_size(e.tensor.dtype);
        e.tensor.raw.assign(bytes.begin() + static_cast<std::ptrdiff_t>(e.offset),
                            bytes.begin() + static_cast<std::ptrdiff_t>(e.offset + len));
        if (!out.emplace(e.name, std::move(e.tensor)).second)
            throw FormatError("duplicate tensor name '" + e.name + "'", e.declared_at);
    }
    return out;
}

template <typename T>
TensorMap checkpoint_from_model(const ModelState<T>& model) {
    TensorMap out;
    const ViTConfig& c = model.config;
    out["meta.vit"] = stored_from<double>(
        {static_cast<double>(c.token_grid), static_cast<double>(c.embed_dim),
         static_cast<double>(c.heads), static_cast<double>(c.depth),
         static_cast<double>(c.num_classes), static_cast<double>(c.mlp_hidden)});

    auto& params = const_cast<ViTParams<T>&>(model.params);
    for (const auto& t : vit_tensors(params)) out[t.name] = stored_from<T>(*t.values);

    const PatchKernelBank<T>& bank = model.bank;
    out["meta.bank"] = stored_from<double>(
        {static_cast<double>(bank.token_grid), static_cast<double>(bank.embed_dim),
         static_cast<double>(bank.channels), static_cast<double>(bank.kernel_count()),
         static_cast<double>(bank.adapt_mode), static_cast<double>(bank.adapt_method)});
    std::vector<double> anchors;
    for (auto a : bank.anchors) {
        anchors.push_back(static_cast<double>(a.h));
        anchors.push_back(static_cast<double>(a.w));
    }
    out["bank.anchors"] =
        stored_from<double>(anchors, {static_cast<std::uint64_t>(bank.kernel_count()), 2});
    for (std::size_t k = 0; k < bank.kernel_count(); ++k) {
        const auto& kernel = bank.kernels[k];
        out["bank.kernel" + std::to_string(k) + ".weight"] = stored_from<T>(
            kernel.data, {static_cast<std::uint64_t>(kernel.shape[0]),
                          static_cast<std::uint64_t>(kernel.shape[1]),
                          static_cast<std::uint64_t>(kernel.shape[2]),
                          static_cast<std::uint64_t>(kernel.shape[3])});
        out["bank.kernel" + std::to_string(k) + ".bias"] = stored_from<T>(bank.biases[k]);
    }
    return out;
}

template <typename T>
ModelState<T> model_from_checkpoint(const TensorMap& tensors) {
    const auto vit_meta = meta_values(tensors, "meta.vit", 6);
    ModelState<T> model;
    model.config = ViTConfig{static_cast<std::size_t>(vit_meta[0]),
                             static_cast<std::size_t>(vit_meta[1]),
                             static_cast<std::size_t>(vit_meta[2]),
                             static_cast<std::size_t>(vit_meta[3]),
                             static_cast<std::size_t>(vit_meta[4]),
                             static_cast<std::size_t>(vit_meta[5])};
    model.params = make_vit<T>(model.config);
    for (const auto& t : vit_tensors(model.params)) {
        auto it = tensors.find(t.name);
        if (it == tensors.end())
            throw std::invalid_argument("checkpoint is missing tensor '" + t.name + "'");
        auto values = stored_to<T>(it->second);
        if (values.size() != t.values->size())
            throw std::invalid_argument("tensor '" + t.name + "' has wrong size for the " +
                                        "stored model configuration");
        *t.values = std::move(values);
    }

    const auto bank_meta = meta_values(tensors, "meta.bank", 6);
    PatchKernelBank<T>& bank = model.bank;
    bank.token_grid = static_cast<std::size_t>(bank_meta[0]);
    bank.embed_dim = static_cast<std::size_t>(bank_meta[1]);
    bank.channels = static_cast<std::size_t>(bank_meta[2]);
    const auto kernel_count = static_cast<std::size_t>(bank_meta[3]);
    bank.adapt_mode = static_cast<KernelResizeMode>(static_cast<int>(bank_meta[4]));
    bank.adapt_method = static_cast<ResizeMethod>(static_cast<int>(bank_meta[5]));

    const auto anchors = meta_values(tensors, "bank.anchors", kernel_count * 2);
    for (std::size_t k = 0; k < kernel_count; ++k)
        bank.anchors.push_back({static_cast<std::size_t>(anchors[2 * k]),
                                static_cast<std::size_t>(anchors[2 * k + 1])});

    for (std::size_t k = 0; k < kernel_count; ++k) {
        const std::string base = "bank.kernel" + std::to_string(k);
        auto wit = tensors.find(base + ".weight");
        auto bit = tensors.find(base + ".bias");
        if (wit == tensors.end() || bit == tensors.end())
            throw std::invalid_argument("checkpoint is missing tensors for '" + base + "'");
        if (wit->second.dims.size() != 4)
            throw std::invalid_argument("tensor '" + base + ".weight' must have rank 4");
        Kernel<T> kernel({static_cast<std::size_t>(wit->second.dims[0]),
                          static_cast<std::size_t>(wit->second.dims[1]),
                          static_cast<std::size_t>(wit->second.dims[2]),
                          static_cast<std::size_t>(wit->second.dims[3])});
        kernel.data = stored_to<T>(wit->second);
        bank.kernels.push_back(std::move(kernel));
        bank.biases.push_back(stored_to<T>(bit->second));
    }
    validate_bank(bank);
    return model;
}

StoredDtype checkpoint_precision(const TensorMap& tensors) {
    auto it = tensors.find("pos_embed");
    if (it == tensors.end())
        throw std::invalid_argument("checkpoint holds no model (no 'pos_embed' tensor)");
    return it->second.dtype;
}

template <typename T>
std::vector<Image<T>> load_idx_images(const std::string& path) {
    const auto bytes = read_file(path);
    Reader r{bytes};
    if (r.u8("magic") != 0) throw FormatError("bad IDX magic", 0);
    if (r.u8("magic") != 0) throw FormatError("bad IDX magic", 1);
    if (r.u8("magic") != 0x08) throw FormatError("unsupported IDX dtype", 2);
    if (r.u8("magic") != 3) throw FormatError("image file must have rank 3", 3);

    // IDX dims are big-endian u32.
    std::uint32_t dims[3];
    for (auto& d : dims) {
        r.need(4, "dims");
        d = (static_cast<std::uint32_t>(bytes[r.pos]) << 24) |
            (static_cast<std::uint32_t>(bytes[r.pos + 1]) << 16) |
            (static_cast<std::uint32_t>(bytes[r.pos + 2]) << 8) |
            static_cast<std::uint32_t>(bytes[r.pos + 3]);
        r.pos += 4;
    }
    const std::size_t n = dims[0], h = dims[1], w = dims[2];
    r.need(n * h * w, "pixel data");

    std::vector<Image<T>> images;
    images.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Image<T> img({h, w, 1});
        for (std::size_t p = 0; p < h * w; ++p)
            img.data[p] = static_cast<T>(bytes[r.pos + i * h * w + p]) / static_cast<T>(255);
        images.push_back(std::move(img));
    }
    return images;
}

std::vector<std::int64_t> load_idx_labels(const std::string& path) {
    const auto bytes = read_file(path);
    Reader r{bytes};
    if (r.u8("magic") != 0) throw FormatError("bad IDX magic", 0);
    if (r.u8("magic") != 0) throw FormatError("bad IDX magic", 1);
    if (r.u8("magic") != 0x08) throw FormatError("unsupported IDX dtype", 2);
    if (r.u8("magic") != 1) throw FormatError("label file must have rank 1", 3);
    r.need(4, "dims");
    const std::uint32_t n = (static_cast<std::uint32_t>(bytes[r.pos]) << 24) |
                            (static_cast<std::uint32_t>(bytes[r.pos + 1]) << 16) |
                            (static_cast<std::uint32_t>(bytes[r.pos + 2]) << 8) |
                            static_cast<std::uint32_t>(bytes[r.pos + 3]);
    r.pos += 4;
    r.need(n, "label data");
    std::vector<std::int64_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = bytes[r.pos + i];
    return labels;
}

template <typename T>
void save_idx_images(const std::string& path, const std::vector<Image<T>>& images) {
    if (images.empty()) throw std::invalid_argument("cannot save an empty image set");
    const std::size_t h = images[0].shape[0], w = images[0].shape[1];
    for (const auto& img : images)
        if (img.shape[0] != h || img.shape[1] != w || img.shape[2] != 1)
            throw std::invalid_argument("IDX images must share one h×w×1 shape");

    std::vector<unsigned char> out{0, 0, 0x08, 3};
    for (std::size_t d : {images.size(), h, w}) {
        out.push_back(static_cast<unsigned char>(d >> 24));
        out.push_back(static_cast<unsigned char>(d >> 16));
        out.push_back(static_cast<unsigned char>(d >> 8));
        out.push_back(static_cast<unsigned char>(d));
    }
    for (const auto& img : images)
        for (T v : img.data) {
            const double scaled = std::round(static_cast<double>(v) * 255.0);
            out.push_back(static_cast<unsigned char>(std::min(255.0, std::max(0.0, scaled))));
        }
    write_file_atomic(path, out.data(), out.size());
}

void save_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels) {
    std::vector<unsigned char> out{0, 0, 0x08, 1};
    const std::size_t n = labels.size();
    out.push_back(static_cast<unsigned char>(n >> 24));
    out.push_back(static_cast<unsigned char>(n >> 16));
    out.push_back(static_cast<unsigned char>(n >> 8));
    out.push_back(static_cast<unsigned char>(n));
    for (std::int64_t label : labels) {
        if (label < 0 || label > 255)
            throw std::invalid_argument("labels must fit one byte, got " +
                                        std::to_string(label));
        out.push_back(static_cast<unsigned char>(label));
    }
    write_file_atomic(path, out.data(), out.size());
}

template <typename T>
LabeledImages<T> load_idx_dataset(const std::string& images_path,
                                  const std::string& labels_path) {
    LabeledImages<T> data;
    data.images = load_idx_images<T>(images_path);
    data.labels = load_idx_labels(labels_path);
    if (data.images.size() != data.labels.size())
        throw std::invalid_argument("image and label files disagree: " +
                                    std::to_string(data.images.size()) + " images vs " +
                                    std::to_string(data.labels.size()) + " labels");
    std::int64_t max_label = -1;
    for (auto l : data.labels) max_label = std::max(max_label, l);
    data.num_classes = max_label + 1;
    return data;
}

template <typename T>
DatasetAt<T> idx_dataset(std::vector<Image<T>> images, std::vector<std::int64_t> labels) {
    if (images.empty() || images.size() != labels.size())
        throw std::invalid_argument("dataset needs matching, nonempty images and labels");
    std::int64_t max_label = -1;
    for (auto l : labels) max_label = std::max(max_label, l);
    const std::int64_t num_classes = max_label + 1;

    return [images = std::move(images), labels = std::move(labels),
            num_classes](std::int64_t h, std::int64_t w) {
        LabeledImages<T> out;
        out.labels = labels;
        out.num_classes = num_classes;
        const auto sh = static_cast<std::int64_t>(images[0].shape[0]);
        const auto sw = static_cast<std::int64_t>(images[0].shape[1]);
        if (h <= 0 || w <= 0) throw std::invalid_argument("resolution must be positive");
        if (h == sh && w == sw) {
            out.images = images;
            return out;
        }
        const auto op = build_resize_operator<T>(
            {static_cast<std::size_t>(sh), static_cast<std::size_t>(sw)},
            {static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
            ResizeMethod::bilinear);
        out.images.reserve(images.size());
        for (const auto& img : images) out.images.push_back(apply_resize(op, img));
        return out;
    };
}

void write_file_atomic(const std::string& path, const void* data, std::size_t size) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw std::runtime_error("failed writing '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename '" + tmp + "' to '" + path +
                                 "': " + std::strerror(errno));
}

void write_text_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

#define MSPE_INSTANTIATE_IO(T)                                                              \
    template StoredTensor stored_from<T>(const std::vector<T>&, std::vector<std::uint64_t>); \
    template std::vector<T> stored_to<T>(const StoredTensor&);                              \
    template TensorMap checkpoint_from_model<T>(const ModelState<T>&);                      \
    template ModelState<T> model_from_checkpoint<T>(const TensorMap&);                      \
    template std::vector<Image<T>> load_idx_images<T>(const std::string&);                  \
    template void save_idx_images<T>(const std::string&, const std::vector<Image<T>>&);     \
    template LabeledImages<T> load_idx_dataset<T>(const std::string&, const std::string&);  \
    template DatasetAt<T> idx_dataset<T>(std::vector<Image<T>>, std::vector<std::int64_t>);

MSPE_INSTANTIATE_IO(float)
MSPE_INSTANTIATE_IO(double)

#undef MSPE_INSTANTIATE_IO

} // namespace mspe
