#include "doctest.h"

#include "mspe/errors.hpp"
#include "mspe/io.hpp"
#include "mspe/resize.hpp"
#include "mspe/rng.hpp"
#include "mspe/synthetic.hpp"
#include "mspe/vit.hpp"

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace mspe;

namespace {

/// Scratch directory removed when the test block ends.
struct TempDir {
    std::filesystem::path dir;

    TempDir() {
        dir = std::filesystem::temp_directory_path() /
              ("mspe_io_test_" + std::to_string(::getpid()) + "_" +
               std::to_string(counter()++));
        std::filesystem::create_directories(dir);
    }
    ~TempDir() { std::filesystem::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(bool(out));
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

/// Small but fully populated model for round-trip tests.
template <typename T>
ModelState<T> sample_model(std::uint64_t seed) {
    ModelState<T> m;
    m.config = ViTConfig{4, 16, 2, 2, 4, 32};
    m.params = make_vit<T>(m.config);
    Rng rng = Rng::stream(seed, 0, 0, 0);
    init_vit(m.params, rng);
    Kernel<T> kernel({8, 8, 1, 16});
    Rng krng = Rng::stream(seed, 1, 0, 0);
    for (auto& v : kernel.data) v = static_cast<T>(krng.normal(0.0, 0.05));
    std::vector<T> bias(16);
    for (auto& v : bias) v = static_cast<T>(krng.normal(0.0, 0.05));
    m.bank = bank_from_pretrained(kernel, bias, 4, 4);
    return m;
}

template <typename T>
void check_models_equal(ModelState<T>& a, ModelState<T>& b) {
    CHECK(a.config.token_grid == b.config.token_grid);
    CHECK(a.config.embed_dim == b.config.embed_dim);
    CHECK(a.config.heads == b.config.heads);
    CHECK(a.config.depth == b.config.depth);
    CHECK(a.config.num_classes == b.config.num_classes);
    CHECK(a.config.mlp_hidden == b.config.mlp_hidden);

    auto ta = vit_tensors(a.params);
    auto tb = vit_tensors(b.params);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].name == tb[i].name);
        CHECK(*ta[i].values == *tb[i].values); // bitwise: no arithmetic on either path
    }

    CHECK(a.bank.token_grid == b.bank.token_grid);
    CHECK(a.bank.embed_dim == b.bank.embed_dim);
    CHECK(a.bank.channels == b.bank.channels);
    CHECK(a.bank.anchors == b.bank.anchors);
    CHECK((a.bank.adapt_mode == b.bank.adapt_mode));
    CHECK((a.bank.adapt_method == b.bank.adapt_method));
    REQUIRE(a.bank.kernel_count() == b.bank.kernel_count());
    for (std::size_t k = 0; k < a.bank.kernel_count(); ++k) {
        CHECK(a.bank.kernels[k].shape == b.bank.kernels[k].shape);
        CHECK(a.bank.kernels[k].data == b.bank.kernels[k].data);
        CHECK(a.bank.biases[k] == b.bank.biases[k]);
    }
}

} // namespace

TEST_CASE("stored tensor encoding round-trips and validates") {
    SUBCASE("empty dims default to rank one") {
        auto t = stored_from<double>({1.5, -2.0, 3.25});
        CHECK(t.dims == std::vector<std::uint64_t>{3});
        CHECK(t.element_count() == 3);
        CHECK(t.raw.size() == 24);
        CHECK(stored_to<double>(t) == std::vector<double>{1.5, -2.0, 3.25});
    }
    SUBCASE("explicit dims are kept") {
        auto t = stored_from<float>({1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f}, {2, 3});
        CHECK(t.dims == std::vector<std::uint64_t>{2, 3});
        CHECK(t.raw.size() == 24);
        CHECK(stored_to<float>(t) == std::vector<float>{1, 2, 3, 4, 5, 6});
    }
    SUBCASE("dims that disagree with the value count are rejected") {
        CHECK_THROWS_AS(stored_from<double>({1.0, 2.0}, {3}), std::invalid_argument);
    }
    SUBCASE("decoding as the wrong scalar type is rejected") {
        auto t = stored_from<float>({1.0f});
        CHECK_THROWS_AS(stored_to<double>(t), std::invalid_argument);
    }
    SUBCASE("known IEEE-754 bit patterns are written little-endian") {
        auto t = stored_from<float>({1.0f});
        CHECK(t.raw == std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3F});
        auto d = stored_from<double>({1.0});
        CHECK(d.raw ==
              std::vector<unsigned char>{0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F});
    }
}

TEST_CASE("checkpoint byte layout matches its specification") {
    TempDir tmp;
    const auto path = tmp.path("one.ckpt");
    TensorMap tensors;
    tensors["a"] = stored_from<float>({1.0f, 2.0f, 3.0f, 4.0f}, {2, 2});
    save_checkpoint(path, tensors);

    const auto bytes = slurp(path);
    // header 16 + directory (4 + 1 + 1 + 4 + 16 + 8 = 34) + payload 16
    REQUIRE(bytes.size() == 66);
    CHECK(bytes[0] == 'M');
    CHECK(bytes[1] == 'S');
    CHECK(bytes[2] == 'P');
    CHECK(bytes[3] == 'E');
    CHECK(bytes[4] == 1); // version, little-endian u32
    CHECK(bytes[5] == 0);
    CHECK(bytes[8] == 1); // tensor count, little-endian u64
    CHECK(bytes[15] == 0);
    CHECK(bytes[16] == 1); // name length
    CHECK(bytes[20] == 'a');
    CHECK(bytes[21] == 1); // dtype tag: f32
    CHECK(bytes[22] == 2); // rank
    CHECK(bytes[26] == 2); // dims[0]
    CHECK(bytes[34] == 2); // dims[1]
    CHECK(bytes[42] == 50); // payload offset = 16 + 34
    CHECK(bytes[43] == 0);
    // payload: 1.0f, 2.0f little-endian
    CHECK(bytes[50] == 0x00);
    CHECK(bytes[52] == 0x80);
    CHECK(bytes[53] == 0x3F);
    CHECK(bytes[57] == 0x40);

    SUBCASE("loading returns the same tensors") {
        auto loaded = load_checkpoint(path);
        REQUIRE(loaded.size() == 1);
        CHECK(loaded.at("a").dims == std::vector<std::uint64_t>{2, 2});
        CHECK(loaded.at("a").raw == tensors.at("a").raw);
    }
    SUBCASE("re-saving loaded tensors reproduces the file byte for byte") {
        const auto again = tmp.path("two.ckpt");
        save_checkpoint(again, load_checkpoint(path));
        CHECK(slurp(again) == bytes);
    }
}

TEST_CASE("checkpoint save and load round-trip arbitrary tensor sets") {
    TempDir tmp;
    SUBCASE("empty set") {
        const auto path = tmp.path("empty.ckpt");
        save_checkpoint(path, {});
        auto loaded = load_checkpoint(path);
        CHECK(loaded.empty());
        CHECK(slurp(path).size() == 16);
    }
    SUBCASE("mixed dtypes and ranks") {
        TensorMap tensors;
        tensors["alpha"] = stored_from<double>({0.5, -0.25}, {2});
        tensors["beta"] = stored_from<float>({9.0f});
        tensors["gamma.w"] = stored_from<float>({1, 2, 3, 4, 5, 6, 7, 8}, {2, 2, 2});
        const auto path = tmp.path("mixed.ckpt");
        save_checkpoint(path, tensors);
        auto loaded = load_checkpoint(path);
        REQUIRE(loaded.size() == 3);
        for (const auto& [name, t] : tensors) {
            REQUIRE(loaded.count(name) == 1);
            CHECK((loaded.at(name).dtype == t.dtype));
            CHECK(loaded.at(name).dims == t.dims);
            CHECK(loaded.at(name).raw == t.raw);
        }
    }
    SUBCASE("payload bytes that disagree with dims are rejected at save") {
        TensorMap tensors;
        tensors["bad"] = stored_from<float>({1.0f, 2.0f});
        tensors["bad"].dims = {3};
        const auto path = tmp.path("bad.ckpt");
        CHECK_THROWS_AS(save_checkpoint(path, tensors), std::invalid_argument);
    }
}

TEST_CASE("malformed checkpoints are rejected with the offending byte offset") {
    TempDir tmp;
    const auto path = tmp.path("victim.ckpt");
    TensorMap tensors;
    tensors["a"] = stored_from<float>({1.0f, 2.0f, 3.0f, 4.0f});
    tensors["b"] = stored_from<float>({5.0f, 6.0f, 7.0f, 8.0f});
    save_checkpoint(path, tensors);
    const auto good = slurp(path);
    // layout: header 16, entry "a" at 16 (26 bytes: 4+1+1+4+8+8),
    // entry "b" at 42, payloads at 68 and 84, total 100.
    REQUIRE(good.size() == 100);
    const auto corrupt = tmp.path("corrupt.ckpt");

    SUBCASE("flipped magic byte") {
        auto bad = good;
        bad[1] = 'X';
        dump(corrupt, bad);
        try {
            load_checkpoint(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 1);
            CHECK(std::string(e.what()).find("byte offset 1") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        auto bad = good;
        bad[4] = 2;
        dump(corrupt, bad);
        try {
            load_checkpoint(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 4);
        }
    }
    SUBCASE("unknown dtype tag") {
        auto bad = good;
        bad[21] = 7; // dtype byte of entry "a"
        dump(corrupt, bad);
        try {
            load_checkpoint(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 21);
        }
    }
    SUBCASE("duplicate tensor names") {
        auto bad = good;
        bad[46] = 'a'; // rename entry "b" (name byte at 42 + 4)
        dump(corrupt, bad);
        CHECK_THROWS_AS(load_checkpoint(corrupt), FormatError);
    }
    SUBCASE("overlapping payload ranges") {
        auto bad = good;
        bad[60] = 68; // entry "b" payload offset (42 + 4 + 1 + 1 + 4 + 8) -> same as "a"
        dump(corrupt, bad);
        try {
            load_checkpoint(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("overlaps") != std::string::npos);
        }
    }
    SUBCASE("payload pointing past end of file") {
        auto bad = good;
        bad[60] = 96; // 96 + 16 > 100
        dump(corrupt, bad);
        CHECK_THROWS_AS(load_checkpoint(corrupt), FormatError);
    }
    SUBCASE("payload pointing into the directory") {
        auto bad = good;
        bad[60] = 20;
        dump(corrupt, bad);
        try {
            load_checkpoint(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("directory") != std::string::npos);
        }
    }
    SUBCASE("truncated directory") {
        auto bad = std::vector<unsigned char>(good.begin(), good.begin() + 30);
        dump(corrupt, bad);
        CHECK_THROWS_AS(load_checkpoint(corrupt), FormatError);
    }
    SUBCASE("truncated to less than a magic") {
        dump(corrupt, {'M', 'S'});
        try {
            load_checkpoint(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 2);
        }
    }
    SUBCASE("missing file is an I/O error, not a format error") {
        CHECK_THROWS_AS(load_checkpoint(tmp.path("nope.ckpt")), std::runtime_error);
    }
}

TEST_CASE("model checkpoints restore the exact model") {
    TempDir tmp;
    SUBCASE("double precision") {
        auto model = sample_model<double>(3);
        const auto path = tmp.path("model64.ckpt");
        save_checkpoint(path, checkpoint_from_model(model));
        auto tensors = load_checkpoint(path);
        CHECK((checkpoint_precision(tensors) == StoredDtype::f64));
        auto restored = model_from_checkpoint<double>(tensors);
        check_models_equal(model, restored);

        // Determinism: serializing the restored model reproduces the bytes.
        const auto again = tmp.path("model64b.ckpt");
        save_checkpoint(again, checkpoint_from_model(restored));
        CHECK(slurp(again) == slurp(path));
    }
    SUBCASE("single precision") {
        auto model = sample_model<float>(5);
        const auto path = tmp.path("model32.ckpt");
        save_checkpoint(path, checkpoint_from_model(model));
        auto tensors = load_checkpoint(path);
        CHECK((checkpoint_precision(tensors) == StoredDtype::f32));
        auto restored = model_from_checkpoint<float>(tensors);
        check_models_equal(model, restored);
    }
    SUBCASE("loading with the wrong scalar type is rejected") {
        auto model = sample_model<double>(3);
        const auto path = tmp.path("model64.ckpt");
        save_checkpoint(path, checkpoint_from_model(model));
        auto tensors = load_checkpoint(path);
        CHECK_THROWS_AS(model_from_checkpoint<float>(tensors), std::invalid_argument);
    }
    SUBCASE("missing tensors are reported by name") {
        auto model = sample_model<double>(3);
        auto tensors = checkpoint_from_model(model);
        tensors.erase("pos_embed");
        CHECK_THROWS_AS(checkpoint_precision(tensors), std::invalid_argument);
        CHECK_THROWS_AS(model_from_checkpoint<double>(tensors), std::invalid_argument);
    }
    SUBCASE("bank kernels keep their distinct per-kernel sizes") {
        auto model = sample_model<double>(3);
        auto restored =
            model_from_checkpoint<double>(checkpoint_from_model(model));
        REQUIRE(restored.bank.kernel_count() == 4);
        CHECK(restored.bank.kernels[0].shape[0] == 2);
        CHECK(restored.bank.kernels[3].shape[0] == 8);
        CHECK(restored.bank.anchors[0] == Extent2{8, 8});
        CHECK(restored.bank.anchors[3] == Extent2{32, 32});
    }
}

TEST_CASE("IDX image files follow the big-endian header contract") {
    TempDir tmp;
    std::vector<Image<double>> images;
    for (int i = 0; i < 2; ++i) {
        Image<double> img({3, 4, 1});
        for (std::size_t p = 0; p < 12; ++p)
            img.data[p] = static_cast<double>(i * 12 + p) / 255.0;
        images.push_back(std::move(img));
    }
    images[1].data[11] = 1.0; // byte 255 must round-trip to exactly 1.0
    const auto path = tmp.path("imgs.idx");
    save_idx_images(path, images);

    const auto bytes = slurp(path);
    REQUIRE(bytes.size() == 4 + 12 + 24);
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 0);
    CHECK(bytes[2] == 0x08); // unsigned byte dtype
    CHECK(bytes[3] == 3);    // rank
    // dims are big-endian u32: 2, 3, 4
    CHECK(bytes[4] == 0);
    CHECK(bytes[7] == 2);
    CHECK(bytes[11] == 3);
    CHECK(bytes[15] == 4);
    CHECK(bytes[16] == 0);  // first pixel of image 0
    CHECK(bytes[17] == 1);
    CHECK(bytes[28] == 12); // first pixel of image 1
    CHECK(bytes[39] == 255);

    SUBCASE("loading restores the scaled values exactly") {
        auto loaded = load_idx_images<double>(path);
        REQUIRE(loaded.size() == 2);
        CHECK(loaded[0].shape == std::array<std::size_t, 3>{3, 4, 1});
        CHECK(loaded[0].data == images[0].data);
        CHECK(loaded[1].data[11] == 1.0);
    }
    SUBCASE("write-read-write reproduces the bytes") {
        const auto again = tmp.path("imgs2.idx");
        save_idx_images(again, load_idx_images<double>(path));
        CHECK(slurp(again) == bytes);
    }
    SUBCASE("heterogeneous shapes cannot be saved") {
        auto bad = images;
        bad.push_back(Image<double>({4, 4, 1}));
        CHECK_THROWS_AS(save_idx_images(tmp.path("bad.idx"), bad), std::invalid_argument);
    }
}

TEST_CASE("IDX label files round-trip and validate") {
    TempDir tmp;
    const auto path = tmp.path("labels.idx");
    const std::vector<std::int64_t> labels{0, 3, 2, 1, 3};
    save_idx_labels(path, labels);
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() == 4 + 4 + 5);
    CHECK(bytes[2] == 0x08);
    CHECK(bytes[3] == 1); // rank
    CHECK(bytes[7] == 5); // count, big-endian
    CHECK(bytes[9] == 3);
    CHECK(load_idx_labels(path) == labels);
    CHECK_THROWS_AS(save_idx_labels(tmp.path("x.idx"), {999}), std::invalid_argument);
}

TEST_CASE("malformed IDX files are rejected with byte offsets") {
    TempDir tmp;
    const auto path = tmp.path("imgs.idx");
    save_idx_images<double>(path, {Image<double>({2, 2, 1})});
    const auto good = slurp(path);
    const auto corrupt = tmp.path("corrupt.idx");

    SUBCASE("nonzero magic byte") {
        auto bad = good;
        bad[0] = 9;
        dump(corrupt, bad);
        try {
            load_idx_images<double>(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 0);
        }
    }
    SUBCASE("unsupported dtype byte") {
        auto bad = good;
        bad[2] = 0x0D; // float dtype: unsupported here
        dump(corrupt, bad);
        try {
            load_idx_images<double>(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 2);
        }
    }
    SUBCASE("wrong rank for images") {
        auto bad = good;
        bad[3] = 1;
        dump(corrupt, bad);
        try {
            load_idx_images<double>(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 3);
        }
    }
    SUBCASE("wrong rank for labels") {
        save_idx_labels(corrupt, {1, 2});
        auto bad = slurp(corrupt);
        bad[3] = 3;
        dump(corrupt, bad);
        CHECK_THROWS_AS(load_idx_labels(corrupt), FormatError);
    }
    SUBCASE("truncated pixel payload") {
        auto bad = std::vector<unsigned char>(good.begin(), good.end() - 2);
        dump(corrupt, bad);
        try {
            load_idx_images<double>(corrupt);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset == 16); // payload starts right after the three dims
            CHECK(std::string(e.what()).find("pixel") != std::string::npos);
        }
    }
    SUBCASE("truncated dims") {
        auto bad = std::vector<unsigned char>(good.begin(), good.begin() + 6);
        dump(corrupt, bad);
        CHECK_THROWS_AS(load_idx_images<double>(corrupt), FormatError);
    }
}

TEST_CASE("stored datasets resize on demand but pass originals through") {
    TempDir tmp;
    // Render a tiny synthetic set at 8x8, store it, and rebuild a view.
    SyntheticShapesSpec spec;
    spec.samples_per_class = 2;
    spec.seed = 77;
    auto rendered = scene_dataset<double>(sample_scenes(spec), spec.num_classes)(8, 8);
    const auto imgs = tmp.path("d.images.idx");
    const auto labs = tmp.path("d.labels.idx");
    save_idx_images(imgs, rendered.images);
    save_idx_labels(labs, rendered.labels);

    auto stored = load_idx_dataset<double>(imgs, labs);
    REQUIRE(stored.size() == rendered.size());
    CHECK(stored.num_classes == 4);
    CHECK(stored.labels == rendered.labels);

    auto view = idx_dataset<double>(stored.images, stored.labels);
    SUBCASE("stored resolution returns the images unchanged") {
        auto at8 = view(8, 8);
        REQUIRE(at8.size() == stored.size());
        CHECK(at8.num_classes == 4);
        for (std::size_t i = 0; i < at8.size(); ++i)
            CHECK(at8.images[i].data == stored.images[i].data);
    }
    SUBCASE("other resolutions equal an explicit bilinear resize") {
        auto at4 = view(4, 4);
        const auto op = build_resize_operator<double>({8, 8}, {4, 4}, ResizeMethod::bilinear);
        for (std::size_t i = 0; i < at4.size(); ++i) {
            const auto expect = apply_resize(op, stored.images[i]);
            CHECK(at4.images[i].data == expect.data);
        }
        CHECK(at4.labels == stored.labels);
    }
    SUBCASE("nonpositive resolutions are rejected") {
        CHECK_THROWS_AS(view(0, 5), std::invalid_argument);
    }
    SUBCASE("mismatched image and label counts are rejected") {
        save_idx_labels(labs, {1});
        CHECK_THROWS_AS(load_idx_dataset<double>(imgs, labs), std::invalid_argument);
        CHECK_THROWS_AS(idx_dataset<double>(stored.images, {1}), std::invalid_argument);
    }
}

TEST_CASE("atomic writes replace whole files and leave no temporaries") {
    TempDir tmp;
    const auto path = tmp.path("out.csv");
    write_text_atomic(path, "first\n");
    CHECK(slurp(path) == std::vector<unsigned char>{'f', 'i', 'r', 's', 't', '\n'});
    write_text_atomic(path, "second\n");
    auto bytes = slurp(path);
    CHECK(std::string(bytes.begin(), bytes.end()) == "second\n");
    CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
    CHECK_THROWS_AS(write_text_atomic(tmp.path("no/such/dir/x"), "y"), std::runtime_error);
}
