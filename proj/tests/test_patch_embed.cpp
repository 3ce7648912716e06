#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "mspe/errors.hpp"
#include "mspe/patch_embed.hpp"
#include "mspe/rng.hpp"

using namespace mspe;

namespace {

bool near(double a, double b, double atol) { return std::abs(a - b) <= atol; }

template <typename T>
Image<T> random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
    Image<T> img({h, w, c});
    for (auto& v : img.data) v = static_cast<T>(rng.normal());
    return img;
}

template <typename T>
void randomize_bank(PatchKernelBank<T>& bank, Rng& rng) {
    for (auto& k : bank.kernels)
        for (auto& v : k.data) v = static_cast<T>(rng.normal(0.0, 0.2));
    for (auto& b : bank.biases)
        for (auto& v : b) v = static_cast<T>(rng.normal(0.0, 0.1));
}

} // namespace

TEST_CASE("token_count matches the grid formulas") {
    CHECK(token_count(224, 224, {16, 16}, {16, 16}, 0, TokenMode::non_overlap) ==
          std::pair<std::size_t, std::size_t>{14, 14});
    CHECK(token_count(112, 112, {8, 8}, {8, 8}, 0, TokenMode::non_overlap) ==
          std::pair<std::size_t, std::size_t>{14, 14});
    // Strided overlapping grid: ceil((224-16)/8) + 1 = 27 per side.
    CHECK(token_count(224, 224, {16, 16}, {8, 8}, 1, TokenMode::overlap) ==
          std::pair<std::size_t, std::size_t>{27, 27});
    // Remainders floor away in non-overlap mode.
    CHECK(token_count(230, 118, {16, 8}, {16, 8}, 0, TokenMode::non_overlap) ==
          std::pair<std::size_t, std::size_t>{14, 14});

    CHECK_THROWS_AS((void)token_count(224, 224, {16, 16}, {8, 8}, 0, TokenMode::non_overlap),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)token_count(8, 8, {16, 16}, {8, 8}, 1, TokenMode::overlap),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)token_count(0, 8, {4, 4}, {4, 4}, 0, TokenMode::non_overlap),
                    std::invalid_argument);
}

TEST_CASE("bank construction lays out scaled base sizes and anchors") {
    auto bank = make_bank<float>(14, 16, 4, 3, 8);
    REQUIRE(bank.kernel_count() == 4);
    const std::size_t sizes[4] = {4, 8, 12, 16};
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(bank.kernels[k].shape[0] == sizes[k]);
        CHECK(bank.kernels[k].shape[1] == sizes[k]);
        CHECK(bank.kernels[k].shape[2] == 3);
        CHECK(bank.kernels[k].shape[3] == 8);
        CHECK(bank.anchors[k] == Extent2{14 * sizes[k], 14 * sizes[k]});
        CHECK(bank.biases[k].size() == 8);
    }
    CHECK(bank.original_index() == 3);
    CHECK_NOTHROW(validate_bank(bank));

    CHECK_THROWS_AS((void)make_bank<float>(14, 10, 4, 1, 8), std::invalid_argument);
    CHECK_THROWS_AS((void)make_bank<float>(14, 16, 0, 1, 8), std::invalid_argument);
}

TEST_CASE("validate_bank rejects structural violations") {
    auto bank = make_bank<float>(4, 8, 4, 1, 6);
    SUBCASE("anchor order") {
        std::swap(bank.anchors[1], bank.anchors[2]);
        CHECK_THROWS_AS(validate_bank(bank), std::invalid_argument);
    }
    SUBCASE("kernel size drift") {
        bank.kernels[1] = Kernel<float>({3, 3, 1, 6});
        CHECK_THROWS_AS(validate_bank(bank), std::invalid_argument);
    }
    SUBCASE("non-finite weights") {
        bank.kernels[0](0, 0, 0, 0) = std::nanf("");
        CHECK_THROWS_AS(validate_bank(bank), std::invalid_argument);
    }
    SUBCASE("bias length") {
        bank.biases[2].pop_back();
        CHECK_THROWS_AS(validate_bank(bank), std::invalid_argument);
    }
}

TEST_CASE("select_kernel picks the nearest anchor with low-index ties") {
    // Anchors 56, 112, 168, 224 per side.
    auto bank = make_bank<float>(14, 16, 4, 1, 4);
    CHECK(select_kernel(bank, {100, 100}) == 1);
    CHECK(select_kernel(bank, {84, 84}) == 0);   // equidistant 56 vs 112
    CHECK(select_kernel(bank, {448, 448}) == 3); // beyond the largest anchor
    CHECK(select_kernel(bank, {56, 56}) == 0);
    CHECK(select_kernel(bank, {140, 140}) == 1); // equidistant 112 vs 168
    // Non-square input: Euclidean over the pair, equidistant again -> 0.
    CHECK(select_kernel(bank, {56, 112}) == 0);
}

TEST_CASE("adaptive_kernel resizes to the floor kernel size") {
    Rng rng = Rng::stream(3, 0, 0, 0);
    auto bank = make_bank<float>(14, 16, 4, 1, 4);
    randomize_bank(bank, rng);

    SUBCASE("native resolution keeps the kernel bitwise") {
        auto [k, b] = adaptive_kernel(bank, 3, {224, 224});
        REQUIRE(k.shape[0] == 16);
        for (std::size_t i = 0; i < k.data.size(); ++i) CHECK(k.data[i] == bank.kernels[3].data[i]);
        CHECK(b == bank.biases[3]);
    }
    SUBCASE("half resolution halves the kernel") {
        auto [k, b] = adaptive_kernel(bank, 3, {112, 112});
        CHECK(k.shape[0] == 8);
        CHECK(k.shape[1] == 8);
        CHECK(b == bank.biases[3]);
    }
    SUBCASE("non-square resolution gives a non-square kernel") {
        auto [k, b] = adaptive_kernel(bank, 3, {230, 118});
        CHECK(k.shape[0] == 16);
        CHECK(k.shape[1] == 8);
        (void)b;
    }
    SUBCASE("resolutions below the token grid are rejected") {
        CHECK_THROWS_AS((void)adaptive_kernel(bank, 0, {13, 224}), ResolutionTooSmallError);
        CHECK_THROWS_AS((void)adaptive_kernel(bank, 0, {224, 13}), ResolutionTooSmallError);
        try {
            (void)adaptive_kernel(bank, 0, {13, 224});
        } catch (const ResolutionTooSmallError& e) {
            CHECK(e.height == 13);
            CHECK(e.token_grid == 14);
        }
    }
}

TEST_CASE("center crop discards the remainder symmetrically, extra at top-left") {
    CHECK(center_crop_offset({230, 118}, {224, 112}) == Extent2{3, 3});
    CHECK(center_crop_offset({231, 112}, {224, 112}) == Extent2{4, 0});
    CHECK(center_crop_offset({16, 16}, {16, 16}) == Extent2{0, 0});
    CHECK_THROWS_AS((void)center_crop_offset({8, 8}, {9, 8}), std::invalid_argument);
}

TEST_CASE("embed produces an N-by-N grid with the documented semantics") {
    Rng rng = Rng::stream(11, 0, 0, 0);

    SUBCASE("all-zero image yields bias tokens") {
        auto bank = make_bank<float>(4, 8, 4, 2, 5);
        randomize_bank(bank, rng);
        Image<float> img({32, 32, 2}, 0.0f);
        auto grid = embed(bank, img);
        REQUIRE(grid.tokens.shape == std::array<std::size_t, 3>{4, 4, 5});
        const std::size_t chosen = select_kernel(bank, {32, 32});
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                for (std::size_t d = 0; d < 5; ++d)
                    CHECK(grid.tokens(i, j, d) == bank.biases[chosen][d]);
    }

    SUBCASE("averaging kernel on a constant image returns value plus bias") {
        auto bank = make_bank<double>(4, 8, 1, 1, 1);
        for (auto& v : bank.kernels[0].data) v = 1.0 / 64.0; // 8x8 all-ones / area
        bank.biases[0][0] = 0.25;
        Image<double> img({32, 32, 1}, 0.6);
        auto grid = embed(bank, img);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(near(grid.tokens(i, j, 0), 0.85, 1e-12));
    }

    SUBCASE("non-square input still yields the square grid") {
        auto bank = make_bank<float>(14, 16, 4, 1, 3);
        randomize_bank(bank, rng);
        auto img = random_image<float>(230, 118, 1, rng);
        auto grid = embed(bank, img);
        CHECK(grid.tokens.shape == std::array<std::size_t, 3>{14, 14, 3});
        CHECK(grid.source_h == 230);
        CHECK(grid.source_w == 118);
        CHECK(grid.tokens.all_finite());
    }

    SUBCASE("embedding is linear in the image up to bias") {
        auto bank = make_bank<float>(4, 8, 2, 1, 6);
        randomize_bank(bank, rng);
        auto img = random_image<float>(20, 20, 1, rng);
        Image<float> scaled({20, 20, 1});
        const float alpha = 2.5f;
        for (std::size_t i = 0; i < img.data.size(); ++i) scaled.data[i] = alpha * img.data[i];
        auto g1 = embed(bank, img);
        auto g2 = embed(bank, scaled);
        const std::size_t chosen = select_kernel(bank, {20, 20});
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                for (std::size_t d = 0; d < 6; ++d) {
                    const double base = g1.tokens(i, j, d) - bank.biases[chosen][d];
                    const double big = g2.tokens(i, j, d) - bank.biases[chosen][d];
                    CHECK(near(big, alpha * base, 1e-5 * (1.0 + std::abs(big))));
                }
    }

    SUBCASE("channel mismatch is rejected") {
        auto bank = make_bank<float>(4, 8, 1, 3, 2);
        Image<float> img({32, 32, 1});
        CHECK_THROWS_AS((void)embed(bank, img), std::invalid_argument);
    }
}

TEST_CASE("single-kernel embedding at the anchor is a plain patchify, bitwise") {
    Rng rng = Rng::stream(17, 0, 0, 0);
    auto bank = make_bank<float>(4, 8, 1, 2, 5);
    randomize_bank(bank, rng);
    auto img = random_image<float>(32, 32, 2, rng);
    auto grid = embed(bank, img);

    // Reference patchify with the same accumulation order.
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t d = 0; d < 5; ++d) {
                float acc = bank.biases[0][d];
                for (std::size_t p = 0; p < 8; ++p)
                    for (std::size_t q = 0; q < 8; ++q)
                        for (std::size_t c = 0; c < 2; ++c)
                            acc += img(i * 8 + p, j * 8 + q, c) * bank.kernels[0](p, q, c, d);
                CHECK(grid.tokens(i, j, d) == acc);
            }
}

TEST_CASE("bank_from_pretrained seeds every branch from one kernel") {
    Rng rng = Rng::stream(23, 0, 0, 0);
    Kernel<float> pre({8, 8, 1, 6});
    for (auto& v : pre.data) v = static_cast<float>(rng.normal());
    std::vector<float> bias(6);
    for (auto& v : bias) v = static_cast<float>(rng.normal());

    auto bank = bank_from_pretrained(pre, bias, 4, 4);
    CHECK_NOTHROW(validate_bank(bank));
    REQUIRE(bank.kernel_count() == 4);
    // The largest branch is the pretrained kernel itself (identity resize).
    for (std::size_t i = 0; i < pre.data.size(); ++i)
        CHECK(bank.kernels[3].data[i] == pre.data[i]);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(bank.kernels[k].shape[0] == 2 * (k + 1));
        CHECK(bank.biases[k] == bias);
    }
    CHECK_THROWS_AS((void)bank_from_pretrained(pre, std::vector<float>(3), 4, 4),
                    std::invalid_argument);
}

TEST_CASE("position-grid interpolation follows the bilinear operator") {
    SUBCASE("same target returns the grid unchanged") {
        Grid<double> pos({3, 3, 4});
        Rng rng = Rng::stream(29, 0, 0, 0);
        for (auto& v : pos.data) v = rng.normal();
        auto out = interpolate_pos_embed(pos, {3, 3});
        for (std::size_t i = 0; i < pos.data.size(); ++i) CHECK(out.data[i] == pos.data[i]);
    }
    SUBCASE("constant grids stay constant") {
        Grid<double> pos({2, 2, 3}, 0.4);
        auto out = interpolate_pos_embed(pos, {5, 7});
        REQUIRE(out.shape == std::array<std::size_t, 3>{5, 7, 3});
        for (double v : out.data) CHECK(near(v, 0.4, 1e-12));
    }
    SUBCASE("vertical step grid upsamples to the hand ramp") {
        Grid<double> pos({2, 2, 1});
        pos(1, 0, 0) = 1.0;
        pos(1, 1, 0) = 1.0;
        auto out = interpolate_pos_embed(pos, {4, 4});
        const double ramp[4] = {0.0, 0.25, 0.75, 1.0};
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(near(out(i, j, 0), ramp[i], 1e-15));
    }
    SUBCASE("values stay inside the source range per dimension") {
        Rng rng = Rng::stream(31, 0, 0, 0);
        Grid<float> pos({4, 4, 2});
        for (auto& v : pos.data) v = static_cast<float>(rng.normal());
        auto out = interpolate_pos_embed(pos, {9, 6});
        for (std::size_t d = 0; d < 2; ++d) {
            float lo = pos(0, 0, d), hi = pos(0, 0, d);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) {
                    lo = std::min(lo, pos(i, j, d));
                    hi = std::max(hi, pos(i, j, d));
                }
            for (std::size_t i = 0; i < 9; ++i)
                for (std::size_t j = 0; j < 6; ++j) {
                    CHECK(out(i, j, d) >= lo - 1e-6f);
                    CHECK(out(i, j, d) <= hi + 1e-6f);
                }
        }
    }
}

TEST_CASE("embedding backward matches central finite differences") {
    // Non-square input at a resolution that forces both a kernel resize and
    // a center crop, so the routed-gradient path is exercised end to end.
    Rng rng(314);
    auto bank = make_bank<double>(4, 8, 2, 1, 6);
    randomize_bank(bank, rng);
    const auto img = random_image<double>(19, 14, 1, rng);
    const std::size_t index = 0;

    // Scalar loss: weighted sum of the token grid.
    Grid<double> loss_w({4, 4, 6});
    for (auto& v : loss_w.data) v = rng.normal();
    auto loss = [&](const PatchKernelBank<double>& b) {
        auto tokens = embed_with_kernel(b, index, img).tokens;
        double s = 0.0;
        for (std::size_t t = 0; t < tokens.size(); ++t) s += loss_w.data[t] * tokens.data[t];
        return s;
    };

    Kernel<double> dkernel(bank.kernels[index].shape);
    std::vector<double> dbias(bank.embed_dim, 0.0);
    embed_with_kernel_backward(bank, index, img, loss_w, dkernel, dbias);

    const double h = 1e-5;
    std::size_t checked = 0;
    for (std::size_t t = 0; t < bank.kernels[index].size(); ++t) {
        PatchKernelBank<double> plus = bank;
        PatchKernelBank<double> minus = bank;
        plus.kernels[index].data[t] += h;
        minus.kernels[index].data[t] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
        const double an = dkernel.data[t];
        CHECK(near(an, fd, 1e-6 * (1.0 + std::abs(fd))));
        ++checked;
    }
    for (std::size_t d = 0; d < bank.embed_dim; ++d) {
        PatchKernelBank<double> plus = bank;
        PatchKernelBank<double> minus = bank;
        plus.biases[index][d] += h;
        minus.biases[index][d] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
        CHECK(near(dbias[d], fd, 1e-6 * (1.0 + std::abs(fd))));
        ++checked;
    }
    CHECK(checked == bank.kernels[index].size() + bank.embed_dim);

    // Gradients accumulate rather than overwrite.
    Kernel<double> dk2(bank.kernels[index].shape);
    std::vector<double> db2(bank.embed_dim, 0.0);
    embed_with_kernel_backward(bank, index, img, loss_w, dk2, db2);
    embed_with_kernel_backward(bank, index, img, loss_w, dk2, db2);
    for (std::size_t t = 0; t < dk2.size(); ++t)
        CHECK(near(dk2.data[t], 2.0 * dkernel.data[t], 1e-12));

    // Same-size path (image exactly at the kernel's anchor) accumulates too.
    const auto img_anchor = random_image<double>(8, 8, 1, rng);
    Kernel<double> dk3(bank.kernels[index].shape);
    std::vector<double> db3(bank.embed_dim, 0.0);
    embed_with_kernel_backward(bank, index, img_anchor, loss_w, dk3, db3);
    auto loss_anchor = [&](const PatchKernelBank<double>& b) {
        auto tokens = embed_with_kernel(b, index, img_anchor).tokens;
        double s = 0.0;
        for (std::size_t t = 0; t < tokens.size(); ++t) s += loss_w.data[t] * tokens.data[t];
        return s;
    };
    for (std::size_t t = 0; t < dk3.size(); t += 7) {
        PatchKernelBank<double> plus = bank;
        PatchKernelBank<double> minus = bank;
        plus.kernels[index].data[t] += h;
        minus.kernels[index].data[t] -= h;
        const double fd = (loss_anchor(plus) - loss_anchor(minus)) / (2.0 * h);
        CHECK(near(dk3.data[t], fd, 1e-6 * (1.0 + std::abs(fd))));
    }

    // Shape guards.
    Kernel<double> wrong({3, 3, 1, 6});
    CHECK_THROWS_AS(
        embed_with_kernel_backward(bank, index, img, loss_w, wrong, dbias),
        std::invalid_argument);
    CHECK_THROWS_AS(
        embed_with_kernel_backward(bank, 5, img, loss_w, dkernel, dbias),
        std::invalid_argument);
}
