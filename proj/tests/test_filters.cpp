#include <doctest.h>

#include "mmf/core/gradcheck.hpp"
#include "mmf/filters/bayar.hpp"
#include "mmf/filters/noiseprint.hpp"
#include "mmf/filters/srm.hpp"
#include "test_util.hpp"

using namespace mmf;
using namespace mmf_test;

TEST_CASE("srm bank loads from the data file with zero-sum kernels and the stated divisors") {
    SrmFilterBank bank = SrmFilterBank::load(srm_kernel_path());
    REQUIRE(bank.kernels.size() == 3);
    CHECK(bank.version == 1);
    CHECK(bank.kernels[0].divisor == 4.0);
    CHECK(bank.kernels[1].divisor == 12.0);
    CHECK(bank.kernels[2].divisor == 2.0);
    for (const auto& k : bank.kernels) {
        double sum = 0;
        for (double v : k.taps) sum += v;
        CHECK(std::abs(sum) <= 1e-9);
    }
    CHECK_THROWS(SrmFilterBank::load(srm_kernel_path(), -1.0));
}

TEST_CASE("srm residual: constant and zero images give zero residual") {
    SrmFilterBank bank = SrmFilterBank::load(srm_kernel_path());
    for (double fill : {0.0, 0.5}) {
        Tensor<double> img = Tensor<double>::full(Shape4(1, 3, 12, 12), fill);
        Tensor<double> r = bank.residual(img);
        CHECK(r.shape == img.shape);
        for (double v : r.v) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("srm residual on a unit impulse equals the clamped divisor-scaled taps") {
    SrmFilterBank bank = SrmFilterBank::load(srm_kernel_path());
    Tensor<double> img(Shape4(1, 3, 11, 11));
    for (int c = 0; c < 3; ++c) img.at(0, c, 5, 5) = 1.0;  // impulse of 255 after scaling
    Tensor<double> r = bank.residual(img);
    for (int k = 0; k < 3; ++k) {
        const SrmKernel& ker = bank.kernels[k];
        const int off = ker.size / 2;
        for (int i = 0; i < ker.size; ++i)
            for (int j = 0; j < ker.size; ++j) {
                // cross-correlation: response at (5 - (i - off), 5 - (j - off))
                double expect = std::clamp(255.0 * ker.taps[i * ker.size + j] / ker.divisor,
                                           -bank.truncation_threshold, bank.truncation_threshold);
                CHECK(r.at(0, k, 5 - (i - off), 5 - (j - off)) ==
                      doctest::Approx(expect).epsilon(1e-9));
            }
    }
}

TEST_CASE("srm rejects non-3-channel input") {
    SrmFilterBank bank = SrmFilterBank::load(srm_kernel_path());
    Tensor<double> gray(Shape4(1, 1, 8, 8));
    CHECK_THROWS_AS(bank.residual(gray), std::invalid_argument);
}

TEST_CASE("truncate: identity inside, clamp outside, idempotent") {
    Rng rng(5);
    Tensor<double> small = randn<double>(Shape4(1, 2, 4, 4), rng, 0.3);
    Tensor<double> same = truncate(small, 2.0);
    for (std::size_t i = 0; i < small.size(); ++i) CHECK(same[i] == small[i]);

    Tensor<double> big = Tensor<double>::full(Shape4(1, 1, 2, 2), 20.0);
    CHECK(truncate(big, 2.0)[0] == 2.0);

    Tensor<double> x = randn<double>(Shape4(2, 3, 6, 6), rng, 4.0);
    Tensor<double> once = truncate(x, 1.5), twice = truncate(once, 1.5);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(twice[i] == once[i]);

    CHECK_THROWS_AS(truncate(x, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(truncate(x, -1.0), std::invalid_argument);
}

TEST_CASE("bayar projection enforces the constraints and is a fixed point") {
    ParamRegistry<double> reg(7);
    BayarLayer<double> layer(reg, "bayar", 5);
    CHECK(layer.satisfies_constraints());

    Rng rng(8);
    for (double& v : layer.weight->value.v) v = rng.normal(0.0, 1.0);
    layer.project();
    CHECK(layer.satisfies_constraints(1e-9));
    Tensor<double> before = layer.weight->value;
    layer.project();
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(layer.weight->value[i] == doctest::Approx(before[i]).epsilon(1e-12));
}

TEST_CASE("bayar projection: uniform taps become 1/24, halving case, degenerate reinit") {
    ParamRegistry<double> reg(9);
    BayarLayer<double> layer(reg, "bayar", 5);
    for (double& v : layer.weight->value.v) v = 0.7;
    layer.project();
    for (int o = 0; o < 3; ++o)
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                if (i == 2 && j == 2) CHECK(layer.weight->value.at(o, 0, i, j) == -1.0);
                else CHECK(layer.weight->value.at(o, 0, i, j) == doctest::Approx(1.0 / 24));
            }

    // non-center sum 2 -> every tap halved
    for (double& v : layer.weight->value.v) v = 2.0 / 24.0;
    layer.project();
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            if (i != 2 || j != 2)
                CHECK(layer.weight->value.at(0, 0, i, j) == doctest::Approx(1.0 / 24));

    // all-zero non-center taps trigger re-initialization
    for (double& v : layer.weight->value.v) v = 0.0;
    layer.project();
    CHECK(layer.reinit_events > 0);
    CHECK(layer.satisfies_constraints(1e-9));
}

TEST_CASE("bayar forward: zero response on constant images, matches naive conv, refuses bad taps") {
    ParamRegistry<double> reg(10);
    BayarLayer<double> layer(reg, "bayar", 5);
    Rng rng(11);
    for (double& v : layer.weight->value.v) v = rng.normal(0.0, 0.2);
    layer.project();

    Tape<double> t;
    FwdCtx<double> ctx(t);
    Tensor<double> flat = Tensor<double>::full(Shape4(1, 3, 10, 10), 0.42);
    int r = layer.forward(ctx, t.leaf(flat));
    CHECK(t.val(r).shape == flat.shape);
    for (double v : t.val(r).v) CHECK(v == doctest::Approx(0.0).epsilon(1e-10));

    int rz = layer.forward(ctx, t.leaf(Tensor<double>(Shape4(1, 3, 6, 6))));
    for (double v : t.val(rz).v) CHECK(v == 0.0);

    // naive oracle with replicate padding, depthwise
    Tensor<double> img = rand01<double>(Shape4(1, 3, 9, 9), rng);
    int rr = layer.forward(ctx, t.leaf(img));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x) {
                double acc = 0;
                for (int i = 0; i < 5; ++i)
                    for (int j = 0; j < 5; ++j) {
                        int iy = std::clamp(y - 2 + i, 0, 8);
                        int ix = std::clamp(x - 2 + j, 0, 8);
                        acc += layer.weight->value.at(c, 0, i, j) * img.at(0, c, iy, ix);
                    }
                CHECK(t.val(rr).at(0, c, y, x) == doctest::Approx(acc).epsilon(1e-9));
            }

    layer.weight->value.at(0, 0, 2, 2) = -0.5;  // break the constraint
    CHECK_THROWS_AS(layer.forward(ctx, t.leaf(img)), std::runtime_error);
}

TEST_CASE("bayar layer gradcheck through the constrained convolution") {
    ParamRegistry<double> reg(12);
    BayarLayer<double> layer(reg, "bayar", 3);
    layer.validate_on_forward = false;  // finite differences perturb the taps
    Rng rng(13);
    Tensor<double> img = rand01<double>(Shape4(1, 3, 6, 6), rng);
    auto loss_value = [&]() {
        Tape<double> t;
        FwdCtx<double> ctx(t);
        int r = layer.forward(ctx, t.leaf(img));
        return double(t.val(reduce_mean_all(t, mul(t, r, r))).item());
    };
    auto grads = [&]() {
        Tape<double> t;
        FwdCtx<double> ctx(t);
        int r = layer.forward(ctx, t.leaf(img));
        t.backward(reduce_mean_all(t, mul(t, r, r)));
        ctx.harvest();
    };
    auto res = gradcheck<double>({layer.weight}, loss_value, grads);
    CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("filters are translation-equivariant away from borders") {
    SrmFilterBank bank = SrmFilterBank::load(srm_kernel_path());
    Rng rng(14);
    Tensor<double> img = rand01<double>(Shape4(1, 3, 16, 16), rng);
    Tensor<double> shifted(img.shape);
    const int dy = 2, dx = 3;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                int sy = (y - dy + 16) % 16, sx = (x - dx + 16) % 16;
                shifted.at(0, c, y, x) = img.at(0, c, sy, sx);
            }
    Tensor<double> r = bank.residual(img);
    Tensor<double> rs = bank.residual(shifted);
    // interior window: the source output must also be a full kernel half-width
    // away from borders (replicate padding vs wrapped content differs there)
    const int halo = 2;
    for (int c = 0; c < 3; ++c)
        for (int y = dy + 2 * halo; y < 16 - halo; ++y)
            for (int x = dx + 2 * halo; x < 16 - halo; ++x)
                CHECK(rs.at(0, c, y, x) ==
                      doctest::Approx(r.at(0, c, y - dy, x - dx)).epsilon(1e-9));
}

TEST_CASE("noiseprint providers") {
    SUBCASE("proxy: constant image gives zero residual, 3 channels, dims preserved") {
        auto prov = NoisePrintProvider<double>::proxy();
        Tensor<double> img = Tensor<double>::full(Shape4(1, 3, 9, 9), 0.6);
        Tensor<double> r = prov.extract(img, "");
        CHECK(r.shape == img.shape);
        for (double v : r.v) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::string(prov.kind_name()) == "proxy");
    }

    SUBCASE("precomputed: stored map returned verbatim, missing entry names the image") {
        std::string dir = fresh_dir("npstore");
        Rng rng(15);
        Tensor<double> stored = randn<double>(Shape4(1, 1, 7, 7), rng);
        std::filesystem::create_directories(std::filesystem::path(dir) / "sub");
        write_raster(dir + "/sub/a.png.npr", stored);
        auto prov = NoisePrintProvider<double>::precomputed(dir);
        Tensor<double> img = Tensor<double>::full(Shape4(1, 3, 7, 7), 0.2);
        Tensor<double> r = prov.extract(img, "sub/a.png");
        CHECK(r.shape == Shape4(1, 3, 7, 7));  // single channel replicated
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 7; ++y)
                for (int x = 0; x < 7; ++x)
                    CHECK(r.at(0, c, y, x) == doctest::Approx(float(stored.at(0, 0, y, x))));
        try {
            prov.extract(img, "missing/b.png");
            FAIL("expected error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("missing/b.png") != std::string::npos);
        }
    }

    SUBCASE("network provider runs an imported conv stack") {
        std::string dir = fresh_dir("npnet");
        std::map<std::string, Tensor<double>> weights;
        Tensor<double> w0(Shape4(1, 3, 3, 3));
        w0.at(0, 0, 1, 1) = 1.0;
        w0.at(0, 0, 0, 1) = -1.0;  // simple vertical difference on the red channel
        weights["layer0.weight"] = w0;
        std::ofstream os(dir + "/np.tensors", std::ios::binary);
        write_tensor_map(os, weights);
        os.close();
        auto prov = NoisePrintProvider<double>::network(dir + "/np.tensors");
        Rng rng(16);
        Tensor<double> img = rand01<double>(Shape4(1, 3, 6, 6), rng);
        Tensor<double> r = prov.extract(img, "");
        CHECK(r.shape == Shape4(1, 3, 6, 6));
        CHECK(r.at(0, 0, 3, 3) ==
              doctest::Approx(img.at(0, 0, 3, 3) - img.at(0, 0, 2, 3)).epsilon(1e-9));
    }

    SUBCASE("misconfigured provider fails loudly") {
        CHECK_THROWS(NoisePrintProvider<double>::precomputed("/nonexistent/store"));
        CHECK_THROWS(NoisePrintProvider<double>::network("/nonexistent/weights"));
    }
}

TEST_CASE("all three residual sources produce identically shaped outputs") {
    SrmFilterBank bank = SrmFilterBank::load(srm_kernel_path());
    auto prov = NoisePrintProvider<double>::proxy();
    ParamRegistry<double> reg(17);
    BayarLayer<double> layer(reg, "bayar", 5);
    Rng rng(18);
    Tensor<double> img = rand01<double>(Shape4(1, 3, 14, 10), rng);
    Tensor<double> a = bank.residual(img);
    Tensor<double> b = prov.extract(img, "");
    Tensor<double> c = layer.forward_plain(img);
    CHECK(a.shape == img.shape);
    CHECK(b.shape == img.shape);
    CHECK(c.shape == img.shape);
}
