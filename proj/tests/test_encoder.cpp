#include <doctest.h>

#include "mmf/core/gradcheck.hpp"
#include "mmf/model/network.hpp"
#include "mmf/train/optimizer.hpp"
#include "test_util.hpp"

using namespace mmf;
using namespace mmf_test;

namespace {

ModelConfig tiny_config(FusionMode fusion) {
    ModelConfig cfg = ModelConfig::toy();
    cfg.channels = {8, 16, 32, 64};
    cfg.heads = {1, 2, 4, 4};
    cfg.efm_widths = {4, 6, 8, 12};
    cfg.decoder_embed = 16;
    cfg.fusion = fusion;
    return cfg;
}

}  // namespace

TEST_CASE("mhsa stages follow the H/2^(i+1) dimension law") {
    ParamRegistry<double> reg(1);
    ModelConfig cfg = tiny_config(FusionMode::SingleAux);
    MiTTower<double> tower(reg, "tower", 3, cfg.channels, cfg.depths, cfg.heads, cfg.sr_ratios,
                           cfg.mlp_ratio);
    Rng rng(2);
    Tensor<double> x = rand01<double>(Shape4(1, 3, 64, 64), rng);
    Tape<double> t;
    FwdCtx<double> ctx(t);
    int cur = t.leaf(x);
    const int expect[4] = {16, 8, 4, 2};
    for (int i = 0; i < 4; ++i) {
        cur = tower.stages[i].forward(ctx, cur);
        CHECK(t.val(cur).shape == Shape4(1, cfg.channels[i], expect[i], expect[i]));
    }
}

TEST_CASE("patch embed rejects indivisible dims with a padding hint") {
    ParamRegistry<double> reg(3);
    PatchEmbed<double> pe(reg, "pe", 3, 8, 7, 4);
    Tape<double> t;
    FwdCtx<double> ctx(t);
    int h = 0, w = 0;
    try {
        pe.forward(ctx, t.leaf(Tensor<double>(Shape4(1, 3, 30, 32))), h, w);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("multiple of 32") != std::string::npos);
    }
}

TEST_CASE("frm: zero-initialized corrections give exact identity") {
    ParamRegistry<double> reg(4);
    FeatureRectification<double> frm(reg, "frm", 8, 0.5);
    Rng rng(5);
    // gates have random weights; only the output projections start at zero
    for (auto& p : reg.all())
        if (p->name.find("proj") == std::string::npos)
            for (double& v : p->value.v) v = rng.normal(0.0, 0.5);
    Tensor<double> x1 = randn<double>(Shape4(2, 8, 5, 5), rng);
    Tensor<double> x2 = randn<double>(Shape4(2, 8, 5, 5), rng);
    Tape<double> t;
    FwdCtx<double> ctx(t);
    auto [o1, o2] = frm.forward(ctx, t.leaf(x1), t.leaf(x2));
    for (std::size_t i = 0; i < x1.size(); ++i) {
        CHECK(t.val(o1)[i] == x1[i]);
        CHECK(t.val(o2)[i] == x2[i]);
    }
}

TEST_CASE("frm: zero inputs give zero outputs; lambda 0 is identity on both branches") {
    ParamRegistry<double> reg(6);
    FeatureRectification<double> frm(reg, "frm", 8, 0.5);
    Rng rng(7);
    for (auto& p : reg.all())
        for (double& v : p->value.v) v = rng.normal(0.0, 0.5);  // projections included

    Tape<double> t;
    FwdCtx<double> ctx(t);
    auto [z1, z2] = frm.forward(ctx, t.leaf(Tensor<double>(Shape4(1, 8, 4, 4))),
                                t.leaf(Tensor<double>(Shape4(1, 8, 4, 4))));
    for (double v : t.val(z1).v) CHECK(v == 0.0);
    for (double v : t.val(z2).v) CHECK(v == 0.0);

    ParamRegistry<double> reg2(6);
    FeatureRectification<double> frm0(reg2, "frm", 8, 0.0);
    Rng rng2(7);
    for (auto& p : reg2.all())
        for (double& v : p->value.v) v = rng2.normal(0.0, 0.5);
    Tensor<double> x1 = randn<double>(Shape4(1, 8, 4, 4), rng2);
    Tensor<double> x2 = randn<double>(Shape4(1, 8, 4, 4), rng2);
    auto [i1, i2] = frm0.forward(ctx, t.leaf(x1), t.leaf(x2));
    for (std::size_t i = 0; i < x1.size(); ++i) {
        CHECK(t.val(i1)[i] == x1[i]);
        CHECK(t.val(i2)[i] == x2[i]);
    }

    CHECK_THROWS_AS(frm0.forward(ctx, t.leaf(x1), t.leaf(Tensor<double>(Shape4(1, 8, 2, 2)))),
                    std::invalid_argument);
}

TEST_CASE("ffm: output dims equal input dims; bias-free config maps zeros to zeros") {
    ParamRegistry<double> reg(8);
    FeatureFusion<double> ffm(reg, "ffm", 8, 2, 2, true);
    Rng rng(9);
    for (auto& p : reg.all())
        for (double& v : p->value.v) v = rng.normal(0.0, 0.4);
    Tensor<double> x1 = randn<double>(Shape4(2, 8, 8, 8), rng);
    Tensor<double> x2 = randn<double>(Shape4(2, 8, 8, 8), rng);
    Tape<double> t;
    FwdCtx<double> ctx(t);
    int y = ffm.forward(ctx, t.leaf(x1), t.leaf(x2));
    CHECK(t.val(y).shape == Shape4(2, 8, 8, 8));
    CHECK_THROWS_AS(ffm.forward(ctx, t.leaf(x1), t.leaf(Tensor<double>(Shape4(2, 8, 4, 4)))),
                    std::invalid_argument);

    ParamRegistry<double> regb(10);
    FeatureFusion<double> nobias(regb, "ffm", 8, 2, 2, false);
    Rng rngb(11);
    for (auto& p : regb.all())
        for (double& v : p->value.v) v = rngb.normal(0.0, 0.4);
    for (auto& p : regb.all()) CHECK(p->name.find(".beta") == std::string::npos);
    int z = nobias.forward(ctx, t.leaf(Tensor<double>(Shape4(1, 8, 4, 4))),
                           t.leaf(Tensor<double>(Shape4(1, 8, 4, 4))));
    for (double v : t.val(z).v) CHECK(v == 0.0);
}

TEST_CASE("frm + ffm pair gradcheck on toy tensors") {
    ParamRegistry<double> reg(12);
    FeatureRectification<double> frm(reg, "frm", 8, 0.5);
    FeatureFusion<double> ffm(reg, "ffm", 8, 2, 1, true);
    Rng rng(13);
    for (auto& p : reg.all())
        for (double& v : p->value.v) v = rng.normal(0.0, 0.3);
    Tensor<double> x1 = randn<double>(Shape4(1, 8, 4, 4), rng);
    Tensor<double> x2 = randn<double>(Shape4(1, 8, 4, 4), rng);

    auto build = [&](FwdCtx<double>& ctx) {
        Tape<double>& t = ctx.tape;
        auto [r1, r2] = frm.forward(ctx, t.leaf(x1), t.leaf(x2));
        int f = ffm.forward(ctx, r1, r2);
        return reduce_mean_all(t, mul(t, f, f));
    };
    auto loss_value = [&]() {
        Tape<double> t;
        FwdCtx<double> ctx(t);
        return double(t.val(build(ctx)).item());
    };
    auto grads = [&]() {
        Tape<double> t;
        FwdCtx<double> ctx(t);
        t.backward(build(ctx));
        ctx.harvest();
    };
    // h = 1e-6: the modules contain relu kinks that a 1e-4 step can cross
    auto res = gradcheck<double>(reg.trainable(), loss_value, grads, 1e-6);
    CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("efm: dims preserved, widths follow the configured progression, gradcheck") {
    ParamRegistry<double> reg(14);
    std::array<int, 4> widths{24, 48, 96, 192};
    EfmBlock<double> block(reg, "efm.block", 3, widths);
    for (int i = 0; i < 4; ++i) {
        CHECK(block.convs[i].weight->value.shape.n == widths[i]);
        CHECK(block.convs[i].weight->value.shape.h == 3);
    }
    CHECK(block.resize.weight->value.shape == Shape4(3, 192, 1, 1));

    ParamRegistry<double> reg2(15);
    EarlyFusionModule<double> efm(reg2, "efm", {4, 6, 8, 12});
    Rng rng(16);
    for (auto& p : reg2.all())
        if (!p->is_buffer)
            for (double& v : p->value.v) v = rng.normal(0.0, 0.3);
    Tensor<double> a = randn<double>(Shape4(1, 3, 8, 8), rng, 0.5);
    Tensor<double> b = randn<double>(Shape4(1, 3, 8, 8), rng, 0.5);
    Tensor<double> c = randn<double>(Shape4(1, 3, 8, 8), rng, 0.5);
    Tape<double> t;
    FwdCtx<double> ctx(t);
    ctx.train_encoder = true;
    ctx.update_bn_stats = false;
    int fa = efm.forward(ctx, t.leaf(a), t.leaf(b), t.leaf(c));
    CHECK(t.val(fa).shape == Shape4(1, 3, 8, 8));
    CHECK_THROWS_AS(efm.forward(ctx, t.leaf(a), t.leaf(b), t.leaf(Tensor<double>(Shape4(1, 3, 4, 4)))),
                    std::invalid_argument);

    auto build = [&](FwdCtx<double>& cx) {
        Tape<double>& tp = cx.tape;
        int f = efm.forward(cx, tp.leaf(a), tp.leaf(b), tp.leaf(c));
        return reduce_mean_all(tp, mul(tp, f, f));
    };
    auto loss_value = [&]() {
        Tape<double> tp;
        FwdCtx<double> cx(tp);
        cx.train_encoder = true;
        cx.update_bn_stats = false;
        return double(tp.val(build(cx)).item());
    };
    auto grads = [&]() {
        Tape<double> tp;
        FwdCtx<double> cx(tp);
        cx.train_encoder = true;
        cx.update_bn_stats = false;
        tp.backward(build(cx));
        cx.harvest();
    };
    auto res = gradcheck<double>(reg2.trainable(), loss_value, grads, 1e-6);
    CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("dual-branch encode: dimension law, determinism, input validation") {
    ModelConfig cfg = tiny_config(FusionMode::SingleAux);
    Network<float> net(cfg, 7);
    Rng rng(17);
    Tensor<float> img = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tensor<float> np = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tensor<float> srm = rand01<float>(Shape4(1, 3, 64, 64), rng);

    auto run = [&] {
        Tape<float> t;
        FwdCtx<float> ctx(t);
        auto out = net.forward(ctx, img, np, srm, Phase::Eval);
        std::vector<std::vector<float>> vals;
        for (int i = 0; i < 4; ++i) vals.push_back(t.val(out.features[i]).v);
        return vals;
    };
    auto a = run();
    const int expect[4] = {16, 8, 4, 2};
    for (int i = 0; i < 4; ++i)
        CHECK(a[i].size() == std::size_t(cfg.channels[i]) * expect[i] * expect[i]);
    auto b = run();
    for (int i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < a[i].size(); ++k) CHECK(a[i][k] == b[i][k]);

    Tensor<float> bad = rand01<float>(Shape4(1, 3, 60, 64), rng);
    Tape<float> t;
    FwdCtx<float> ctx(t);
    CHECK_THROWS_AS(net.forward(ctx, bad, bad, bad, Phase::Eval), std::invalid_argument);
}

TEST_CASE("late fusion: concatenated channels are 3*C_i and rgb weight sharing is real") {
    ModelConfig cfg = tiny_config(FusionMode::Late);
    cfg.share_rgb_branch = true;
    Network<float> net(cfg, 8);
    const auto* late = net.late_encoder();
    REQUIRE(late);
    CHECK(late->enc_noiseprint.rgb_tower.get() == late->enc_srm.rgb_tower.get());
    CHECK(late->enc_srm.rgb_tower.get() == late->enc_bayar.rgb_tower.get());

    Rng rng(18);
    Tensor<float> img = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tensor<float> np = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tensor<float> srm = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tape<float> t;
    FwdCtx<float> ctx(t);
    ctx.sample_seeds = {1};
    auto out = net.forward(ctx, img, np, srm, Phase::Eval);
    const int expect[4] = {16, 8, 4, 2};
    for (int i = 0; i < 4; ++i)
        CHECK(t.val(out.features[i]).shape == Shape4(1, 3 * cfg.channels[i], expect[i], expect[i]));

    // one optimizer step moves the shared tower exactly once (same objects)
    auto shared_param = late->enc_noiseprint.rgb_tower->stages[0].embed.conv.weight;
    auto before = shared_param->value.v;
    Tape<float> t2;
    FwdCtx<float> ctx2(t2);
    ctx2.sample_seeds = {1};
    auto out2 = net.forward(ctx2, img, np, srm, Phase::Train1, -1, -1, {}, false);
    t2.backward(reduce_mean_all(t2, mul(t2, out2.features[0], out2.features[0])));
    ctx2.harvest();
    SgdOptimizer<float> opt(net.params().trainable(), 0.9, 0.0);
    opt.step(0.1);
    CHECK(late->enc_srm.rgb_tower->stages[0].embed.conv.weight->value.v != before);
    CHECK(late->enc_srm.rgb_tower->stages[0].embed.conv.weight.get() == shared_param.get());

    // disabling sharing produces distinct towers
    ModelConfig cfg2 = tiny_config(FusionMode::Late);
    cfg2.share_rgb_branch = false;
    Network<float> net2(cfg2, 8);
    CHECK(net2.late_encoder()->enc_noiseprint.rgb_tower.get() !=
          net2.late_encoder()->enc_srm.rgb_tower.get());
}

TEST_CASE("late fusion dropout: inference is deterministic, training drops per sample") {
    ModelConfig cfg = tiny_config(FusionMode::Late);
    cfg.dropout_rate = 0.5;
    Network<float> net(cfg, 9);
    Rng rng(19);
    Tensor<float> img = rand01<float>(Shape4(2, 3, 32, 32), rng);
    Tensor<float> np = rand01<float>(Shape4(2, 3, 32, 32), rng);
    Tensor<float> srm = rand01<float>(Shape4(2, 3, 32, 32), rng);

    auto infer = [&] {
        Tape<float> t;
        FwdCtx<float> ctx(t);
        ctx.sample_seeds = {11, 22};
        auto out = net.forward(ctx, img, np, srm, Phase::Eval);
        return t.val(out.features[0]).v;
    };
    auto a = infer(), b = infer();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    Tape<float> t;
    FwdCtx<float> ctx(t);
    ctx.sample_seeds = {11, 22};
    auto out = net.forward(ctx, img, np, srm, Phase::Train1, -1, -1, {}, false);
    int zeros = 0;
    for (float v : t.val(out.features[0]).v) zeros += v == 0.0f ? 1 : 0;
    CHECK(zeros > int(t.val(out.features[0]).size() / 4));  // rate 0.5 drops plenty
}

TEST_CASE("full-profile early-fusion model lands at 68.9M parameters within 2%") {
    ModelConfig cfg = ModelConfig::full();
    cfg.fusion = FusionMode::Early;
    Network<float> net(cfg, 0);
    const double millions = double(net.params().count_trainable_scalars()) / 1e6;
    CHECK(millions >= 68.9 * 0.98);
    CHECK(millions <= 68.9 * 1.02);
}

TEST_CASE("early fusion: masking residuals changes features (non-degeneracy)") {
    ModelConfig cfg = tiny_config(FusionMode::Early);
    Network<float> net(cfg, 10);
    Rng rng(20);
    Tensor<float> img = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tensor<float> np = rand01<float>(Shape4(1, 3, 64, 64), rng);
    Tensor<float> srm = rand01<float>(Shape4(1, 3, 64, 64), rng);

    Tape<float> t;
    FwdCtx<float> ctx(t);
    auto base = net.forward(ctx, img, np, srm, Phase::Eval);
    ResidualOverrides<float> over;
    over.noiseprint = Tensor<float>(Shape4(1, 3, 64, 64));
    over.srm = Tensor<float>(Shape4(1, 3, 64, 64));
    over.bayar = Tensor<float>(Shape4(1, 3, 64, 64));
    Tape<float> t2;
    FwdCtx<float> ctx2(t2);
    auto masked = net.forward(ctx2, img, np, srm, Phase::Eval, -1, -1, over);
    bool differs = false;
    for (std::size_t i = 0; i < t.val(base.features[0]).size(); ++i)
        if (t.val(base.features[0])[i] != t2.val(masked.features[0])[i]) differs = true;
    CHECK(differs);
}
