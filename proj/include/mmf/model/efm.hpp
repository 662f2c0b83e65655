#pragma once

#include "mmf/nn/layers.hpp"

namespace mmf {

// One early-fusion convolutional block: four 3x3 convolutions (stride 1,
// padding 1), each followed by BN and ReLU, then a 1x1 convolution resizing
// the output to 3 channels. Spatial dims are preserved throughout.
template <typename T>
struct EfmBlock {
    std::vector<Conv2d<T>> convs;
    std::vector<BatchNorm2d<T>> norms;
    Conv2d<T> resize;

    EfmBlock() = default;
    EfmBlock(ParamRegistry<T>& reg, const std::string& name, int cin,
             const std::array<int, 4>& widths) {
        int c = cin;
        for (int i = 0; i < 4; ++i) {
            convs.emplace_back(reg, name + ".conv" + std::to_string(i), c, widths[i], 3, 1, 1);
            norms.emplace_back(reg, name + ".bn" + std::to_string(i), widths[i]);
            c = widths[i];
        }
        resize = Conv2d<T>(reg, name + ".resize", c, 3, 1, 1, 0);
    }

    int forward(FwdCtx<T>& ctx, int x) const {
        for (std::size_t i = 0; i < convs.size(); ++i)
            x = relu(ctx.tape, norms[i].forward(ctx, convs[i].forward(ctx, x)));
        return resize.forward(ctx, x);
    }
};

// Early Fusion Module: one block per auxiliary modality plus a final mixing
// block over their concatenated outputs; produces the 3-channel mixed
// auxiliary input f_a with the residuals' spatial dims.
template <typename T>
struct EarlyFusionModule {
    EfmBlock<T> block_noiseprint, block_srm, block_bayar, block_mix;

    EarlyFusionModule() = default;
    EarlyFusionModule(ParamRegistry<T>& reg, const std::string& name,
                      const std::array<int, 4>& widths) {
        block_noiseprint = EfmBlock<T>(reg, name + ".noiseprint", 3, widths);
        block_srm = EfmBlock<T>(reg, name + ".srm", 3, widths);
        block_bayar = EfmBlock<T>(reg, name + ".bayar", 3, widths);
        block_mix = EfmBlock<T>(reg, name + ".mix", 9, widths);
    }

    int forward(FwdCtx<T>& ctx, int r_noiseprint, int r_srm, int r_bayar) const {
        Tape<T>& t = ctx.tape;
        const Shape4 s = t.val(r_noiseprint).shape;
        check_same_shape(t.val(r_noiseprint), t.val(r_srm), "efm_mix");
        check_same_shape(t.val(r_noiseprint), t.val(r_bayar), "efm_mix");
        if (s.c != 3) throw std::invalid_argument("efm_mix: residuals must have 3 channels");
        int a = block_noiseprint.forward(ctx, r_noiseprint);
        int b = block_srm.forward(ctx, r_srm);
        int c = block_bayar.forward(ctx, r_bayar);
        return block_mix.forward(ctx, concat_channels(t, {a, b, c}));
    }
};

}  // namespace mmf
