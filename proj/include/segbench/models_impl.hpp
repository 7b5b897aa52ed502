#pragma once

// Template implementation detail of models.hpp.

namespace segbench::models {

namespace layers {

// depthwise 3x3 stride-2 + BN + ReLU, then pointwise 1x1 + BN + ReLU.
template <class T>
class DWSepBlock {
public:
    DWSepBlock() = default;
    DWSepBlock(nn::ParamStore<T>& s, const std::string& name, int in_c, int out_c, int stride)
        : dw_(s, name + ".dw", in_c, 3, stride, 1, false),
          dw_bn_(s, name + ".dw.bn", in_c),
          pw_(s, name + ".pw", in_c, out_c, 1, 1, 0, false),
          pw_bn_(s, name + ".pw.bn", out_c) {}
    nn::Var<T> operator()(FwdCtx<T>& c, const nn::Var<T>& x) const {
        auto y = nn::relu(*c.tape, dw_bn_(c, dw_(c, x)));
        return nn::relu(*c.tape, pw_bn_(c, pw_(c, y)));
    }

private:
    DepthwiseConv2d<T> dw_;
    BatchNorm2d<T> dw_bn_;
    Conv2d<T> pw_;
    BatchNorm2d<T> pw_bn_;
};

} // namespace layers

// ---- encoders ---------------------------------------------------------------

template <class T>
class PlainEncoder : public Encoder<T> {
public:
    PlainEncoder(nn::ParamStore<T>& s, int depth, double ws, int in_c) {
        this->chs_ = encoder_channels(EncoderFamily::PlainConvStack, depth, ws);
        int cin = in_c;
        for (int i = 0; i < depth; ++i) {
            const std::string p = "encoder.s" + std::to_string(i + 1);
            conv1_.emplace_back(s, p + ".conv1", cin, this->chs_[i], 3, 1, 1, true);
            conv2_.emplace_back(s, p + ".conv2", this->chs_[i], this->chs_[i], 3, 1, 1, true);
            cin = this->chs_[i];
        }
    }
    std::vector<nn::Var<T>> apply(FwdCtx<T>& c, const nn::Var<T>& x) const override {
        std::vector<nn::Var<T>> feats;
        auto h = x;
        for (size_t i = 0; i < conv1_.size(); ++i) {
            h = nn::relu(*c.tape, conv1_[i](c, h));
            h = nn::relu(*c.tape, conv2_[i](c, h));
            h = nn::max_pool2d(*c.tape, h, 2, 2);
            feats.push_back(h);
        }
        return feats;
    }

private:
    std::vector<layers::Conv2d<T>> conv1_, conv2_;
};

template <class T>
class ResidualEncoder : public Encoder<T> {
public:
    ResidualEncoder(nn::ParamStore<T>& s, int depth, double ws, int in_c) {
        this->chs_ = encoder_channels(EncoderFamily::Residual, depth, ws);
        int cin = in_c;
        for (int i = 0; i < depth; ++i) {
            const std::string p = "encoder.s" + std::to_string(i + 1);
            down_.emplace_back(s, p + ".down", cin, this->chs_[i], 3, 2, 1, true, true);
            conv_a_.emplace_back(s, p + ".conv_a", this->chs_[i], this->chs_[i], 3, 1, 1, true,
                                 true);
            conv_b_.emplace_back(s, p + ".conv_b", this->chs_[i], this->chs_[i], 3, 1, 1, true,
                                 false);
            cin = this->chs_[i];
        }
    }
    std::vector<nn::Var<T>> apply(FwdCtx<T>& c, const nn::Var<T>& x) const override {
        std::vector<nn::Var<T>> feats;
        auto h = x;
        for (size_t i = 0; i < down_.size(); ++i) {
            auto y = down_[i](c, h);
            auto r = conv_b_[i](c, conv_a_[i](c, y));
            h = nn::relu(*c.tape, nn::add(*c.tape, y, r));
            feats.push_back(h);
        }
        return feats;
    }

private:
    std::vector<layers::ConvBlock<T>> down_, conv_a_, conv_b_;
};

template <class T>
class DenseEncoder : public Encoder<T> {
public:
    DenseEncoder(nn::ParamStore<T>& s, int depth, double ws, int in_c) {
        this->chs_ = encoder_channels(EncoderFamily::DenselyConnected, depth, ws);
        const int k = dense_growth(ws);
        growth_ = k;
        int cin = in_c;
        for (int i = 0; i < depth; ++i) {
            const std::string p = "encoder.s" + std::to_string(i + 1);
            l1_bn_.emplace_back(s, p + ".dense1.bn", cin);
            l1_conv_.emplace_back(s, p + ".dense1", cin, k, 3, 1, 1, false);
            l2_bn_.emplace_back(s, p + ".dense2.bn", cin + k);
            l2_conv_.emplace_back(s, p + ".dense2", cin + k, k, 3, 1, 1, false);
            t_bn_.emplace_back(s, p + ".trans.bn", cin + 2 * k);
            t_conv_.emplace_back(s, p + ".trans", cin + 2 * k, this->chs_[i], 1, 1, 0, false);
            cin = this->chs_[i];
        }
    }
    std::vector<nn::Var<T>> apply(FwdCtx<T>& c, const nn::Var<T>& x) const override {
        std::vector<nn::Var<T>> feats;
        auto h = x;
        for (size_t i = 0; i < l1_conv_.size(); ++i) {
            auto a = l1_conv_[i](c, nn::relu(*c.tape, l1_bn_[i](c, h)));
            auto h1 = nn::channel_concat(*c.tape, {h, a});
            auto b = l2_conv_[i](c, nn::relu(*c.tape, l2_bn_[i](c, h1)));
            auto h2 = nn::channel_concat(*c.tape, {h1, b});
            auto t = t_conv_[i](c, nn::relu(*c.tape, t_bn_[i](c, h2)));
            h = nn::adaptive_avg_pool2d(*c.tape, t, t->val.h / 2, t->val.w / 2);
            feats.push_back(h);
        }
        return feats;
    }

private:
    int growth_ = 0;
    std::vector<layers::BatchNorm2d<T>> l1_bn_, l2_bn_, t_bn_;
    std::vector<layers::Conv2d<T>> l1_conv_, l2_conv_, t_conv_;
};

template <class T>
class DWSepEncoder : public Encoder<T> {
public:
    DWSepEncoder(nn::ParamStore<T>& s, int depth, double ws, int in_c) {
        this->chs_ = encoder_channels(EncoderFamily::DepthwiseSeparable, depth, ws);
        int cin = in_c;
        for (int i = 0; i < depth; ++i) {
            const std::string p = "encoder.s" + std::to_string(i + 1);
            blocks_.emplace_back(s, p, cin, this->chs_[i], 2);
            cin = this->chs_[i];
        }
    }
    std::vector<nn::Var<T>> apply(FwdCtx<T>& c, const nn::Var<T>& x) const override {
        std::vector<nn::Var<T>> feats;
        auto h = x;
        for (const auto& b : blocks_) {
            h = b(c, h);
            feats.push_back(h);
        }
        return feats;
    }

private:
    std::vector<layers::DWSepBlock<T>> blocks_;
};

template <class T>
std::unique_ptr<Encoder<T>> make_encoder(nn::ParamStore<T>& store, const EncoderConfig& cfg,
                                         int in_channels) {
    switch (cfg.family) {
    case EncoderFamily::PlainConvStack:
        return std::make_unique<PlainEncoder<T>>(store, cfg.depth, cfg.width_scale, in_channels);
    case EncoderFamily::Residual:
        return std::make_unique<ResidualEncoder<T>>(store, cfg.depth, cfg.width_scale,
                                                    in_channels);
    case EncoderFamily::DenselyConnected:
        return std::make_unique<DenseEncoder<T>>(store, cfg.depth, cfg.width_scale, in_channels);
    case EncoderFamily::DepthwiseSeparable:
        return std::make_unique<DWSepEncoder<T>>(store, cfg.depth, cfg.width_scale, in_channels);
    }
    throw ConfigError("unknown encoder family");
}

// ---- decoders ---------------------------------------------------------------

// Upsample, concatenate the same-resolution encoder feature, convolve.
template <class T>
class UnetDecoder : public Decoder<T> {
public:
    UnetDecoder(nn::ParamStore<T>& s, const std::vector<int>& enc_chs, double ws) {
        const int depth = static_cast<int>(enc_chs.size());
        dec_chs_ = unet_decoder_channels(depth, ws);
        int prev = enc_chs.back();
        for (int j = 0; j < depth; ++j) {
            const int level = depth - 1 - j; // feature level merged at block j (0 = none)
            const int skip = level >= 1 ? enc_chs[level - 1] : 0;
            const std::string p = "decoder.b" + std::to_string(j + 1);
            conv1_.emplace_back(s, p + ".conv1", prev + skip, dec_chs_[j], 3, 1, 1, true, true);
            conv2_.emplace_back(s, p + ".conv2", dec_chs_[j], dec_chs_[j], 3, 1, 1, true, true);
            prev = dec_chs_[j];
        }
        head_ = layers::Conv2d<T>(s, "head.conv", prev, 1, 3, 1, 1, true);
    }
    nn::Var<T> apply(FwdCtx<T>& c, const nn::Var<T>&,
                     const std::vector<nn::Var<T>>& feats) const override {
        const int depth = static_cast<int>(feats.size());
        auto d = feats.back();
        for (int j = 0; j < depth; ++j) {
            d = nn::upsample_nearest2x(*c.tape, d);
            const int level = depth - 1 - j;
            if (level >= 1) d = nn::channel_concat(*c.tape, {d, feats[level - 1]});
            d = conv2_[j](c, conv1_[j](c, d));
        }
        return nn::sigmoid(*c.tape, head_(c, d));
    }

private:
    std::vector<int> dec_chs_;
    std::vector<layers::ConvBlock<T>> conv1_, conv2_;
    layers::Conv2d<T> head_;
};

// Bottleneck-style blocks merged with encoder features by addition.
template <class T>
class LinknetDecoder : public Decoder<T> {
public:
    LinknetDecoder(nn::ParamStore<T>& s, const std::vector<int>& enc_chs, double ws) {
        const int depth = static_cast<int>(enc_chs.size());
        for (int j = depth; j >= 2; --j) {
            const int cin = enc_chs[j - 1];
            const int mid = std::max(1, cin / 4);
            const std::string p = "decoder.b" + std::to_string(j);
            squeeze_.emplace_back(s, p + ".squeeze", cin, mid, 1, 1, 0, true, true);
            expand_.emplace_back(s, p + ".expand", mid, enc_chs[j - 2], 3, 1, 1, true, false);
        }
        const int c1 = enc_chs[0];
        const int mid = std::max(1, c1 / 4);
        final_ch_ = linknet_final_channels(ws);
        final_squeeze_ = layers::ConvBlock<T>(s, "decoder.final.squeeze", c1, mid, 1, 1, 0, true,
                                              true);
        final_expand_ = layers::ConvBlock<T>(s, "decoder.final.expand", mid, final_ch_, 3, 1, 1,
                                             true, true);
        head_ = layers::Conv2d<T>(s, "head.conv", final_ch_, 1, 3, 1, 1, true);
    }
    nn::Var<T> apply(FwdCtx<T>& c, const nn::Var<T>&,
                     const std::vector<nn::Var<T>>& feats) const override {
        const int depth = static_cast<int>(feats.size());
        auto d = feats.back();
        for (int j = depth; j >= 2; --j) {
            const size_t bi = static_cast<size_t>(depth - j);
            auto y = squeeze_[bi](c, d);
            y = nn::upsample_nearest2x(*c.tape, y);
            y = expand_[bi](c, y);
            d = nn::relu(*c.tape, nn::add(*c.tape, y, feats[j - 2]));
        }
        auto y = final_squeeze_(c, d);
        y = nn::upsample_nearest2x(*c.tape, y);
        y = final_expand_(c, y);
        return nn::sigmoid(*c.tape, head_(c, y));
    }

private:
    int final_ch_ = 0;
    std::vector<layers::ConvBlock<T>> squeeze_, expand_;
    layers::ConvBlock<T> final_squeeze_, final_expand_;
    layers::Conv2d<T> head_;
};

// 1x1 laterals, additive top-down pathway, per-level segmentation blocks
// merged by addition. No batch norm anywhere in the head.
template <class T>
class FpnDecoder : public Decoder<T> {
public:
    FpnDecoder(nn::ParamStore<T>& s, const std::vector<int>& enc_chs, double ws) {
        const int depth = static_cast<int>(enc_chs.size());
        first_level_ = std::max(1, depth - 3);
        pc_ = fpn_pyramid_channels(ws);
        sc_ = fpn_segmentation_channels(ws);
        for (int j = first_level_; j <= depth; ++j) {
            const std::string p = "decoder.p" + std::to_string(j);
            lateral_.emplace_back(s, p + ".lateral", enc_chs[j - 1], pc_, 1, 1, 0, true);
            seg_.emplace_back(s, p + ".seg", pc_, sc_, 3, 1, 1, true);
        }
        head_ = layers::Conv2d<T>(s, "head.conv", sc_, 1, 1, 1, 0, true);
    }
    nn::Var<T> apply(FwdCtx<T>& c, const nn::Var<T>& input,
                     const std::vector<nn::Var<T>>& feats) const override {
        const int depth = static_cast<int>(feats.size());
        const int levels = depth - first_level_ + 1;
        std::vector<nn::Var<T>> pyr(levels);
        for (int j = depth; j >= first_level_; --j) {
            const size_t li = static_cast<size_t>(j - first_level_);
            auto lat = lateral_[li](c, feats[j - 1]);
            pyr[li] = (j == depth) ? lat
                                   : nn::add(*c.tape, lat,
                                             nn::upsample_nearest2x(*c.tape, pyr[li + 1]));
        }
        const int fh = pyr[0]->val.h, fw = pyr[0]->val.w;
        nn::Var<T> merged;
        for (int li = 0; li < levels; ++li) {
            auto sg = nn::relu(*c.tape, seg_[li](c, pyr[li]));
            if (sg->val.h != fh || sg->val.w != fw)
                sg = nn::bilinear_resize(*c.tape, sg, fh, fw);
            merged = merged ? nn::add(*c.tape, merged, sg) : sg;
        }
        merged = nn::dropout(*c.tape, merged, kFpnDropout, c.dropout_rng.split(drop_salt_),
                             c.training());
        auto logits = head_(c, merged);
        logits = nn::bilinear_resize(*c.tape, logits, input->val.h, input->val.w);
        return nn::sigmoid(*c.tape, logits);
    }

private:
    int first_level_ = 1, pc_ = 0, sc_ = 0;
    static constexpr uint64_t drop_salt_ = 101;
    std::vector<layers::Conv2d<T>> lateral_, seg_;
    layers::Conv2d<T> head_;
};

// Pyramid pooling over the final encoder map, then a single fused block.
template <class T>
class PspDecoder : public Decoder<T> {
public:
    PspDecoder(nn::ParamStore<T>& s, const std::vector<int>& enc_chs, double ws) {
        const int cd = enc_chs.back();
        branch_ch_ = std::max(1, cd / 4);
        out_ch_ = pspnet_output_channels(ws);
        for (int bi = 0; bi < 4; ++bi) {
            const std::string p = "decoder.pool" + std::to_string(kPspBins[bi]);
            branch_.emplace_back(s, p, cd, branch_ch_, 1, 1, 0, true, true);
        }
        merge_ = layers::ConvBlock<T>(s, "decoder.merge", cd + 4 * branch_ch_, out_ch_, 3, 1, 1,
                                      true, true);
        head_ = layers::Conv2d<T>(s, "head.conv", out_ch_, 1, 1, 1, 0, true);
    }
    nn::Var<T> apply(FwdCtx<T>& c, const nn::Var<T>& input,
                     const std::vector<nn::Var<T>>& feats) const override {
        auto f = feats.back();
        std::vector<nn::Var<T>> cat{f};
        for (int bi = 0; bi < 4; ++bi) {
            auto g = nn::adaptive_avg_pool2d(*c.tape, f, kPspBins[bi], kPspBins[bi]);
            g = branch_[bi](c, g);
            cat.push_back(nn::bilinear_resize(*c.tape, g, f->val.h, f->val.w));
        }
        auto m = merge_(c, nn::channel_concat(*c.tape, cat));
        m = nn::dropout(*c.tape, m, kPspDropout, c.dropout_rng.split(drop_salt_), c.training());
        auto logits = head_(c, m);
        logits = nn::bilinear_resize(*c.tape, logits, input->val.h, input->val.w);
        return nn::sigmoid(*c.tape, logits);
    }

private:
    int branch_ch_ = 0, out_ch_ = 0;
    static constexpr uint64_t drop_salt_ = 211;
    std::vector<layers::ConvBlock<T>> branch_;
    layers::ConvBlock<T> merge_;
    layers::Conv2d<T> head_;
};

// ---- model ------------------------------------------------------------------

template <class T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.encoder.depth != 3 && cfg.encoder.depth != 5)
        throw ConfigError("encoder depth must be 3 or 5, got " +
                          std::to_string(cfg.encoder.depth));
    if (!(cfg.encoder.width_scale > 0))
        throw ConfigError("width_scale must be positive");
    encoder_ = make_encoder<T>(store_, cfg.encoder, 1);
    switch (cfg.architecture) {
    case Architecture::Unet:
        decoder_ = std::make_unique<UnetDecoder<T>>(store_, encoder_->chs(),
                                                    cfg.encoder.width_scale);
        break;
    case Architecture::Linknet:
        decoder_ = std::make_unique<LinknetDecoder<T>>(store_, encoder_->chs(),
                                                       cfg.encoder.width_scale);
        break;
    case Architecture::FPN:
        decoder_ = std::make_unique<FpnDecoder<T>>(store_, encoder_->chs(),
                                                   cfg.encoder.width_scale);
        break;
    case Architecture::PSPNet:
        decoder_ = std::make_unique<PspDecoder<T>>(store_, encoder_->chs(),
                                                   cfg.encoder.width_scale);
        break;
    }
}

template <class T>
nn::Var<T> Model<T>::forward(FwdCtx<T>& ctx, const nn::Var<T>& x) const {
    if (x->val.c != 1)
        throw ShapeError("model input must be single-channel, got " + x->val.shape_str());
    validate_input_shape(cfg_, x->val.h, x->val.w);
    auto feats = encoder_->apply(ctx, x);
    return decoder_->apply(ctx, x, feats);
}

template <class T>
nn::Tensor4<T> Model<T>::predict(const nn::Tensor4<T>& x) const {
    nn::Tape<T> tape;
    FwdCtx<T> ctx;
    ctx.tape = &tape;
    ctx.store = const_cast<nn::ParamStore<T>*>(&store_); // eval path never mutates
    ctx.mode = RunMode::Eval;
    auto out = forward(ctx, tape.leaf(x));
    return out->val;
}

} // namespace segbench::models
