#include "gdc/network.hpp"

#include <fmt/format.h>

#include <sstream>

#include "gdc/errors.hpp"

namespace gdc {

const char* to_string(FusionScheme s) {
    switch (s) {
        case FusionScheme::DE_Guided: return "DE_Guided";
        case FusionScheme::EE_Guided: return "EE_Guided";
        case FusionScheme::DD_Guided: return "DD_Guided";
        case FusionScheme::Add: return "Add";
        case FusionScheme::Concat: return "Concat";
        case FusionScheme::FirstGuide: return "FirstGuide";
        case FusionScheme::LastGuide: return "LastGuide";
    }
    return "?";
}

FusionScheme parse_fusion_scheme(const std::string& name) {
    for (FusionScheme s : all_fusion_schemes()) {
        if (name == to_string(s)) return s;
    }
    throw ValueError(fmt::format("unknown fusion scheme '{}'", name));
}

std::vector<FusionScheme> all_fusion_schemes() {
    return {FusionScheme::DE_Guided, FusionScheme::EE_Guided, FusionScheme::DD_Guided,
            FusionScheme::Add,       FusionScheme::Concat,    FusionScheme::FirstGuide,
            FusionScheme::LastGuide};
}

void NetConfig::validate() const {
    if (stage_count < 1) throw ValueError("NetConfig: stage_count must be >= 1");
    if (static_cast<int>(channels_per_stage.size()) != stage_count) {
        throw ValueError(fmt::format("NetConfig: {} channel entries for {} stages",
                                     channels_per_stage.size(), stage_count));
    }
    for (int c : channels_per_stage) {
        if (c <= 0) throw ValueError("NetConfig: channels must be positive");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ValueError("NetConfig: kernel_size must be odd and positive");
    }
    const int div = 1 << stage_count;
    if (input_height <= 0 || input_width <= 0 || input_height % div != 0 ||
        input_width % div != 0) {
        throw ValueError(fmt::format(
            "NetConfig: resolution {}x{} must be a positive multiple of {} for {} stages",
            input_height, input_width, div, stage_count));
    }
    if (image_channels <= 0) throw ValueError("NetConfig: image_channels must be positive");
}

std::string NetConfig::to_kv() const {
    std::string ch;
    for (std::size_t i = 0; i < channels_per_stage.size(); ++i) {
        ch += (i ? "," : "") + std::to_string(channels_per_stage[i]);
    }
    return fmt::format(
        "stage_count={}\nchannels={}\nkernel_size={}\nfusion={}\ninput_height={}\n"
        "input_width={}\nimage_channels={}\n",
        stage_count, ch, kernel_size, to_string(fusion), input_height, input_width,
        image_channels);
}

NetConfig NetConfig::from_kv(const std::string& text) {
    NetConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValueError("NetConfig: bad line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "stage_count") {
            c.stage_count = std::stoi(val);
        } else if (key == "channels") {
            c.channels_per_stage.clear();
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ',')) c.channels_per_stage.push_back(std::stoi(tok));
        } else if (key == "kernel_size") {
            c.kernel_size = std::stoi(val);
        } else if (key == "fusion") {
            c.fusion = parse_fusion_scheme(val);
        } else if (key == "input_height") {
            c.input_height = std::stoi(val);
        } else if (key == "input_width") {
            c.input_width = std::stoi(val);
        } else if (key == "image_channels") {
            c.image_channels = std::stoi(val);
        } else {
            throw ValueError("NetConfig: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

// --- ParamBank -------------------------------------------------------------------

template <typename T>
Tensor<T> ParamBank<T>::add_param(const std::string& name, Shape4 shape, RngStream& rng,
                                  int fan_in) {
    Tensor<T> t = Tensor<T>::zeros(shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    t.set_requires_grad(true);
    params.emplace_back(name, t);
    return t;
}

template <typename T>
Tensor<T> ParamBank<T>::add_const_param(const std::string& name, Shape4 shape, T fill) {
    Tensor<T> t = Tensor<T>::full(shape, fill);
    t.set_requires_grad(true);
    params.emplace_back(name, t);
    return t;
}

template <typename T>
Tensor<T> ParamBank<T>::add_buffer(const std::string& name, Shape4 shape, T fill) {
    Tensor<T> t = Tensor<T>::full(shape, fill);
    buffers.emplace_back(name, t);
    return t;
}

template <typename T>
std::int64_t ParamBank<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

// --- Builder ----------------------------------------------------------------------

namespace {

template <typename T>
ConvLayer<T> make_conv(ParamBank<T>& bank, RngStream& rng, const std::string& name, int ci,
                       int co, int k, int stride, int pad) {
    ConvLayer<T> l;
    l.w = bank.add_param(name + ".w", {co, ci, k, k}, rng, ci * k * k);
    l.b = bank.add_const_param(name + ".b", {1, co, 1, 1}, T(0));
    l.stride = stride;
    l.pad = pad;
    return l;
}

template <typename T>
DeconvLayer<T> make_deconv(ParamBank<T>& bank, RngStream& rng, const std::string& name, int ci,
                           int co, int k, int stride, int pad) {
    DeconvLayer<T> l;
    l.w = bank.add_param(name + ".w", {ci, co, k, k}, rng, ci * k * k);
    l.b = bank.add_const_param(name + ".b", {1, co, 1, 1}, T(0));
    l.stride = stride;
    l.pad = pad;
    return l;
}

template <typename T>
BatchNormLayer<T> make_bn(ParamBank<T>& bank, const std::string& name, int c) {
    BatchNormLayer<T> l;
    l.gamma = bank.add_const_param(name + ".gamma", {1, c, 1, 1}, T(1));
    l.beta = bank.add_const_param(name + ".beta", {1, c, 1, 1}, T(0));
    l.run_mean = bank.add_buffer(name + ".run_mean", {1, c, 1, 1}, T(0));
    l.run_var = bank.add_buffer(name + ".run_var", {1, c, 1, 1}, T(1));
    return l;
}

template <typename T>
ResBlockLayer<T> make_resblock(ParamBank<T>& bank, RngStream& rng, const std::string& name,
                               int c) {
    ResBlockLayer<T> l;
    l.conv1 = make_conv<T>(bank, rng, name + ".conv1", c, c, 3, 1, 1);
    l.bn1 = make_bn<T>(bank, name + ".bn1", c);
    l.conv2 = make_conv<T>(bank, rng, name + ".conv2", c, c, 3, 1, 1);
    l.bn2 = make_bn<T>(bank, name + ".bn2", c);
    return l;
}

template <typename T>
GuidedConvParams<T> make_guided(ParamBank<T>& bank, RngStream& rng, const std::string& name,
                                int image_channels, int m, int n, int k) {
    GuidedConvParams<T> p;
    p.M = m;
    p.N = n;
    p.K = k;
    const int kg = 3;  // kernel-generating convolution size
    p.kgl_weight = bank.add_param(name + ".kgl.w", {m * k * k, image_channels, kg, kg}, rng,
                                  image_channels * kg * kg);
    p.kgl_bias = bank.add_const_param(name + ".kgl.b", {1, m * k * k, 1, 1}, T(0));
    p.fc_weight =
        bank.add_param(name + ".fc.w", {m * n, image_channels, 1, 1}, rng, image_channels);
    p.fc_bias = bank.add_const_param(name + ".fc.b", {1, m * n, 1, 1}, T(0));
    return p;
}

FusionKind fusion_kind_at(FusionScheme scheme, int stage, int stage_count) {
    switch (scheme) {
        case FusionScheme::DE_Guided:
        case FusionScheme::EE_Guided:
        case FusionScheme::DD_Guided: return FusionKind::Guided;
        case FusionScheme::Add: return FusionKind::Add;
        case FusionScheme::Concat: return FusionKind::Concat;
        case FusionScheme::FirstGuide:
            return stage == 0 ? FusionKind::Guided : FusionKind::Concat;
        case FusionScheme::LastGuide:
            return stage == stage_count - 1 ? FusionKind::Guided : FusionKind::Concat;
    }
    return FusionKind::Add;
}

}  // namespace

template <typename T>
Model<T> build(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    Model<T> m;
    m.config = config;
    RngStream rng(seed, "model-init");
    const auto& ch = config.channels_per_stage;
    const int s = config.stage_count;

    m.g_stem_conv = make_conv<T>(m.bank, rng, "guide.stem.conv", config.image_channels, ch[0], 3,
                                 1, 1);
    m.g_stem_bn = make_bn<T>(m.bank, "guide.stem.bn", ch[0]);
    for (int i = 0; i < s; ++i) {
        const int ci = i == 0 ? ch[0] : ch[i - 1];
        m.g_down.push_back(make_conv<T>(m.bank, rng, fmt::format("guide.down{}.conv", i), ci,
                                        ch[i], 3, 2, 1));
        m.g_down_bn.push_back(make_bn<T>(m.bank, fmt::format("guide.down{}.bn", i), ch[i]));
        m.g_enc.push_back(make_resblock<T>(m.bank, rng, fmt::format("guide.enc{}", i), ch[i]));
    }
    if (config.fusion != FusionScheme::EE_Guided) {
        // Decoder ResBlocks: index s-1 is the bottleneck, 0..s-2 follow the
        // upsampling path.
        m.g_dec.resize(s);
        m.g_up.resize(s - 1);
        m.g_up_bn.resize(s - 1);
        m.g_dec[s - 1] = make_resblock<T>(m.bank, rng, fmt::format("guide.dec{}", s - 1),
                                          ch[s - 1]);
        for (int i = s - 2; i >= 0; --i) {
            m.g_up[i] = make_deconv<T>(m.bank, rng, fmt::format("guide.up{}", i), ch[i + 1],
                                       ch[i], 2, 2, 0);
            m.g_up_bn[i] = make_bn<T>(m.bank, fmt::format("guide.up{}.bn", i), ch[i]);
            m.g_dec[i] = make_resblock<T>(m.bank, rng, fmt::format("guide.dec{}", i), ch[i]);
        }
    }

    m.d_stem_conv = make_conv<T>(m.bank, rng, "depth.stem.conv", 1, ch[0], 3, 1, 1);
    m.d_stem_bn = make_bn<T>(m.bank, "depth.stem.bn", ch[0]);
    for (int i = 0; i < s; ++i) {
        const int ci = i == 0 ? ch[0] : ch[i - 1];
        m.d_down.push_back(make_conv<T>(m.bank, rng, fmt::format("depth.down{}.conv", i), ci,
                                        ch[i], 3, 2, 1));
        m.d_down_bn.push_back(make_bn<T>(m.bank, fmt::format("depth.down{}.bn", i), ch[i]));
        m.d_enc.push_back(make_resblock<T>(m.bank, rng, fmt::format("depth.enc{}", i), ch[i]));
    }

    m.fusion_kinds.resize(s);
    m.fuse_guided.resize(s);
    m.fuse_proj.resize(s);
    for (int i = 0; i < s; ++i) {
        m.fusion_kinds[i] = fusion_kind_at(config.fusion, i, s);
        if (m.fusion_kinds[i] == FusionKind::Guided) {
            m.fuse_guided[i] = make_guided<T>(m.bank, rng, fmt::format("depth.fuse{}", i), ch[i],
                                              ch[i], ch[i], config.kernel_size);
        } else if (m.fusion_kinds[i] == FusionKind::Concat) {
            m.fuse_proj[i] = make_conv<T>(m.bank, rng, fmt::format("depth.fuse{}.proj", i),
                                          2 * ch[i], ch[i], 1, 1, 0);
        }
    }

    m.d_up.resize(s - 1);
    m.d_up_bn.resize(s - 1);
    m.d_dec.resize(std::max(0, s - 1));
    for (int i = s - 2; i >= 0; --i) {
        m.d_up[i] = make_deconv<T>(m.bank, rng, fmt::format("depth.up{}", i), ch[i + 1], ch[i],
                                   2, 2, 0);
        m.d_up_bn[i] = make_bn<T>(m.bank, fmt::format("depth.up{}.bn", i), ch[i]);
        m.d_dec[i] = make_resblock<T>(m.bank, rng, fmt::format("depth.dec{}", i), ch[i]);
    }
    m.d_final_up = make_deconv<T>(m.bank, rng, "depth.final_up", ch[0], ch[0], 2, 2, 0);
    m.d_final_bn = make_bn<T>(m.bank, "depth.final_up.bn", ch[0]);
    m.d_head = make_conv<T>(m.bank, rng, "depth.head.conv", ch[0], 1, 3, 1, 1);
    return m;
}

// --- Forward ------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> apply_fusion(Model<T>& m, int stage, const std::string& src_name,
                       const Tensor<T>& guide_feat, const Tensor<T>& depth_feat,
                       const std::string& dest_name, bool /*training*/) {
    Tensor<T> out;
    const FusionKind kind = m.fusion_kinds[stage];
    switch (kind) {
        case FusionKind::Guided:
            out = guided_module_forward(guide_feat, depth_feat, m.fuse_guided[stage]);
            break;
        case FusionKind::Add:
            out = add(guide_feat, depth_feat);
            break;
        case FusionKind::Concat:
            out = m.fuse_proj[stage](concat_channels(guide_feat, depth_feat));
            break;
    }
    m.trace.fusions.push_back(
        {stage, src_name, dest_name, kind, guide_feat.id(), out.id()});
    return out;
}

}  // namespace

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& image, const Tensor<T>& sparse, bool training) {
    const Shape4 is = image.shape();
    const Shape4 ss = sparse.shape();
    if (is.c != config.image_channels || ss.c != 1 || is.n != ss.n || is.h != ss.h ||
        is.w != ss.w) {
        throw ShapeError(fmt::format(
            "forward: image {} and sparse {} must share batch/spatial dims with {}/1 channels",
            is.str(), ss.str(), config.image_channels));
    }
    if (is.h != config.input_height || is.w != config.input_width) {
        // Any multiple of 2^stage_count works; the configured size is what the
        // model was built for, other sizes are fine as long as they divide.
        const int div = 1 << config.stage_count;
        if (is.h % div != 0 || is.w % div != 0) {
            throw ShapeError(fmt::format("forward: resolution {}x{} not divisible by {}", is.h,
                                         is.w, div));
        }
    }

    trace = ForwardTrace{};
    auto note = [&](const std::string& key, const Tensor<T>& t) {
        trace.activations[key] = t.id();
    };

    const int s = config.stage_count;
    const bool has_guide_decoder = config.fusion != FusionScheme::EE_Guided;

    // GuideNet encoder.
    Tensor<T> g = relu(g_stem_bn(g_stem_conv(image), training));
    std::vector<Tensor<T>> ge(s);
    for (int i = 0; i < s; ++i) {
        g = relu(g_down_bn[i](g_down[i](g), training));
        g = g_enc[i](g, training);
        ge[i] = g;
        note(fmt::format("guide.enc{}", i), g);
    }

    // GuideNet decoder with additive skips.
    std::vector<Tensor<T>> gd(s);
    if (has_guide_decoder) {
        gd[s - 1] = g_dec[s - 1](ge[s - 1], training);
        note(fmt::format("guide.dec{}", s - 1), gd[s - 1]);
        for (int i = s - 2; i >= 0; --i) {
            Tensor<T> up = relu(g_up_bn[i](g_up[i](gd[i + 1]), training));
            gd[i] = g_dec[i](add(up, ge[i]), training);
            note(fmt::format("guide.dec{}", i), gd[i]);
        }
    }

    auto guide_src = [&](int i) -> const Tensor<T>& {
        return has_guide_decoder ? gd[i] : ge[i];
    };
    auto guide_src_name = [&](int i) {
        return has_guide_decoder ? fmt::format("guide.dec{}", i) : fmt::format("guide.enc{}", i);
    };

    // DepthNet encoder; fused in place except for DD_Guided.
    const bool fuse_in_encoder = config.fusion != FusionScheme::DD_Guided;
    Tensor<T> d = relu(d_stem_bn(d_stem_conv(sparse), training));
    Tensor<T> d_stem_out = d;
    std::vector<Tensor<T>> enc_out(s);
    for (int i = 0; i < s; ++i) {
        d = relu(d_down_bn[i](d_down[i](d), training));
        d = d_enc[i](d, training);
        note(fmt::format("depth.enc{}", i), d);
        if (fuse_in_encoder) {
            d = apply_fusion(*this, i, guide_src_name(i), guide_src(i), d,
                             fmt::format("depth.enc{}", i), training);
            note(fmt::format("depth.fused{}", i), d);
        }
        enc_out[i] = d;
        note(fmt::format("depth.enc_out{}", i), d);
    }

    // DepthNet decoder with additive skips from the (possibly fused) encoder.
    Tensor<T> x = enc_out[s - 1];
    if (!fuse_in_encoder) {
        x = apply_fusion(*this, s - 1, guide_src_name(s - 1), guide_src(s - 1), x,
                         fmt::format("depth.dec{}", s - 1), training);
    }
    for (int i = s - 2; i >= 0; --i) {
        Tensor<T> up = relu(d_up_bn[i](d_up[i](x), training));
        x = d_dec[i](add(up, enc_out[i]), training);
        note(fmt::format("depth.dec{}", i), x);
        if (!fuse_in_encoder) {
            x = apply_fusion(*this, i, guide_src_name(i), guide_src(i), x,
                             fmt::format("depth.dec{}", i), training);
        }
    }

    Tensor<T> up_full = relu(d_final_bn(d_final_up(x), training));
    Tensor<T> full = add(up_full, d_stem_out);
    return d_head(full);
}

template <typename T>
void Model<T>::zero_grads() {
    for (auto& [name, t] : bank.params) t.zero_grad();
}

template struct ParamBank<float>;
template struct ParamBank<double>;
template struct Model<float>;
template struct Model<double>;
template Model<float> build(const NetConfig&, std::uint64_t);
template Model<double> build(const NetConfig&, std::uint64_t);

}  // namespace gdc
