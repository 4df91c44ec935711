#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gdc/guided_conv.hpp"
#include "gdc/ops.hpp"
#include "gdc/rng.hpp"
#include "gdc/tensor.hpp"

namespace gdc {

// How the guidance branch meets the depth branch at each fusion stage.
// DE_Guided fuses GuideNet decoder features into the DepthNet encoder through
// guided convolution modules at every stage. EE_Guided takes the guidance
// from the encoder instead (no GuideNet decoder is built); DD_Guided fuses
// into the DepthNet decoder. Add/Concat replace the guided modules with
// element-wise addition / channel concatenation; FirstGuide/LastGuide keep
// exactly one guided module and use concatenation elsewhere.
enum class FusionScheme {
    DE_Guided,
    EE_Guided,
    DD_Guided,
    Add,
    Concat,
    FirstGuide,
    LastGuide,
};

const char* to_string(FusionScheme s);
FusionScheme parse_fusion_scheme(const std::string& name);
std::vector<FusionScheme> all_fusion_schemes();

struct NetConfig {
    int stage_count = 3;
    std::vector<int> channels_per_stage = {32, 64, 128};
    int kernel_size = 3;  // guided-module K
    FusionScheme fusion = FusionScheme::DE_Guided;
    int input_height = 64;
    int input_width = 128;
    int image_channels = 3;

    // Throws on invalid configs; resolution must be a multiple of 2^stage_count.
    void validate() const;
    std::string to_kv() const;
    static NetConfig from_kv(const std::string& text);
};

// --- Layers -------------------------------------------------------------------

template <typename T>
struct ParamBank {
    std::vector<std::pair<std::string, Tensor<T>>> params;   // optimized
    std::vector<std::pair<std::string, Tensor<T>>> buffers;  // running stats

    Tensor<T> add_param(const std::string& name, Shape4 shape, RngStream& rng, int fan_in);
    Tensor<T> add_const_param(const std::string& name, Shape4 shape, T fill);
    Tensor<T> add_buffer(const std::string& name, Shape4 shape, T fill);
    std::int64_t parameter_count() const;
};

template <typename T>
struct ConvLayer {
    Tensor<T> w, b;
    int stride = 1, pad = 0;
    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct DeconvLayer {
    Tensor<T> w, b;
    int stride = 2, pad = 0;
    Tensor<T> operator()(const Tensor<T>& x) const { return deconv2d(x, w, b, stride, pad); }
};

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma, beta, run_mean, run_var;
    Tensor<T> operator()(const Tensor<T>& x, bool training) const {
        auto& self = const_cast<BatchNormLayer&>(*this);
        return batch_norm(x, gamma, beta, self.run_mean, self.run_var, training);
    }
};

// Two sequential 3x3 convolutions with batch normalization, additive skip.
template <typename T>
struct ResBlockLayer {
    ConvLayer<T> conv1, conv2;
    BatchNormLayer<T> bn1, bn2;
    Tensor<T> operator()(const Tensor<T>& x, bool training) const {
        Tensor<T> h = relu(bn1(conv1(x), training));
        h = bn2(conv2(h), training);
        return relu(add(h, x));
    }
};

// --- Model ---------------------------------------------------------------------

enum class FusionKind { Guided, Add, Concat };

// One fusion event recorded during forward, for topology assertions: which
// activation the fusion read as guidance and where its output went.
struct FusionTraceEntry {
    int stage = 0;
    std::string source;       // e.g. "guide.dec0"
    std::string dest;         // e.g. "depth.enc0"
    FusionKind kind = FusionKind::Guided;
    const void* source_id = nullptr;
    const void* output_id = nullptr;
};

struct ForwardTrace {
    std::vector<FusionTraceEntry> fusions;
    std::map<std::string, const void*> activations;
};

template <typename T>
struct Model {
    NetConfig config;
    ParamBank<T> bank;

    ConvLayer<T> g_stem_conv;
    BatchNormLayer<T> g_stem_bn;
    std::vector<ConvLayer<T>> g_down;
    std::vector<BatchNormLayer<T>> g_down_bn;
    std::vector<ResBlockLayer<T>> g_enc;
    std::vector<DeconvLayer<T>> g_up;        // empty for EE_Guided
    std::vector<BatchNormLayer<T>> g_up_bn;
    std::vector<ResBlockLayer<T>> g_dec;

    ConvLayer<T> d_stem_conv;
    BatchNormLayer<T> d_stem_bn;
    std::vector<ConvLayer<T>> d_down;
    std::vector<BatchNormLayer<T>> d_down_bn;
    std::vector<ResBlockLayer<T>> d_enc;
    std::vector<DeconvLayer<T>> d_up;
    std::vector<BatchNormLayer<T>> d_up_bn;
    std::vector<ResBlockLayer<T>> d_dec;
    DeconvLayer<T> d_final_up;
    BatchNormLayer<T> d_final_bn;
    ConvLayer<T> d_head;

    std::vector<FusionKind> fusion_kinds;            // per stage
    std::vector<GuidedConvParams<T>> fuse_guided;    // per stage, used when Guided
    std::vector<ConvLayer<T>> fuse_proj;             // per stage, used when Concat

    // Filled by the latest forward().
    ForwardTrace trace;

    // image: (N, image_channels, H, W); sparse: (N, 1, H, W). Returns a dense
    // (N, 1, H, W) prediction.
    Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& sparse, bool training);

    std::int64_t parameter_count() const { return bank.parameter_count(); }
    void zero_grads();
};

// Deterministic fan-in-uniform initialization from the seed.
template <typename T>
Model<T> build(const NetConfig& config, std::uint64_t seed);

}  // namespace gdc
