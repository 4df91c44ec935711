#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gdc/png_io.hpp"

namespace gdc {

// Depth in meters, row-major. 0 marks an invalid pixel; valid entries are
// positive and finite.
struct DepthMap {
    int h = 0;
    int w = 0;
    std::vector<float> m;

    static DepthMap zeros(int h, int w) { return {h, w, std::vector<float>(std::size_t(h) * w, 0.0f)}; }
    float& at(int y, int x) { return m[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return m[static_cast<std::size_t>(y) * w + x]; }
    bool valid(int y, int x) const { return at(y, x) > 0.0f; }
    std::int64_t valid_count() const;
};

// One training/evaluation sample: guidance image, sparse input depth, and
// semi-dense ground truth. Validity masks are implicit (> 0).
struct SparseDepthSample {
    RgbImage image;
    DepthMap sparse;
    DepthMap gt;
};

// --- KITTI-format ingestion -------------------------------------------------

struct KittiLoadOptions {
    // When set, bottom-anchored crop to this size before returning.
    std::optional<int> crop_height;  // e.g. 256
    std::optional<int> crop_width;   // e.g. 1216
};

// 16-bit PNG depth, meters = raw/256, raw 0 invalid.
DepthMap load_depth_png(const std::string& path);
void write_depth_png(const std::string& path, const DepthMap& d);

SparseDepthSample load_kitti_sample(const std::string& image_path,
                                    const std::string& sparse_png_path,
                                    const std::string& gt_png_path,
                                    const KittiLoadOptions& opts = {});

// --- Sparse-input synthesis -------------------------------------------------

// Keeps round(ratio * |valid|) points, uniform without replacement, seeded.
SparseDepthSample sample_by_density(const SparseDepthSample& sample, double ratio,
                                    std::uint64_t seed);

// Exactly n valid points drawn uniformly without replacement from the dense map.
DepthMap sample_fixed_count(const DepthMap& dense_gt, int n, std::uint64_t seed);

// Output valid set equals the mask source's valid set; values from dense_gt.
DepthMap mask_transfer_sample(const DepthMap& dense_gt, const DepthMap& mask_source);

// --- Synthetic scenes --------------------------------------------------------

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
};

struct ScenePlane {
    Vec3 point, normal;
    Vec3 albedo_a;          // checkerboard colors; equal values = solid
    Vec3 albedo_b;
    double checker = 0.0;   // checker cell size in world units, 0 = solid
};
struct SceneSphere {
    Vec3 center;
    double radius = 1.0;
    Vec3 albedo;
};
struct SceneBox {
    Vec3 center, half;
    Vec3 albedo;
};

using ScenePrimitive = std::variant<ScenePlane, SceneSphere, SceneBox>;

struct SceneSpec {
    std::uint64_t seed = 0;
    Camera cam;
    Vec3 light_dir{0.3, -0.5, 0.8};
    double ambient = 0.25;
    std::vector<ScenePrimitive> primitives;

    std::string to_kv() const;
    static SceneSpec from_kv(const std::string& text);
};

// Ray-cast z-depth in meters plus a Lambertian-shaded image; deterministic.
// Every pixel must hit a primitive (random specs include a back plane).
std::pair<RgbImage, DepthMap> generate_scene(const SceneSpec& spec, int height, int width);

// Seeded scene with a ground plane, a back wall and a few spheres/boxes,
// depths within max_depth.
SceneSpec make_random_scene_spec(std::uint64_t seed, double max_depth = 10.0);

// --- Dataset on disk ----------------------------------------------------------

struct ManifestEntry {
    std::string image_path;
    std::string sparse_path;
    std::string gt_path;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);

struct SynthOptions {
    int height = 64;
    int width = 128;
    int sparse_count = 500;
    double max_depth = 10.0;
};

// Writes image_NNNN.png / sparse_NNNN.png / gt_NNNN.png, one scene spec per
// sample, and manifest.tsv (image TAB sparse TAB gt). Byte-identical for
// identical seeds and options.
void synthesize_dataset(const std::string& out_dir, std::uint64_t seed, int count,
                        const SynthOptions& opts);

// In-memory dataset for training.
struct Dataset {
    std::vector<SparseDepthSample> samples;
};

Dataset load_dataset(const std::string& manifest_path);

// --- NYU-style preprocessing ---------------------------------------------------

struct NyuPreprocessOptions {
    int crop_width = 304;
    int crop_height = 228;
    int pad_width = 320;
    int pad_height = 256;
};

// Half down-sample (bilinear for the image, nearest-valid for depth), center
// crop, then zero-pad. Padded depth pixels are invalid.
SparseDepthSample nyu_style_preprocess(const RgbImage& image, const DepthMap& dense_depth,
                                       int sparse_count, std::uint64_t seed,
                                       const NyuPreprocessOptions& opts = {});

}  // namespace gdc
