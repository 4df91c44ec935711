#include "gdc/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "gdc/errors.hpp"
#include "gdc/rng.hpp"

namespace fs = std::filesystem;

namespace gdc {

std::int64_t DepthMap::valid_count() const {
    return std::count_if(m.begin(), m.end(), [](float v) { return v > 0.0f; });
}

DepthMap load_depth_png(const std::string& path) {
    DepthMap d;
    std::vector<std::uint16_t> raw = read_gray16_png(path, d.h, d.w);
    d.m.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        d.m[i] = raw[i] == 0 ? 0.0f : static_cast<float>(raw[i]) / 256.0f;
    }
    return d;
}

void write_depth_png(const std::string& path, const DepthMap& d) {
    std::vector<std::uint16_t> raw(d.m.size());
    for (std::size_t i = 0; i < d.m.size(); ++i) {
        const float v = d.m[i];
        if (v <= 0.0f) {
            raw[i] = 0;
        } else {
            const long q = std::lround(static_cast<double>(v) * 256.0);
            raw[i] = static_cast<std::uint16_t>(std::clamp<long>(q, 1, 65535));
        }
    }
    write_gray16_png(path, d.h, d.w, raw.data());
}

namespace {

DepthMap bottom_crop(const DepthMap& d, int ch, int cw) {
    if (ch > d.h || cw > d.w) {
        throw ValueError(fmt::format("crop {}x{} larger than depth {}x{}", ch, cw, d.h, d.w));
    }
    DepthMap out = DepthMap::zeros(ch, cw);
    const int y0 = d.h - ch;
    const int x0 = (d.w - cw) / 2;
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(y, x) = d.at(y0 + y, x0 + x);
    return out;
}

RgbImage bottom_crop(const RgbImage& im, int ch, int cw) {
    RgbImage out;
    out.h = ch;
    out.w = cw;
    out.rgb.assign(static_cast<std::size_t>(3) * ch * cw, 0.0f);
    const int y0 = im.h - ch;
    const int x0 = (im.w - cw) / 2;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) out.at(c, y, x) = im.at(c, y0 + y, x0 + x);
    return out;
}

}  // namespace

SparseDepthSample load_kitti_sample(const std::string& image_path,
                                    const std::string& sparse_png_path,
                                    const std::string& gt_png_path,
                                    const KittiLoadOptions& opts) {
    SparseDepthSample s;
    s.image = read_rgb8(image_path);
    s.sparse = load_depth_png(sparse_png_path);
    s.gt = load_depth_png(gt_png_path);
    if (s.sparse.h != s.image.h || s.sparse.w != s.image.w || s.gt.h != s.image.h ||
        s.gt.w != s.image.w) {
        throw ShapeError(fmt::format(
            "sample size mismatch: image {}x{}, sparse {}x{}, gt {}x{}", s.image.h, s.image.w,
            s.sparse.h, s.sparse.w, s.gt.h, s.gt.w));
    }
    if (opts.crop_height && opts.crop_width) {
        // Bottom-anchored: LiDAR returns concentrate in the lower image.
        s.image = bottom_crop(s.image, *opts.crop_height, *opts.crop_width);
        s.sparse = bottom_crop(s.sparse, *opts.crop_height, *opts.crop_width);
        s.gt = bottom_crop(s.gt, *opts.crop_height, *opts.crop_width);
    }
    return s;
}

namespace {

// Deterministic uniform subset of the valid pixel indices.
std::vector<std::int64_t> pick_valid_subset(const DepthMap& d, std::int64_t keep,
                                            std::uint64_t seed, const char* who) {
    std::vector<std::int64_t> valid;
    valid.reserve(d.m.size());
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.m.size()); ++i) {
        if (d.m[static_cast<std::size_t>(i)] > 0.0f) valid.push_back(i);
    }
    if (valid.empty()) throw ValueError(fmt::format("{}: source has no valid pixels", who));
    if (keep > static_cast<std::int64_t>(valid.size())) {
        throw ValueError(fmt::format("{}: requested {} points but only {} are valid", who, keep,
                                     valid.size()));
    }
    RngStream rng(seed, "sparse-subset");
    // Partial Fisher-Yates: the first `keep` entries are the sample.
    for (std::int64_t i = 0; i < keep; ++i) {
        const std::int64_t j = rng.uniform_int(i, static_cast<std::int64_t>(valid.size()) - 1);
        std::swap(valid[static_cast<std::size_t>(i)], valid[static_cast<std::size_t>(j)]);
    }
    valid.resize(static_cast<std::size_t>(keep));
    return valid;
}

}  // namespace

SparseDepthSample sample_by_density(const SparseDepthSample& sample, double ratio,
                                    std::uint64_t seed) {
    if (!(ratio > 0.0) || ratio > 1.0) {
        throw ValueError(fmt::format("sample_by_density: ratio {} outside (0, 1]", ratio));
    }
    const std::int64_t nv = sample.sparse.valid_count();
    if (nv == 0) throw ValueError("sample_by_density: empty valid set");
    const std::int64_t keep = std::llround(ratio * static_cast<double>(nv));
    SparseDepthSample out = sample;
    if (keep >= nv) return out;  // ratio 1.0 is the identity
    std::vector<std::int64_t> kept =
        pick_valid_subset(sample.sparse, keep, seed, "sample_by_density");
    DepthMap s = DepthMap::zeros(sample.sparse.h, sample.sparse.w);
    for (std::int64_t i : kept) s.m[static_cast<std::size_t>(i)] = sample.sparse.m[static_cast<std::size_t>(i)];
    out.sparse = std::move(s);
    return out;
}

DepthMap sample_fixed_count(const DepthMap& dense_gt, int n, std::uint64_t seed) {
    if (n <= 0) throw ValueError("sample_fixed_count: n must be positive");
    std::vector<std::int64_t> kept = pick_valid_subset(dense_gt, n, seed, "sample_fixed_count");
    DepthMap s = DepthMap::zeros(dense_gt.h, dense_gt.w);
    for (std::int64_t i : kept) s.m[static_cast<std::size_t>(i)] = dense_gt.m[static_cast<std::size_t>(i)];
    return s;
}

DepthMap mask_transfer_sample(const DepthMap& dense_gt, const DepthMap& mask_source) {
    if (dense_gt.h != mask_source.h || dense_gt.w != mask_source.w) {
        throw ShapeError(fmt::format("mask_transfer: dense {}x{} vs mask {}x{}", dense_gt.h,
                                     dense_gt.w, mask_source.h, mask_source.w));
    }
    DepthMap out = DepthMap::zeros(dense_gt.h, dense_gt.w);
    for (std::size_t i = 0; i < out.m.size(); ++i) {
        if (mask_source.m[i] > 0.0f) out.m[i] = dense_gt.m[i];
    }
    return out;
}

// --- Scene generation ---------------------------------------------------------

namespace {

Vec3 normalize(Vec3 v) {
    const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    return {v.x / n, v.y / n, v.z / n};
}
double dot(Vec3 a, Vec3 b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}
Vec3 sub3(Vec3 a, Vec3 b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}
Vec3 muladd(Vec3 o, Vec3 d, double t) {
    return {o.x + d.x * t, o.y + d.y * t, o.z + d.z * t};
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal;
    Vec3 albedo;
};

constexpr double kTmin = 1e-6;

void hit_plane(const ScenePlane& p, Vec3 dir, Hit& best) {
    const double denom = dot(p.normal, dir);
    if (std::abs(denom) < 1e-12) return;
    const double t = dot(p.normal, p.point) / denom;
    if (t <= kTmin || t >= best.t) return;
    best.t = t;
    best.normal = denom < 0 ? p.normal : Vec3{-p.normal.x, -p.normal.y, -p.normal.z};
    Vec3 hp = muladd({0, 0, 0}, dir, t);
    if (p.checker > 0.0) {
        const long cx = static_cast<long>(std::floor(hp.x / p.checker));
        const long cz = static_cast<long>(std::floor(hp.z / p.checker));
        best.albedo = ((cx + cz) & 1) ? p.albedo_b : p.albedo_a;
    } else {
        best.albedo = p.albedo_a;
    }
}

void hit_sphere(const SceneSphere& s, Vec3 dir, Hit& best) {
    // Ray from origin: |t*dir - c|^2 = r^2.
    const double a = dot(dir, dir);
    const double b = -2.0 * dot(dir, s.center);
    const double c = dot(s.center, s.center) - s.radius * s.radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / (2 * a);
    if (t <= kTmin) t = (-b + sq) / (2 * a);
    if (t <= kTmin || t >= best.t) return;
    best.t = t;
    best.normal = normalize(sub3(muladd({0, 0, 0}, dir, t), s.center));
    best.albedo = s.albedo;
}

void hit_box(const SceneBox& b, Vec3 dir, Hit& best) {
    double t0 = kTmin, t1 = best.t;
    int axis = -1;
    double sign = 0;
    const double o[3] = {0, 0, 0};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {b.center.x - b.half.x, b.center.y - b.half.y, b.center.z - b.half.z};
    const double hi[3] = {b.center.x + b.half.x, b.center.y + b.half.y, b.center.z + b.half.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-12) {
            if (o[i] < lo[i] || o[i] > hi[i]) return;
            continue;
        }
        double ta = (lo[i] - o[i]) / d[i];
        double tb = (hi[i] - o[i]) / d[i];
        double sgn = -1;
        if (ta > tb) {
            std::swap(ta, tb);
            sgn = 1;
        }
        if (ta > t0) {
            t0 = ta;
            axis = i;
            sign = sgn;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return;
    }
    if (axis < 0 || t0 >= best.t || t0 <= kTmin) return;
    best.t = t0;
    best.normal = {axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
    best.albedo = b.albedo;
}

}  // namespace

std::pair<RgbImage, DepthMap> generate_scene(const SceneSpec& spec, int height, int width) {
    if (height <= 0 || width <= 0) throw ValueError("generate_scene: bad resolution");
    if (!(spec.cam.fx > 0.0) || !(spec.cam.fy > 0.0)) {
        throw ValueError("generate_scene: degenerate camera (fx/fy must be positive)");
    }
    RgbImage img;
    img.h = height;
    img.w = width;
    img.rgb.assign(static_cast<std::size_t>(3) * height * width, 0.0f);
    DepthMap depth = DepthMap::zeros(height, width);
    const Vec3 light = normalize(spec.light_dir);

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            // d.z == 1, so the hit parameter t is the z-depth directly.
            const Vec3 dir{(x + 0.5 - spec.cam.cx) / spec.cam.fx,
                           (y + 0.5 - spec.cam.cy) / spec.cam.fy, 1.0};
            Hit best;
            for (const ScenePrimitive& prim : spec.primitives) {
                std::visit([&](const auto& p) {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, ScenePlane>) hit_plane(p, dir, best);
                    else if constexpr (std::is_same_v<P, SceneSphere>) hit_sphere(p, dir, best);
                    else hit_box(p, dir, best);
                }, prim);
            }
            if (!std::isfinite(best.t)) {
                throw ValueError(fmt::format(
                    "generate_scene: ray through pixel ({}, {}) misses every primitive", y, x));
            }
            depth.at(y, x) = static_cast<float>(best.t);
            const double lambert =
                spec.ambient + (1.0 - spec.ambient) * std::max(0.0, dot(best.normal, light));
            img.at(0, y, x) = static_cast<float>(std::clamp(best.albedo.x * lambert, 0.0, 1.0));
            img.at(1, y, x) = static_cast<float>(std::clamp(best.albedo.y * lambert, 0.0, 1.0));
            img.at(2, y, x) = static_cast<float>(std::clamp(best.albedo.z * lambert, 0.0, 1.0));
        }
    }
    return {std::move(img), std::move(depth)};
}

SceneSpec make_random_scene_spec(std::uint64_t seed, double max_depth) {
    RngStream rng(seed, "scene");
    SceneSpec spec;
    spec.seed = seed;
    // fx tuned for a wide-ish field of view at any resolution; cx/cy are
    // filled in by generate callers via resolution-independent convention:
    // the spec stores absolute values, so choose for the synth default here.
    spec.cam = {90.0, 90.0, 64.0, 32.0};
    spec.light_dir = normalize({rng.uniform(-0.6, 0.6), rng.uniform(-0.8, -0.2),
                                rng.uniform(0.4, 1.0)});
    spec.ambient = rng.uniform(0.2, 0.35);

    const double zback = 0.95 * max_depth;
    // Back wall guarantees every ray terminates.
    ScenePlane wall;
    wall.point = {0, 0, zback};
    wall.normal = {0, 0, -1};
    wall.albedo_a = {rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9)};
    wall.albedo_b = wall.albedo_a;
    spec.primitives.push_back(wall);

    // Checkered ground below the camera, gently tilted.
    ScenePlane ground;
    ground.point = {0, rng.uniform(1.0, 1.8), 0};
    ground.normal = normalize({rng.uniform(-0.05, 0.05), -1.0, rng.uniform(-0.12, 0.0)});
    ground.albedo_a = {rng.uniform(0.4, 0.8), rng.uniform(0.4, 0.8), rng.uniform(0.4, 0.8)};
    ground.albedo_b = {rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)};
    ground.checker = rng.uniform(0.6, 1.4);
    spec.primitives.push_back(ground);

    const int n_spheres = static_cast<int>(rng.uniform_int(2, 4));
    for (int i = 0; i < n_spheres; ++i) {
        SceneSphere s;
        s.radius = rng.uniform(0.35, 1.0);
        s.center = {rng.uniform(-3.0, 3.0), rng.uniform(-1.2, 0.9), rng.uniform(2.5, 7.5)};
        s.albedo = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
        spec.primitives.push_back(s);
    }
    const int n_boxes = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n_boxes; ++i) {
        SceneBox b;
        b.half = {rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9)};
        b.center = {rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0), rng.uniform(3.0, 8.0)};
        b.albedo = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
        spec.primitives.push_back(b);
    }
    return spec;
}

// --- SceneSpec key=value serialization -----------------------------------------

namespace {

std::string vec3_str(Vec3 v) {
    return fmt::format("{:.17g} {:.17g} {:.17g}", v.x, v.y, v.z);
}

Vec3 parse_vec3(const std::string& s) {
    std::istringstream in(s);
    Vec3 v;
    if (!(in >> v.x >> v.y >> v.z)) throw ValueError("scene spec: bad vec3 '" + s + "'");
    return v;
}

}  // namespace

std::string SceneSpec::to_kv() const {
    std::string s;
    s += fmt::format("seed={}\n", seed);
    s += fmt::format("camera={:.17g} {:.17g} {:.17g} {:.17g}\n", cam.fx, cam.fy, cam.cx, cam.cy);
    s += fmt::format("light_dir={}\n", vec3_str(light_dir));
    s += fmt::format("ambient={:.17g}\n", ambient);
    for (const ScenePrimitive& prim : primitives) {
        std::visit([&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ScenePlane>) {
                s += fmt::format("plane={} {} {} {} {:.17g}\n", vec3_str(p.point),
                                 vec3_str(p.normal), vec3_str(p.albedo_a), vec3_str(p.albedo_b),
                                 p.checker);
            } else if constexpr (std::is_same_v<P, SceneSphere>) {
                s += fmt::format("sphere={} {:.17g} {}\n", vec3_str(p.center), p.radius,
                                 vec3_str(p.albedo));
            } else {
                s += fmt::format("box={} {} {}\n", vec3_str(p.center), vec3_str(p.half),
                                 vec3_str(p.albedo));
            }
        }, prim);
    }
    return s;
}

SceneSpec SceneSpec::from_kv(const std::string& text) {
    SceneSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValueError("scene spec: bad line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        std::istringstream vs(val);
        if (key == "seed") {
            vs >> spec.seed;
        } else if (key == "camera") {
            if (!(vs >> spec.cam.fx >> spec.cam.fy >> spec.cam.cx >> spec.cam.cy))
                throw ValueError("scene spec: bad camera");
        } else if (key == "light_dir") {
            spec.light_dir = parse_vec3(val);
        } else if (key == "ambient") {
            vs >> spec.ambient;
        } else if (key == "plane") {
            ScenePlane p;
            if (!(vs >> p.point.x >> p.point.y >> p.point.z >> p.normal.x >> p.normal.y >>
                  p.normal.z >> p.albedo_a.x >> p.albedo_a.y >> p.albedo_a.z >> p.albedo_b.x >>
                  p.albedo_b.y >> p.albedo_b.z >> p.checker))
                throw ValueError("scene spec: bad plane");
            spec.primitives.push_back(p);
        } else if (key == "sphere") {
            SceneSphere p;
            if (!(vs >> p.center.x >> p.center.y >> p.center.z >> p.radius >> p.albedo.x >>
                  p.albedo.y >> p.albedo.z))
                throw ValueError("scene spec: bad sphere");
            spec.primitives.push_back(p);
        } else if (key == "box") {
            SceneBox p;
            if (!(vs >> p.center.x >> p.center.y >> p.center.z >> p.half.x >> p.half.y >>
                  p.half.z >> p.albedo.x >> p.albedo.y >> p.albedo.z))
                throw ValueError("scene spec: bad box");
            spec.primitives.push_back(p);
        } else {
            throw ValueError("scene spec: unknown key '" + key + "'");
        }
    }
    return spec;
}

// --- Dataset on disk -------------------------------------------------------------

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open manifest '{}'", path));
    const fs::path base = fs::path(path).parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ManifestEntry e;
        if (!std::getline(ls, e.image_path, '\t') || !std::getline(ls, e.sparse_path, '\t') ||
            !std::getline(ls, e.gt_path, '\t')) {
            throw IoError(fmt::format("malformed manifest line '{}'", line));
        }
        // Paths are relative to the manifest location.
        e.image_path = (base / e.image_path).string();
        e.sparse_path = (base / e.sparse_path).string();
        e.gt_path = (base / e.gt_path).string();
        entries.push_back(std::move(e));
    }
    return entries;
}

void synthesize_dataset(const std::string& out_dir, std::uint64_t seed, int count,
                        const SynthOptions& opts) {
    if (count <= 0) throw ValueError("synthesize_dataset: count must be positive");
    fs::create_directories(out_dir);
    std::string manifest;
    for (int i = 0; i < count; ++i) {
        RngStream id_rng(seed, fmt::format("scene-{}", i));
        const std::uint64_t scene_seed = id_rng.engine()();
        SceneSpec spec = make_random_scene_spec(scene_seed, opts.max_depth);
        spec.cam.cx = opts.width / 2.0;
        spec.cam.cy = opts.height / 2.0;
        spec.cam.fx = spec.cam.fy = 0.75 * opts.width;
        auto [img, gt] = generate_scene(spec, opts.height, opts.width);
        DepthMap sparse = sample_fixed_count(gt, opts.sparse_count, scene_seed);

        const std::string img_name = fmt::format("image_{:04d}.png", i);
        const std::string sp_name = fmt::format("sparse_{:04d}.png", i);
        const std::string gt_name = fmt::format("gt_{:04d}.png", i);
        write_rgb8_png((fs::path(out_dir) / img_name).string(), img);
        write_depth_png((fs::path(out_dir) / sp_name).string(), sparse);
        write_depth_png((fs::path(out_dir) / gt_name).string(), gt);
        std::ofstream spec_out(fs::path(out_dir) / fmt::format("scene_{:04d}.txt", i));
        spec_out << spec.to_kv();
        manifest += fmt::format("{}\t{}\t{}\n", img_name, sp_name, gt_name);
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.tsv");
    if (!mf) throw IoError("cannot write manifest.tsv");
    mf << manifest;
}

Dataset load_dataset(const std::string& manifest_path) {
    Dataset ds;
    for (const ManifestEntry& e : load_manifest(manifest_path)) {
        ds.samples.push_back(load_kitti_sample(e.image_path, e.sparse_path, e.gt_path));
    }
    if (ds.samples.empty()) throw ValueError("load_dataset: empty manifest");
    return ds;
}

// --- NYU-style preprocessing -------------------------------------------------------

namespace {

RgbImage half_downsample(const RgbImage& im) {
    RgbImage out;
    out.h = im.h / 2;
    out.w = im.w / 2;
    out.rgb.assign(static_cast<std::size_t>(3) * out.h * out.w, 0.0f);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.at(c, y, x) = 0.25f * (im.at(c, 2 * y, 2 * x) + im.at(c, 2 * y, 2 * x + 1) +
                                           im.at(c, 2 * y + 1, 2 * x) +
                                           im.at(c, 2 * y + 1, 2 * x + 1));
    return out;
}

DepthMap half_downsample(const DepthMap& d) {
    // Mean of the valid entries in each 2x2 cell; invalid when all four are.
    DepthMap out = DepthMap::zeros(d.h / 2, d.w / 2);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            float sum = 0.0f;
            int k = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const float v = d.at(2 * y + dy, 2 * x + dx);
                    if (v > 0.0f) {
                        sum += v;
                        ++k;
                    }
                }
            out.at(y, x) = k > 0 ? sum / static_cast<float>(k) : 0.0f;
        }
    }
    return out;
}

template <typename Img>
Img center_crop(const Img& im, int ch, int cw);

template <>
RgbImage center_crop(const RgbImage& im, int ch, int cw) {
    RgbImage out;
    out.h = ch;
    out.w = cw;
    out.rgb.assign(static_cast<std::size_t>(3) * ch * cw, 0.0f);
    const int y0 = (im.h - ch) / 2;
    const int x0 = (im.w - cw) / 2;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) out.at(c, y, x) = im.at(c, y0 + y, x0 + x);
    return out;
}

template <>
DepthMap center_crop(const DepthMap& im, int ch, int cw) {
    DepthMap out = DepthMap::zeros(ch, cw);
    const int y0 = (im.h - ch) / 2;
    const int x0 = (im.w - cw) / 2;
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(y, x) = im.at(y0 + y, x0 + x);
    return out;
}

}  // namespace

SparseDepthSample nyu_style_preprocess(const RgbImage& image, const DepthMap& dense_depth,
                                       int sparse_count, std::uint64_t seed,
                                       const NyuPreprocessOptions& opts) {
    if (image.h != dense_depth.h || image.w != dense_depth.w) {
        throw ShapeError(fmt::format("nyu preprocess: image {}x{} vs depth {}x{}", image.h,
                                     image.w, dense_depth.h, dense_depth.w));
    }
    RgbImage im = half_downsample(image);
    DepthMap d = half_downsample(dense_depth);
    if (im.h < opts.crop_height || im.w < opts.crop_width) {
        throw ValueError(fmt::format("nyu preprocess: {}x{} too small for {}x{} crop", im.h,
                                     im.w, opts.crop_height, opts.crop_width));
    }
    im = center_crop<RgbImage>(im, opts.crop_height, opts.crop_width);
    d = center_crop<DepthMap>(d, opts.crop_height, opts.crop_width);

    SparseDepthSample out;
    out.image.h = opts.pad_height;
    out.image.w = opts.pad_width;
    out.image.rgb.assign(static_cast<std::size_t>(3) * opts.pad_height * opts.pad_width, 0.0f);
    out.gt = DepthMap::zeros(opts.pad_height, opts.pad_width);
    const int y0 = (opts.pad_height - opts.crop_height) / 2;
    const int x0 = (opts.pad_width - opts.crop_width) / 2;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < opts.crop_height; ++y)
            for (int x = 0; x < opts.crop_width; ++x)
                out.image.at(c, y0 + y, x0 + x) = im.at(c, y, x);
    for (int y = 0; y < opts.crop_height; ++y)
        for (int x = 0; x < opts.crop_width; ++x) out.gt.at(y0 + y, x0 + x) = d.at(y, x);
    out.sparse = sample_fixed_count(out.gt, sparse_count, seed);
    return out;
}

}  // namespace gdc
