// gdc: depth completion toolkit around the guided convolution module.
//
// Subcommands: synth, train, ablate, eval, complete, cost, viz-kernels,
// selftest. Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric failure, 5 selftest
// failure.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gdc/checkpoint.hpp"
#include "gdc/cost_model.hpp"
#include "gdc/data.hpp"
#include "gdc/errors.hpp"
#include "gdc/metrics.hpp"
#include "gdc/network.hpp"
#include "gdc/rng.hpp"
#include "gdc/trainer.hpp"
#include "gdc/viz.hpp"

#include "selftest.hpp"

namespace fs = std::filesystem;
using namespace gdc;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitSelftest = 5;

// Every run prints (and logs) version, seed and a hash of the effective
// flags, so artifacts can be traced back to their invocation.
void print_repro_header(const std::string& command, std::uint64_t seed,
                        const std::string& canonical_flags) {
    fmt::print("gdc {} {} seed={} config_hash={:016x}\n", kVersion, command, seed,
               fnv1a64(canonical_flags));
}

struct NetFlags {
    int stages = 3;
    std::vector<int> channels = {32, 64, 128};
    int kernel_size = 3;
    std::string scheme = "DE_Guided";
    int height = 64;
    int width = 128;

    void attach(CLI::App* cmd) {
        cmd->add_option("--stages", stages, "Encoder stage count");
        cmd->add_option("--channels", channels, "Channel width per stage")->delimiter(',');
        cmd->add_option("--kernel-size", kernel_size, "Guided-module kernel size K");
        cmd->add_option("--scheme", scheme,
                        "Fusion scheme: DE_Guided|EE_Guided|DD_Guided|Add|Concat|FirstGuide|"
                        "LastGuide");
        cmd->add_option("--height", height, "Input height");
        cmd->add_option("--width", width, "Input width");
    }
    NetConfig to_config() const {
        NetConfig c;
        c.stage_count = stages;
        c.channels_per_stage = channels;
        c.kernel_size = kernel_size;
        c.fusion = parse_fusion_scheme(scheme);
        c.input_height = height;
        c.input_width = width;
        return c;
    }
    std::string canonical() const {
        std::string ch;
        for (int c : channels) ch += std::to_string(c) + ",";
        return fmt::format("stages={} channels={} k={} scheme={} h={} w={}", stages, ch,
                           kernel_size, scheme, height, width);
    }
};

struct TrainFlags {
    double lr0 = 1e-3;
    double weight_decay = 1e-6;
    int lr_period = 2000;
    int batch_size = 8;
    int iters = 10000;
    bool loss_sum_mode = false;
    int checkpoint_every = 1000;

    void attach(CLI::App* cmd) {
        cmd->add_option("--lr0", lr0, "Starting learning rate");
        cmd->add_option("--weight-decay", weight_decay, "L2 weight decay");
        cmd->add_option("--lr-period", lr_period, "Iterations between halvings");
        cmd->add_option("--batch-size", batch_size, "Batch size");
        cmd->add_option("--iters", iters, "Total training iterations");
        cmd->add_flag("--loss-sum", loss_sum_mode,
                      "Use the plain sum-over-valid-pixels loss instead of the mean");
        cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint cadence");
    }
    TrainConfig to_config(std::uint64_t seed) const {
        TrainConfig c;
        c.lr0 = lr0;
        c.weight_decay = weight_decay;
        c.lr_halving_period_iters = lr_period;
        c.batch_size = batch_size;
        c.max_iters = iters;
        c.seed = seed;
        c.loss_mean_mode = !loss_sum_mode;
        c.checkpoint_every_iters = checkpoint_every;
        return c;
    }
    std::string canonical(std::uint64_t seed) const {
        return fmt::format("lr0={} wd={} period={} bs={} iters={} sum={} every={} seed={}", lr0,
                           weight_decay, lr_period, batch_size, iters, loss_sum_mode,
                           checkpoint_every, seed);
    }
};

DepthMap depth_from_prediction(const TensorF& pred) {
    const Shape4 s = pred.shape();
    DepthMap d = DepthMap::zeros(s.h, s.w);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) d.at(y, x) = pred.at(0, 0, y, x);
    return d;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth completion with dynamically generated spatially-variant kernels"};
    app.require_subcommand(1);

    // --- synth ---------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene dataset");
    std::uint64_t synth_seed = 1;
    int synth_count = 512;
    std::string synth_out;
    SynthOptions synth_opts;
    synth->add_option("--seed", synth_seed, "Root seed");
    synth->add_option("--count", synth_count, "Number of scenes")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--height", synth_opts.height, "Scene height");
    synth->add_option("--width", synth_opts.width, "Scene width");
    synth->add_option("--sparse-count", synth_opts.sparse_count, "Sparse points per scene");
    synth->add_option("--max-depth", synth_opts.max_depth, "Maximum scene depth in meters");

    // --- train ---------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train a completion network");
    std::uint64_t train_seed = 1;
    std::string train_data_dir, train_val_dir, train_out;
    NetFlags train_net;
    TrainFlags train_flags;
    train_cmd->add_option("--seed", train_seed, "Root seed");
    train_cmd->add_option("--data", train_data_dir, "Training dataset directory or manifest")
        ->required();
    train_cmd->add_option("--val", train_val_dir, "Validation dataset directory or manifest");
    train_cmd->add_option("--out", train_out, "Run directory")->required();
    train_net.attach(train_cmd);
    train_flags.attach(train_cmd);

    // --- ablate --------------------------------------------------------------
    auto* ablate = app.add_subcommand("ablate", "Train several fusion schemes and tabulate");
    std::string ablate_data_dir, ablate_val_dir, ablate_out;
    std::vector<std::string> ablate_schemes = {"DE_Guided", "Concat", "Add"};
    std::vector<std::uint64_t> ablate_seeds = {1, 2, 3};
    NetFlags ablate_net;
    TrainFlags ablate_flags;
    ablate->add_option("--data", ablate_data_dir, "Training dataset")->required();
    ablate->add_option("--val", ablate_val_dir, "Validation dataset")->required();
    ablate->add_option("--out", ablate_out, "Output directory")->required();
    ablate->add_option("--schemes", ablate_schemes, "Schemes to compare")->delimiter(',');
    ablate->add_option("--seeds", ablate_seeds, "Seeds, shared across schemes")->delimiter(',');
    ablate_net.attach(ablate);
    ablate_flags.attach(ablate);

    // --- eval ----------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_data_dir, eval_ckpt, eval_out;
    eval_cmd->add_option("--data", eval_data_dir, "Dataset directory or manifest")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
    eval_cmd->add_option("--out", eval_out, "Optional report file");

    // --- complete ------------------------------------------------------------
    auto* complete = app.add_subcommand("complete", "Run completion on one sample");
    std::string comp_ckpt, comp_image, comp_sparse, comp_out, comp_color;
    complete->add_option("--checkpoint", comp_ckpt, "Model checkpoint")->required();
    complete->add_option("--image", comp_image, "Guidance image (PNG/PPM)")->required();
    complete->add_option("--sparse", comp_sparse, "Sparse depth (16-bit PNG)")->required();
    complete->add_option("--out", comp_out, "Dense depth output (16-bit PNG)")->required();
    complete->add_option("--color", comp_color, "Optional colorized depth PNG");

    // --- cost ----------------------------------------------------------------
    auto* cost = app.add_subcommand("cost", "Kernel memory/compute accounting");
    std::int64_t cM = 128, cN = 128, cK = 3, cH = 64, cB = 304;
    int c_bytes = 4;
    bool c_measure = false;
    std::string c_csv;
    cost->add_option("--M", cM, "Input channels M");
    cost->add_option("--N", cN, "Output channels N");
    cost->add_option("--K", cK, "Kernel size K");
    cost->add_option("--H", cH, "Feature height H");
    cost->add_option("--B", cB, "Feature width B");
    cost->add_option("--bytes-per-elem", c_bytes, "Element size in bytes");
    cost->add_flag("--measure", c_measure, "Also run both paths and measure allocations");
    cost->add_option("--csv", c_csv, "Append a CSV row to this file");

    // --- viz-kernels -----------------------------------------------------------
    auto* viz = app.add_subcommand("viz-kernels", "Visualize generated kernels as a flow image");
    std::string viz_ckpt, viz_image, viz_sparse, viz_out;
    int viz_stage = 0, viz_channel = 0;
    double viz_percentile = 99.0;
    viz->add_option("--checkpoint", viz_ckpt, "Model checkpoint")->required();
    viz->add_option("--image", viz_image, "Guidance image")->required();
    viz->add_option("--sparse", viz_sparse, "Sparse depth (16-bit PNG)")->required();
    viz->add_option("--out", viz_out, "Output PNG")->required();
    viz->add_option("--stage", viz_stage, "Fusion stage to visualize");
    viz->add_option("--channel", viz_channel, "Kernel channel to visualize");
    viz->add_option("--percentile", viz_percentile, "Magnitude normalization percentile");

    // --- selftest ----------------------------------------------------------------
    auto* selftest = app.add_subcommand("selftest", "Run the embedded invariant suite");
    std::uint64_t selftest_seed = 1;
    selftest->add_option("--seed", selftest_seed, "Root seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth) {
            print_repro_header("synth", synth_seed,
                               fmt::format("count={} h={} w={} sparse={} maxd={}", synth_count,
                                           synth_opts.height, synth_opts.width,
                                           synth_opts.sparse_count, synth_opts.max_depth));
            synthesize_dataset(synth_out, synth_seed, synth_count, synth_opts);
            fmt::print("wrote {} scenes to {}\n", synth_count, synth_out);
        } else if (*train_cmd) {
            print_repro_header("train", train_seed,
                               train_net.canonical() + " " + train_flags.canonical(train_seed));
            auto manifest = [](const std::string& p) {
                return fs::is_directory(p) ? (fs::path(p) / "manifest.tsv").string() : p;
            };
            Dataset data = load_dataset(manifest(train_data_dir));
            Dataset val;
            if (!train_val_dir.empty()) val = load_dataset(manifest(train_val_dir));
            Model<float> model = build<float>(train_net.to_config(), train_seed);
            TrainResult r = train(model, data, val, train_flags.to_config(train_seed), train_out);
            fmt::print("final checkpoint: {}\n", r.final_checkpoint);
            if (!train_val_dir.empty()) {
                fmt::print("validation:\n{}", r.val_metrics.to_kv());
            }
        } else if (*ablate) {
            print_repro_header("ablate", ablate_seeds.empty() ? 0 : ablate_seeds[0],
                               ablate_net.canonical() + " " + ablate_flags.canonical(0));
            auto manifest = [](const std::string& p) {
                return fs::is_directory(p) ? (fs::path(p) / "manifest.tsv").string() : p;
            };
            Dataset data = load_dataset(manifest(ablate_data_dir));
            Dataset val = load_dataset(manifest(ablate_val_dir));
            std::vector<FusionScheme> schemes;
            for (const std::string& s : ablate_schemes) schemes.push_back(parse_fusion_scheme(s));
            AblationTable table =
                run_ablation(schemes, ablate_net.to_config(), ablate_flags.to_config(1), data,
                             val, ablate_seeds, ablate_out);
            fmt::print("{}", table.table_text());
        } else if (*eval_cmd) {
            print_repro_header("eval", 0, eval_ckpt + " " + eval_data_dir);
            auto manifest = [](const std::string& p) {
                return fs::is_directory(p) ? (fs::path(p) / "manifest.tsv").string() : p;
            };
            Dataset data = load_dataset(manifest(eval_data_dir));
            Model<float> model = load_model<float>(eval_ckpt);
            MetricReport r = evaluate_model(model, data);
            fmt::print("{}", r.to_kv());
            fmt::print("{}\n", r.to_json());
            if (!eval_out.empty()) {
                std::ofstream out(eval_out);
                out << r.to_kv() << r.to_json() << "\n";
            }
        } else if (*complete) {
            print_repro_header("complete", 0, comp_ckpt + " " + comp_image);
            Model<float> model = load_model<float>(comp_ckpt);
            RgbImage image = read_rgb8(comp_image);
            DepthMap sparse = load_depth_png(comp_sparse);
            if (image.h != sparse.h || image.w != sparse.w) {
                throw ShapeError(fmt::format("image {}x{} vs sparse {}x{}", image.h, image.w,
                                             sparse.h, sparse.w));
            }
            TensorF pred = model.forward(image_to_tensor<float>(image),
                                         depth_to_tensor<float>(sparse), false);
            if (!pred.all_finite()) throw NumericError("prediction contains non-finite values");
            DepthMap dense = depth_from_prediction(pred);
            write_depth_png(comp_out, dense);
            if (!comp_color.empty()) write_rgb8_png(comp_color, depth_to_color(dense));
            fmt::print("wrote {}\n", comp_out);
        } else if (*cost) {
            print_repro_header("cost", 0,
                               fmt::format("M={} N={} K={} H={} B={} bytes={}", cM, cN, cK, cH,
                                           cB, c_bytes));
            if (c_measure) {
                MeasureReport m = measure(static_cast<int>(cM), static_cast<int>(cN),
                                          static_cast<int>(cK), static_cast<int>(cH),
                                          static_cast<int>(cB));
                fmt::print("{}", m.table());
            } else {
                CostReport r = analyze(cM, cN, cK, cH, cB, c_bytes);
                fmt::print("{}", r.table());
                if (!c_csv.empty()) {
                    const bool fresh = !fs::exists(c_csv);
                    std::ofstream out(c_csv, std::ios::app);
                    if (fresh) out << CostReport::csv_header() << "\n";
                    out << r.csv_row() << "\n";
                }
            }
        } else if (*viz) {
            print_repro_header("viz-kernels", 0,
                               fmt::format("{} stage={} channel={}", viz_ckpt, viz_stage,
                                           viz_channel));
            Model<float> model = load_model<float>(viz_ckpt);
            RgbImage image = read_rgb8(viz_image);
            DepthMap sparse = load_depth_png(viz_sparse);
            model.forward(image_to_tensor<float>(image), depth_to_tensor<float>(sparse), false);

            // Regenerate the channel-wise kernels from the traced guidance
            // activation of the requested fusion stage.
            if (viz_stage < 0 || viz_stage >= model.config.stage_count) {
                throw ValueError(fmt::format("stage {} out of range [0, {})", viz_stage,
                                             model.config.stage_count));
            }
            if (model.fusion_kinds[static_cast<std::size_t>(viz_stage)] != FusionKind::Guided) {
                throw ValueError(fmt::format("stage {} of scheme {} has no guided module",
                                             viz_stage, to_string(model.config.fusion)));
            }
            // Re-run the guidance branch up to the requested stage.
            TensorF img_t = image_to_tensor<float>(image);
            TensorF g = relu(model.g_stem_bn(model.g_stem_conv(img_t), false));
            std::vector<TensorF> ge;
            for (int i = 0; i < model.config.stage_count; ++i) {
                g = relu(model.g_down_bn[static_cast<std::size_t>(i)](
                    model.g_down[static_cast<std::size_t>(i)](g), false));
                g = model.g_enc[static_cast<std::size_t>(i)](g, false);
                ge.push_back(g);
            }
            TensorF guide_feat;
            if (model.config.fusion == FusionScheme::EE_Guided) {
                guide_feat = ge[static_cast<std::size_t>(viz_stage)];
            } else {
                const int s = model.config.stage_count;
                std::vector<TensorF> gd(static_cast<std::size_t>(s));
                gd[static_cast<std::size_t>(s - 1)] =
                    model.g_dec[static_cast<std::size_t>(s - 1)](ge[static_cast<std::size_t>(s - 1)], false);
                for (int i = s - 2; i >= 0; --i) {
                    TensorF up = relu(model.g_up_bn[static_cast<std::size_t>(i)](
                        model.g_up[static_cast<std::size_t>(i)](gd[static_cast<std::size_t>(i + 1)]), false));
                    gd[static_cast<std::size_t>(i)] = model.g_dec[static_cast<std::size_t>(i)](
                        add(up, ge[static_cast<std::size_t>(i)]), false);
                }
                guide_feat = gd[static_cast<std::size_t>(viz_stage)];
            }
            ChannelwiseKernels<float> kernels = generate_channelwise_kernels(
                guide_feat, model.fuse_guided[static_cast<std::size_t>(viz_stage)]);
            VectorField field = kernels_to_field(kernels, 0, viz_channel);
            write_rgb8_png(viz_out, field_to_color(field, viz_percentile));
            fmt::print("wrote {}\n", viz_out);
        } else if (*selftest) {
            print_repro_header("selftest", selftest_seed, "selftest");
            const bool ok = run_selftest(selftest_seed);
            return ok ? kExitOk : kExitSelftest;
        }
    } catch (const IoError& e) {
        std::cerr << "error category=io: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "error category=numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error category=usage: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error category=usage: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}
