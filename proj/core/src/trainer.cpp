#include "gdc/trainer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "gdc/autograd.hpp"
#include "gdc/checkpoint.hpp"
#include "gdc/errors.hpp"
#include "gdc/ops.hpp"
#include "gdc/rng.hpp"

namespace fs = std::filesystem;

namespace gdc {

std::string TrainConfig::to_kv() const {
    return fmt::format(
        "lr0={:.9g}\nweight_decay={:.9g}\nlr_halving_period_iters={}\nbatch_size={}\n"
        "max_iters={}\nseed={}\nprecision={}\nloss_mean_mode={}\ncheckpoint_every_iters={}\n"
        "adam_beta1={:.9g}\nadam_beta2={:.9g}\nadam_eps={:.9g}\n",
        lr0, weight_decay, lr_halving_period_iters, batch_size, max_iters, seed,
        precision == Precision::F32 ? "f32" : "f64", loss_mean_mode ? 1 : 0,
        checkpoint_every_iters, adam_beta1, adam_beta2, adam_eps);
}

double lr_at(const TrainConfig& config, int iter) {
    const int halvings = iter / config.lr_halving_period_iters;
    return config.lr0 * std::pow(0.5, halvings);
}

template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                          bool mean_mode) {
    if (!(pred.shape() == gt.shape()) || !(pred.shape() == mask.shape())) {
        throw ShapeError(fmt::format("masked_mse_loss: pred {}, gt {}, mask {} must agree",
                                     pred.shape().str(), gt.shape().str(), mask.shape().str()));
    }
    T mask_count = T(0);
    for (std::int64_t i = 0; i < mask.numel(); ++i) mask_count += mask.data()[i];
    if (!(mask_count > T(0))) throw ValueError("masked_mse_loss: empty validity mask");

    Tensor<T> diff = sub(pred, gt);
    Tensor<T> masked = mul(diff, mask);
    Tensor<T> sq = mul(masked, masked);
    Tensor<T> total = sum_all(sq);
    if (!mean_mode) return total;
    return scale(total, T(1) / mask_count);
}

template <typename T>
AdamState<T> AdamState<T>::init(const ParamBank<T>& bank) {
    AdamState<T> s;
    s.m.reserve(bank.params.size());
    s.v.reserve(bank.params.size());
    for (const auto& [name, t] : bank.params) {
        s.m.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
        s.v.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
    }
    return s;
}

template <typename T>
void adam_step(ParamBank<T>& bank, AdamState<T>& state, const TrainConfig& config, int iter) {
    if (state.m.size() != bank.params.size()) {
        throw ValueError("adam_step: state does not match parameter bank");
    }
    // A single non-finite gradient anywhere skips the whole step.
    for (auto& [name, t] : bank.params) {
        const T* g = t.grad();
        if (!g) continue;
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            if (!std::isfinite(static_cast<double>(g[i]))) {
                ++state.skipped_steps;
                return;
            }
        }
    }

    ++state.steps_taken;
    const double lr = lr_at(config, iter);
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, state.steps_taken);
    const double bc2 = 1.0 - std::pow(b2, state.steps_taken);

    for (std::size_t p = 0; p < bank.params.size(); ++p) {
        Tensor<T>& t = bank.params[p].second;
        const T* g = t.grad();
        if (!g) continue;  // parameter unused by this graph
        T* w = t.data();
        std::vector<T>& m = state.m[p];
        std::vector<T>& v = state.v[p];
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            const double gi = static_cast<double>(g[i]) +
                              config.weight_decay * static_cast<double>(w[i]);
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                  lr * mhat / (std::sqrt(vhat) + config.adam_eps));
        }
    }
}

template <typename T>
Tensor<T> image_to_tensor(const RgbImage& img) {
    Tensor<T> t = Tensor<T>::zeros({1, 3, img.h, img.w});
    for (std::size_t i = 0; i < img.rgb.size(); ++i) t.data()[i] = static_cast<T>(img.rgb[i]);
    return t;
}

template <typename T>
Tensor<T> depth_to_tensor(const DepthMap& d) {
    Tensor<T> t = Tensor<T>::zeros({1, 1, d.h, d.w});
    for (std::size_t i = 0; i < d.m.size(); ++i) t.data()[i] = static_cast<T>(d.m[i]);
    return t;
}

template <typename T>
Tensor<T> validity_mask_tensor(const DepthMap& d) {
    Tensor<T> t = Tensor<T>::zeros({1, 1, d.h, d.w});
    for (std::size_t i = 0; i < d.m.size(); ++i) t.data()[i] = d.m[i] > 0.0f ? T(1) : T(0);
    return t;
}

namespace {

// Stacks per-sample tensors along the batch dimension.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    const Shape4 s0 = items.front().shape();
    Tensor<T> out = Tensor<T>::zeros({static_cast<int>(items.size()), s0.c, s0.h, s0.w});
    const std::int64_t per = s0.numel();
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::copy_n(items[i].data(), per, out.data() + static_cast<std::int64_t>(i) * per);
    }
    return out;
}

template <typename T>
struct Batch {
    Tensor<T> image, sparse, gt, mask;
};

template <typename T>
Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& idx) {
    std::vector<Tensor<T>> images, sparses, gts, masks;
    for (std::size_t i : idx) {
        const SparseDepthSample& s = data.samples[i];
        images.push_back(image_to_tensor<T>(s.image));
        sparses.push_back(depth_to_tensor<T>(s.sparse));
        gts.push_back(depth_to_tensor<T>(s.gt));
        masks.push_back(validity_mask_tensor<T>(s.gt));
    }
    return {stack_batch(images), stack_batch(sparses), stack_batch(gts), stack_batch(masks)};
}

std::string loss_csv_text(const std::vector<LossRow>& rows) {
    std::string s = "iter,loss,lr\n";
    for (const LossRow& r : rows) s += fmt::format("{},{:.9g},{:.9g}\n", r.iter, r.loss, r.lr);
    return s;
}

}  // namespace

template <typename T>
MetricReport evaluate_model(Model<T>& model, const Dataset& data) {
    std::vector<MetricReport> reports;
    for (const SparseDepthSample& s : data.samples) {
        Tensor<T> image = image_to_tensor<T>(s.image);
        Tensor<T> sparse = depth_to_tensor<T>(s.sparse);
        Tensor<T> pred = model.forward(image, sparse, /*training=*/false);
        std::vector<float> predf(static_cast<std::size_t>(pred.numel()));
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            predf[static_cast<std::size_t>(i)] = static_cast<float>(pred.data()[i]);
        }
        reports.push_back(evaluate_span(predf.data(), s.gt.m.data(),
                                        static_cast<std::int64_t>(s.gt.m.size())));
    }
    return average_reports(reports);
}

template <typename T>
TrainResult train(Model<T>& model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config, const std::string& run_dir) {
    if (train_data.samples.empty()) throw ValueError("train: empty dataset");
    if (config.max_iters <= 0 || config.batch_size <= 0 || config.lr0 <= 0 ||
        config.lr_halving_period_iters <= 0) {
        throw ValueError("train: config values must be positive");
    }
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    {
        std::ofstream cfg(fs::path(run_dir) / "config.txt");
        cfg << config.to_kv() << model.config.to_kv();
    }

    TrainResult result;
    AdamState<T> adam = AdamState<T>::init(model.bank);
    RngStream shuffle_rng(config.seed, "shuffle");

    const std::size_t n = train_data.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::size_t cursor = n;  // triggers a reshuffle on first use

    std::string last_good;
    auto save_checkpoint = [&](int iter) {
        const std::string p =
            (fs::path(run_dir) / "checkpoints" / fmt::format("iter_{}.gdc1", iter)).string();
        save_model(p, model);
        last_good = p;
        return p;
    };

    for (int iter = 0; iter < config.max_iters; ++iter) {
        std::vector<std::size_t> idx;
        idx.reserve(static_cast<std::size_t>(config.batch_size));
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor >= n) {
                for (std::size_t i = n; i > 1; --i) {
                    const std::size_t j = static_cast<std::size_t>(
                        shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
                    std::swap(order[i - 1], order[j]);
                }
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        Batch<T> batch = make_batch<T>(train_data, idx);

        GradTape<T> tape;
        double loss_value;
        {
            TapeScope<T> scope(tape);
            Tensor<T> pred = model.forward(batch.image, batch.sparse, /*training=*/true);
            Tensor<T> loss = masked_mse_loss(pred, batch.gt, batch.mask, config.loss_mean_mode);
            loss_value = static_cast<double>(loss.data()[0]);
            result.loss_curve.push_back({iter, loss_value, lr_at(config, iter)});
            if (!std::isfinite(loss_value)) {
                result.aborted_non_finite = true;
                break;
            }
            model.zero_grads();
            tape.backward(loss);
        }
        adam_step(model.bank, adam, config, iter);

        if ((iter + 1) % config.checkpoint_every_iters == 0) save_checkpoint(iter + 1);
    }

    result.adam_skipped_steps = adam.skipped_steps;
    {
        std::ofstream csv(fs::path(run_dir) / "loss.csv");
        csv << loss_csv_text(result.loss_curve);
    }
    if (result.aborted_non_finite) {
        result.final_checkpoint = last_good;
        throw NumericError(fmt::format(
            "train: non-finite loss at iter {}; last good checkpoint: {}",
            result.loss_curve.back().iter, last_good.empty() ? "(none)" : last_good));
    }

    result.final_checkpoint = save_checkpoint(config.max_iters);
    if (!val_data.samples.empty()) {
        result.val_metrics = evaluate_model(model, val_data);
        std::ofstream mv(fs::path(run_dir) / "metrics_val.txt");
        mv << result.val_metrics.to_kv();
    }
    return result;
}

std::string AblationTable::table_text() const {
    std::string s = fmt::format("{:<12} {:>12} {:>12} {:>12} {:>12}\n", "scheme", "RMSE[mm]",
                                "MAE[mm]", "iRMSE[1/km]", "iMAE[1/km]");
    for (const AblationRow& r : rows) {
        s += fmt::format("{:<12} {:>12.3f} {:>12.3f} {:>12.4f} {:>12.4f}\n",
                         to_string(r.scheme), r.mean_rmse_mm, r.mean_report.mae_mm,
                         r.mean_report.irmse_per_km, r.mean_report.imae_per_km);
    }
    return s;
}

std::string AblationTable::csv_text() const {
    std::string s = "scheme,mean_rmse_mm,mae_mm,irmse_per_km,imae_per_km,seeds\n";
    for (const AblationRow& r : rows) {
        std::string seeds;
        for (std::size_t i = 0; i < r.rmse_mm_per_seed.size(); ++i) {
            seeds += fmt::format("{}{:.3f}", i ? ";" : "", r.rmse_mm_per_seed[i]);
        }
        s += fmt::format("{},{:.3f},{:.3f},{:.4f},{:.4f},{}\n", to_string(r.scheme),
                         r.mean_rmse_mm, r.mean_report.mae_mm, r.mean_report.irmse_per_km,
                         r.mean_report.imae_per_km, seeds);
    }
    return s;
}

AblationTable run_ablation(const std::vector<FusionScheme>& schemes, const NetConfig& base_config,
                           const TrainConfig& train_config, const Dataset& train_data,
                           const Dataset& val_data, const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir) {
    if (schemes.size() < 2) throw ValueError("run_ablation: need at least two schemes");
    if (seeds.empty()) throw ValueError("run_ablation: need at least one seed");
    fs::create_directories(out_dir);

    AblationTable table;
    for (FusionScheme scheme : schemes) {
        AblationRow row;
        row.scheme = scheme;
        std::vector<MetricReport> reports;
        for (std::uint64_t seed : seeds) {
            NetConfig nc = base_config;
            nc.fusion = scheme;
            TrainConfig tc = train_config;
            tc.seed = seed;
            Model<float> model = build<float>(nc, seed);
            const std::string run_dir =
                (fs::path(out_dir) / fmt::format("{}_seed{}", to_string(scheme), seed)).string();
            TrainResult r = train(model, train_data, val_data, tc, run_dir);
            row.rmse_mm_per_seed.push_back(r.val_metrics.rmse_mm);
            reports.push_back(r.val_metrics);
        }
        row.mean_report = average_reports(reports);
        row.mean_rmse_mm = row.mean_report.rmse_mm;
        table.rows.push_back(std::move(row));
    }
    std::sort(table.rows.begin(), table.rows.end(),
              [](const AblationRow& a, const AblationRow& b) {
                  return a.mean_rmse_mm < b.mean_rmse_mm;
              });
    std::ofstream txt(fs::path(out_dir) / "ablation.txt");
    txt << table.table_text();
    std::ofstream csv(fs::path(out_dir) / "ablation.csv");
    csv << table.csv_text();
    return table;
}

#define GDC_INSTANTIATE_TRAINER(T)                                                          \
    template Tensor<T> masked_mse_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       bool);                                               \
    template struct AdamState<T>;                                                           \
    template void adam_step(ParamBank<T>&, AdamState<T>&, const TrainConfig&, int);         \
    template TrainResult train(Model<T>&, const Dataset&, const Dataset&, const TrainConfig&, \
                               const std::string&);                                         \
    template MetricReport evaluate_model(Model<T>&, const Dataset&);                        \
    template Tensor<T> image_to_tensor<T>(const RgbImage&);                                 \
    template Tensor<T> depth_to_tensor<T>(const DepthMap&);                                 \
    template Tensor<T> validity_mask_tensor<T>(const DepthMap&);

GDC_INSTANTIATE_TRAINER(float)
GDC_INSTANTIATE_TRAINER(double)

#undef GDC_INSTANTIATE_TRAINER

}  // namespace gdc
