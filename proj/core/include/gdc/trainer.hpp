#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdc/data.hpp"
#include "gdc/metrics.hpp"
#include "gdc/network.hpp"
#include "gdc/tensor.hpp"

namespace gdc {

struct TrainConfig {
    double lr0 = 1e-3;
    double weight_decay = 1e-6;  // coupled L2, added to gradients
    // Desk-scale compression of the halve-every-50k schedule.
    int lr_halving_period_iters = 2000;
    int batch_size = 8;
    int max_iters = 10000;
    std::uint64_t seed = 1;
    Precision precision = Precision::F32;
    // The reference loss is a plain sum over valid pixels; the per-valid-pixel
    // mean keeps the magnitude independent of mask size and is the desk-scale
    // default. The active mode is recorded in the run config.
    bool loss_mean_mode = true;
    int checkpoint_every_iters = 1000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    std::string to_kv() const;
};

// lr0 * 0.5^floor(iter / period)
double lr_at(const TrainConfig& config, int iter);

// Sum (or mean) of squared prediction errors over the validity mask. mask is
// 0/1-valued and non-differentiated; gradients vanish off-mask.
template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask,
                          bool mean_mode);

// Adam with bias correction. One slot pair per parameter, in bank order.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    int steps_taken = 0;
    int skipped_steps = 0;  // non-finite gradients encountered

    static AdamState init(const ParamBank<T>& bank);
};

// Applies one update at the schedule's learning rate for `iter`. If any
// gradient element is non-finite the whole step is skipped and counted.
template <typename T>
void adam_step(ParamBank<T>& bank, AdamState<T>& state, const TrainConfig& config, int iter);

struct LossRow {
    int iter = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<LossRow> loss_curve;
    MetricReport val_metrics;
    std::string final_checkpoint;
    int adam_skipped_steps = 0;
    bool aborted_non_finite = false;
};

// Runs the training loop, writing into run_dir: config.txt, loss.csv
// (iter,loss,lr), checkpoints/iter_N.gdc1 and metrics_val.txt. A non-finite
// loss aborts with the last good checkpoint retained on disk.
template <typename T>
TrainResult train(Model<T>& model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config, const std::string& run_dir);

// Evaluates the model over a dataset (eval mode), averaging per-image reports.
template <typename T>
MetricReport evaluate_model(Model<T>& model, const Dataset& data);

struct AblationRow {
    FusionScheme scheme;
    std::vector<double> rmse_mm_per_seed;
    double mean_rmse_mm = 0.0;
    MetricReport mean_report;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // ordered by mean RMSE, best first
    std::string table_text() const;
    std::string csv_text() const;
};

// Trains every scheme with identical seeds, data order and budget (one run
// per seed) and tabulates validation metrics ordered by RMSE.
AblationTable run_ablation(const std::vector<FusionScheme>& schemes, const NetConfig& base_config,
                           const TrainConfig& train_config, const Dataset& train_data,
                           const Dataset& val_data, const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir);

// Batch assembly helpers shared by the trainer and the CLI.
template <typename T>
Tensor<T> image_to_tensor(const RgbImage& img);
template <typename T>
Tensor<T> depth_to_tensor(const DepthMap& d);
template <typename T>
Tensor<T> validity_mask_tensor(const DepthMap& d);

}  // namespace gdc
