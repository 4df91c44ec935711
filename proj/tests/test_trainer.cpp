#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "gdc/autograd.hpp"
#include "gdc/checkpoint.hpp"
#include "gdc/trainer.hpp"
#include "oracles.hpp"

using namespace gdc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gdc_train_" + std::to_string(RngStream(::getpid(), "tmp2").engine()()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Dataset tiny_dataset(int count, int h, int w, int sparse_n, std::uint64_t seed) {
    Dataset ds;
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = make_random_scene_spec(seed + static_cast<std::uint64_t>(i), 10.0);
        spec.cam.cx = w / 2.0;
        spec.cam.cy = h / 2.0;
        spec.cam.fx = spec.cam.fy = 0.75 * w;
        auto [img, gt] = generate_scene(spec, h, w);
        SparseDepthSample s;
        s.image = std::move(img);
        s.sparse = sample_fixed_count(gt, sparse_n, seed + static_cast<std::uint64_t>(i));
        s.gt = std::move(gt);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("masked_mse_loss: basic values") {
    TensorD pred = TensorD::from_data({1, 1, 1, 3}, {1, 1, 5});
    TensorD gt = TensorD::from_data({1, 1, 1, 3}, {1, 2, 3});
    TensorD mask = TensorD::full({1, 1, 1, 3}, 1.0);
    CHECK(masked_mse_loss(pred, gt, mask, false).data()[0] == 5.0);  // 0 + 1 + 4
    CHECK(masked_mse_loss(gt, gt, mask, false).data()[0] == 0.0);
    CHECK(masked_mse_loss(pred, gt, mask, true).data()[0] == doctest::Approx(5.0 / 3.0));
    TensorD empty_mask = TensorD::zeros({1, 1, 1, 3});
    CHECK_THROWS_AS(masked_mse_loss(pred, gt, empty_mask, false), ValueError);
}

TEST_CASE("masked_mse_loss: gradient is 2(D - gt) on the mask and 0 off it") {
    RngStream rng(61, "loss-grad");
    TensorD pred = TensorD::zeros({1, 1, 2, 3});
    TensorD gt = TensorD::zeros({1, 1, 2, 3});
    TensorD mask = TensorD::zeros({1, 1, 2, 3});
    oracle::fill_uniform(pred, rng, 0, 5);
    oracle::fill_uniform(gt, rng, 0, 5);
    for (int i = 0; i < 6; ++i) mask.data()[i] = i % 2 == 0 ? 1.0 : 0.0;

    pred.set_requires_grad(true);
    GradTape<double> tape;
    {
        TapeScope<double> scope(tape);
        tape.backward(masked_mse_loss(pred, gt, mask, false));
    }
    for (int i = 0; i < 6; ++i) {
        const double expect = mask.data()[i] * 2.0 * (pred.data()[i] - gt.data()[i]);
        CHECK(pred.grad()[i] == doctest::Approx(expect).epsilon(1e-12));
    }

    auto fwd = [&]() { return masked_mse_loss(pred, gt, mask, false); };
    CHECK(oracle::max_rel_grad_error(fwd, {pred}) < 1e-4);
}

TEST_CASE("loss gradient vanishes off-mask: perturbing invalid pixels leaves the loss fixed") {
    TensorD pred = TensorD::from_data({1, 1, 1, 4}, {1, 2, 3, 4});
    TensorD gt = TensorD::from_data({1, 1, 1, 4}, {2, 2, 2, 2});
    TensorD mask = TensorD::from_data({1, 1, 1, 4}, {1, 0, 1, 0});
    const double base = masked_mse_loss(pred, gt, mask, false).data()[0];
    pred.data()[1] = 99.0;
    pred.data()[3] = -99.0;
    CHECK(masked_mse_loss(pred, gt, mask, false).data()[0] == base);
}

TEST_CASE("lr schedule halves exactly at the period") {
    TrainConfig c;
    c.lr0 = 1e-3;
    c.lr_halving_period_iters = 2000;
    CHECK(lr_at(c, 0) == 1e-3);
    CHECK(lr_at(c, 1999) == 1e-3);
    CHECK(lr_at(c, 2000) == 0.5e-3);
    CHECK(lr_at(c, 4000) == 0.25e-3);
}

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
    ParamBank<double> bank;
    RngStream rng(1, "adam");
    TensorD p = bank.add_param("p", {1, 1, 1, 4}, rng, 4);
    const std::vector<double> before = p.vec();
    p.ensure_grad();  // all-zero gradient
    AdamState<double> st = AdamState<double>::init(bank);
    TrainConfig c;
    c.weight_decay = 0.0;
    adam_step(bank, st, c, 0);
    CHECK(p.vec() == before);
}

TEST_CASE("adam: first step with unit gradient is one bias-corrected lr step") {
    ParamBank<double> bank;
    TensorD p = bank.add_const_param("p", {1, 1, 1, 1}, 0.7);
    p.ensure_grad();
    p.grad_vec()[0] = 1.0;
    AdamState<double> st = AdamState<double>::init(bank);
    TrainConfig c;
    c.lr0 = 0.1;
    c.weight_decay = 0.0;
    adam_step(bank, st, c, 0);
    // m-hat = 1, v-hat = 1, step = -lr / (1 + eps).
    CHECK(p.data()[0] == doctest::Approx(0.7 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));

    // Hand-rolled recurrence for three more identical steps.
    double m = 0.1, v = 0.001, w = p.data()[0];
    for (int t = 2; t <= 4; ++t) {
        p.zero_grad();
        p.grad_vec()[0] = 1.0;
        adam_step(bank, st, c, t - 1);
        m = 0.9 * m + 0.1;
        v = 0.999 * v + 0.001;
        const double mhat = m / (1 - std::pow(0.9, t));
        const double vhat = v / (1 - std::pow(0.999, t));
        w -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
        CHECK(p.data()[0] == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("adam: a non-finite gradient skips the whole step") {
    ParamBank<double> bank;
    TensorD p = bank.add_const_param("p", {1, 1, 1, 2}, 1.0);
    p.ensure_grad();
    p.grad_vec()[0] = std::numeric_limits<double>::quiet_NaN();
    p.grad_vec()[1] = 1.0;
    AdamState<double> st = AdamState<double>::init(bank);
    TrainConfig c;
    adam_step(bank, st, c, 0);
    CHECK(st.skipped_steps == 1);
    CHECK(st.steps_taken == 0);
    CHECK(p.data()[0] == 1.0);
    CHECK(p.data()[1] == 1.0);
}

TEST_CASE("train: loss row 0 equals the untrained forward loss and runs are bit-identical") {
    TempDir tmp;
    Dataset data = tiny_dataset(4, 16, 32, 40, 5);
    NetConfig nc;
    nc.stage_count = 2;
    nc.channels_per_stage = {4, 8};
    nc.input_height = 16;
    nc.input_width = 32;
    TrainConfig tc;
    tc.batch_size = 2;
    tc.max_iters = 8;
    tc.checkpoint_every_iters = 4;
    tc.lr_halving_period_iters = 4;
    tc.seed = 3;

    Model<float> m1 = build<float>(nc, 3);
    TrainResult r1 = train(m1, data, Dataset{}, tc, tmp.file("run1"));

    // Recompute the untrained loss independently.
    Model<float> fresh = build<float>(nc, 3);
    RngStream shuffle(tc.seed, "shuffle");
    std::vector<std::size_t> order = {0, 1, 2, 3};
    for (std::size_t i = 4; i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(
            shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    TensorF img = image_to_tensor<float>(data.samples[order[0]].image);
    TensorF img2 = image_to_tensor<float>(data.samples[order[1]].image);
    // Batch of the first two shuffled samples.
    TensorF bi = TensorF::zeros({2, 3, 16, 32});
    std::copy_n(img.data(), img.numel(), bi.data());
    std::copy_n(img2.data(), img2.numel(), bi.data() + img.numel());
    TensorF s1 = depth_to_tensor<float>(data.samples[order[0]].sparse);
    TensorF s2 = depth_to_tensor<float>(data.samples[order[1]].sparse);
    TensorF bs = TensorF::zeros({2, 1, 16, 32});
    std::copy_n(s1.data(), s1.numel(), bs.data());
    std::copy_n(s2.data(), s2.numel(), bs.data() + s1.numel());
    TensorF g1 = depth_to_tensor<float>(data.samples[order[0]].gt);
    TensorF g2 = depth_to_tensor<float>(data.samples[order[1]].gt);
    TensorF bg = TensorF::zeros({2, 1, 16, 32});
    std::copy_n(g1.data(), g1.numel(), bg.data());
    std::copy_n(g2.data(), g2.numel(), bg.data() + g1.numel());
    TensorF m1t = validity_mask_tensor<float>(data.samples[order[0]].gt);
    TensorF m2t = validity_mask_tensor<float>(data.samples[order[1]].gt);
    TensorF bm = TensorF::zeros({2, 1, 16, 32});
    std::copy_n(m1t.data(), m1t.numel(), bm.data());
    std::copy_n(m2t.data(), m2t.numel(), bm.data() + m1t.numel());
    TensorF pred = fresh.forward(bi, bs, true);
    const double loss0 = masked_mse_loss(pred, bg, bm, true).data()[0];
    CHECK(r1.loss_curve[0].loss == doctest::Approx(loss0).epsilon(1e-6));

    Model<float> m2 = build<float>(nc, 3);
    TrainResult r2 = train(m2, data, Dataset{}, tc, tmp.file("run2"));
    CHECK(slurp(tmp.file("run1") + "/loss.csv") == slurp(tmp.file("run2") + "/loss.csv"));
    CHECK(!r1.loss_curve.empty());
    CHECK(fs::exists(tmp.file("run1") + "/checkpoints/iter_8.gdc1"));
    CHECK(fs::exists(tmp.file("run1") + "/config.txt"));
}

TEST_CASE("train: zero lr and zero decay leave parameters fixed") {
    TempDir tmp;
    Dataset data = tiny_dataset(2, 16, 16, 30, 8);
    NetConfig nc;
    nc.stage_count = 2;
    nc.channels_per_stage = {4, 8};
    nc.input_height = 16;
    nc.input_width = 16;
    TrainConfig tc;
    tc.batch_size = 1;
    tc.max_iters = 3;
    tc.lr0 = 1e-30;  // effectively zero while satisfying positivity checks
    tc.weight_decay = 0.0;
    Model<float> m = build<float>(nc, 5);
    std::vector<std::vector<float>> before;
    for (auto& [name, t] : m.bank.params) before.push_back(t.vec());
    train(m, data, Dataset{}, tc, tmp.file("frozen"));
    std::size_t i = 0;
    for (auto& [name, t] : m.bank.params) {
        for (std::size_t j = 0; j < t.vec().size(); ++j) {
            REQUIRE(t.vec()[j] == doctest::Approx(before[i][j]).epsilon(1e-20));
        }
        ++i;
    }
}

TEST_CASE("checkpoint round trip: save, load, forward bit-identically") {
    TempDir tmp;
    NetConfig nc;
    nc.stage_count = 2;
    nc.channels_per_stage = {4, 8};
    nc.input_height = 16;
    nc.input_width = 16;
    Model<float> m = build<float>(nc, 21);
    TensorF image = TensorF::full({1, 3, 16, 16}, 0.4f);
    TensorF sparse = TensorF::full({1, 1, 16, 16}, 2.5f);
    TensorF before = m.forward(image, sparse, false);
    save_model(tmp.file("m.gdc1"), m);
    Model<float> loaded = load_model<float>(tmp.file("m.gdc1"));
    TensorF after = loaded.forward(image, sparse, false);
    REQUIRE(before.numel() == after.numel());
    for (std::int64_t i = 0; i < before.numel(); ++i) {
        REQUIRE(before.data()[i] == after.data()[i]);
    }
}
