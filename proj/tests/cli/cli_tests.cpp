// End-to-end checks of the gdc executable. Invoked with the binary path as
// argv[1]; each check shells out and inspects exit codes and artifacts.

#include <fmt/format.h>

#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_bin;
fs::path g_tmp;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string cmd = g_bin + " " + args + " 2>&1";
    std::array<char, 4096> buf;
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        r.exit_code = -1;
        return r;
    }
    while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

void check(bool ok, const std::string& what) {
    if (!ok) {
        ++g_failures;
        std::cerr << "FAIL: " << what << "\n";
    } else {
        std::cout << "ok: " << what << "\n";
    }
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
    for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        if (!fs::exists(other)) return false;
        if (slurp(entry.path()) != slurp(other)) return false;
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: gdc_cli_tests <path-to-gdc-binary>\n";
        return 2;
    }
    g_bin = argv[1];
    g_tmp = fs::temp_directory_path() / fmt::format("gdc_cli_{}", ::getpid());
    fs::create_directories(g_tmp);

    // --help enumerates every subcommand.
    RunResult help = run("--help");
    check(help.exit_code == 0, "--help exits 0");
    for (const char* sub : {"synth", "train", "ablate", "eval", "complete", "cost",
                            "viz-kernels", "selftest"}) {
        check(help.output.find(sub) != std::string::npos,
              fmt::format("--help lists '{}'", sub));
    }

    // Unknown flags are rejected with the usage exit code.
    check(run("cost --definitely-not-a-flag 1").exit_code == 2, "unknown flag exits 2");
    check(run("").exit_code == 2, "missing subcommand exits 2");

    // Worked example figures in the cost table.
    RunResult cost = run("cost --M 128 --N 128 --H 64 --B 304 --K 3");
    check(cost.exit_code == 0, "cost exits 0");
    check(cost.output.find("10.7 GB") != std::string::npos, "cost prints 10.7 GB");
    check(cost.output.find("0.08 GB") != std::string::npos, "cost prints 0.08 GB");
    check(cost.output.find("config_hash=") != std::string::npos,
          "reproducibility header present");

    // Seeded synthesis is byte-identical.
    const fs::path da = g_tmp / "d1";
    const fs::path db = g_tmp / "d2";
    RunResult s1 = run(fmt::format("synth --seed 7 --count 4 --out {} --height 16 --width 32 "
                                   "--sparse-count 25", da.string()));
    RunResult s2 = run(fmt::format("synth --seed 7 --count 4 --out {} --height 16 --width 32 "
                                   "--sparse-count 25", db.string()));
    check(s1.exit_code == 0 && s2.exit_code == 0, "synth exits 0");
    check(dirs_identical(da, db), "synth twice with one seed is byte-identical");

    // Missing input files exit with the I/O code.
    check(run("eval --data /nonexistent --checkpoint /nonexistent.gdc1").exit_code == 3,
          "missing files exit 3");

    // A tiny end-to-end train -> eval -> complete -> viz-kernels chain.
    const fs::path run_dir = g_tmp / "run";
    RunResult tr = run(fmt::format(
        "train --data {} --val {} --out {} --seed 3 --stages 2 --channels 4,8 --height 16 "
        "--width 32 --iters 4 --batch-size 2 --checkpoint-every 2 --lr-period 2",
        da.string(), da.string(), run_dir.string()));
    check(tr.exit_code == 0, "train exits 0");
    const fs::path ckpt = run_dir / "checkpoints" / "iter_4.gdc1";
    check(fs::exists(ckpt), "train writes the final checkpoint");
    check(fs::exists(run_dir / "loss.csv"), "train writes loss.csv");
    check(fs::exists(run_dir / "config.txt"), "train writes config.txt");
    check(fs::exists(run_dir / "metrics_val.txt"), "train writes metrics_val.txt");

    RunResult ev = run(fmt::format("eval --data {} --checkpoint {}", da.string(), ckpt.string()));
    check(ev.exit_code == 0, "eval exits 0");
    check(ev.output.find("rmse_mm=") != std::string::npos, "eval prints the kv report");

    RunResult co = run(fmt::format(
        "complete --checkpoint {} --image {} --sparse {} --out {} --color {}", ckpt.string(),
        (da / "image_0000.png").string(), (da / "sparse_0000.png").string(),
        (g_tmp / "dense.png").string(), (g_tmp / "dense_color.png").string()));
    check(co.exit_code == 0, "complete exits 0");
    check(fs::exists(g_tmp / "dense.png"), "complete writes the dense depth PNG");

    RunResult vz = run(fmt::format(
        "viz-kernels --checkpoint {} --image {} --sparse {} --out {} --stage 0 --channel 1",
        ckpt.string(), (da / "image_0000.png").string(), (da / "sparse_0000.png").string(),
        (g_tmp / "kernels.png").string()));
    check(vz.exit_code == 0, "viz-kernels exits 0");
    check(fs::exists(g_tmp / "kernels.png"), "viz-kernels writes the PNG");

    // selftest runs the embedded invariant groups.
    RunResult st = run("selftest");
    check(st.exit_code == 0, "selftest exits 0");
    check(st.output.find("factorization-identity") != std::string::npos &&
              st.output.find("pass") != std::string::npos,
          "selftest prints per-group results");

    fs::remove_all(g_tmp);
    if (g_failures == 0) {
        std::cout << "all cli checks passed\n";
        return 0;
    }
    std::cerr << g_failures << " cli checks failed\n";
    return 1;
}
