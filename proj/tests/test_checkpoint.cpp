#include <doctest.h>

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "gdc/checkpoint.hpp"
#include "gdc/errors.hpp"
#include "gdc/rng.hpp"

using namespace gdc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gdc_ckpt_" + std::to_string(RngStream(::getpid(), "tmp3").engine()()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("gdc1: exact byte layout of a one-record file") {
    TempDir tmp;
    NamedTensorRecord r;
    r.name = "ab";
    r.dims = {2};
    r.data = {1.0f, -2.0f};
    write_gdc1(tmp.file("t.gdc1"), {r});

    std::ifstream in(tmp.file("t.gdc1"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // magic + count + (name_len + name + rank + dim + 2 floats)
    REQUIRE(bytes.size() == 4 + 4 + 4 + 2 + 4 + 4 + 8);
    CHECK(bytes.substr(0, 4) == "GDC1");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
    CHECK(p[4] == 1);  // record count, little-endian
    CHECK(p[5] == 0);
    CHECK(p[8] == 2);  // name length
    CHECK(bytes.substr(12, 2) == "ab");
    CHECK(p[14] == 1);  // rank
    CHECK(p[18] == 2);  // dim 0
    float v0, v1;
    std::memcpy(&v0, p + 22, 4);
    std::memcpy(&v1, p + 26, 4);
    CHECK(v0 == 1.0f);
    CHECK(v1 == -2.0f);
}

TEST_CASE("gdc1: round trip preserves names, dims and payload") {
    TempDir tmp;
    RngStream rng(91, "ckpt");
    std::vector<NamedTensorRecord> records;
    for (int i = 0; i < 3; ++i) {
        NamedTensorRecord r;
        r.name = "tensor_" + std::to_string(i);
        r.dims = {2, 3};
        for (int j = 0; j < 6; ++j) r.data.push_back(static_cast<float>(rng.uniform(-5, 5)));
        records.push_back(std::move(r));
    }
    write_gdc1(tmp.file("rt.gdc1"), records);
    std::vector<NamedTensorRecord> back = read_gdc1(tmp.file("rt.gdc1"));
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back[static_cast<std::size_t>(i)].name == records[static_cast<std::size_t>(i)].name);
        CHECK(back[static_cast<std::size_t>(i)].dims == records[static_cast<std::size_t>(i)].dims);
        CHECK(back[static_cast<std::size_t>(i)].data == records[static_cast<std::size_t>(i)].data);
    }
}

TEST_CASE("gdc1: rejects foreign files and truncated payloads") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("bad.gdc1"), std::ios::binary);
        out << "NOPE1234";
    }
    CHECK_THROWS_AS(read_gdc1(tmp.file("bad.gdc1")), IoError);
    CHECK_THROWS_AS(read_gdc1(tmp.file("missing.gdc1")), IoError);

    NamedTensorRecord r;
    r.name = "x";
    r.dims = {4};
    r.data = {1, 2, 3, 4};
    write_gdc1(tmp.file("trunc.gdc1"), {r});
    fs::resize_file(tmp.file("trunc.gdc1"), 20);
    CHECK_THROWS_AS(read_gdc1(tmp.file("trunc.gdc1")), IoError);
}

TEST_CASE("model checkpoints carry the config preamble as the first record") {
    TempDir tmp;
    NetConfig nc;
    nc.stage_count = 2;
    nc.channels_per_stage = {4, 8};
    nc.input_height = 16;
    nc.input_width = 16;
    nc.fusion = FusionScheme::Concat;
    Model<float> m = build<float>(nc, 17);
    save_model(tmp.file("m.gdc1"), m);

    std::vector<NamedTensorRecord> records = read_gdc1(tmp.file("m.gdc1"));
    REQUIRE(!records.empty());
    CHECK(records.front().name == kConfigRecordName);
    std::string text;
    for (float v : records.front().data) text.push_back(static_cast<char>(v));
    CHECK(text.find("fusion=Concat") != std::string::npos);

    Model<float> loaded = load_model<float>(tmp.file("m.gdc1"));
    CHECK(loaded.config.fusion == FusionScheme::Concat);
    CHECK(loaded.parameter_count() == m.parameter_count());
}

TEST_CASE("model load rejects checkpoints with missing records") {
    TempDir tmp;
    NetConfig nc;
    nc.stage_count = 2;
    nc.channels_per_stage = {4, 8};
    nc.input_height = 16;
    nc.input_width = 16;
    Model<float> m = build<float>(nc, 17);
    save_model(tmp.file("m.gdc1"), m);
    std::vector<NamedTensorRecord> records = read_gdc1(tmp.file("m.gdc1"));
    records.pop_back();
    write_gdc1(tmp.file("short.gdc1"), records);
    CHECK_THROWS_AS(load_model<float>(tmp.file("short.gdc1")), IoError);
}
