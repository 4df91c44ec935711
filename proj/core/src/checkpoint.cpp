#include "gdc/checkpoint.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>

#include "gdc/errors.hpp"

namespace gdc {

namespace {

constexpr char kMagic[4] = {'G', 'D', 'C', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError(fmt::format("truncated checkpoint '{}'", path));
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& out, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

}  // namespace

std::int64_t NamedTensorRecord::numel() const {
    std::int64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
}

void write_gdc1(const std::string& path, const std::vector<NamedTensorRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(records.size()));
    for (const NamedTensorRecord& r : records) {
        if (static_cast<std::int64_t>(r.data.size()) != r.numel()) {
            throw ValueError(fmt::format("record '{}': {} values but dims give {}", r.name,
                                         r.data.size(), r.numel()));
        }
        put_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
        for (std::uint32_t d : r.dims) put_u32(out, d);
        for (float v : r.data) put_f32(out, v);
    }
    if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

std::vector<NamedTensorRecord> read_gdc1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path));
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(fmt::format("'{}' is not a GDC1 checkpoint", path));
    }
    const std::uint32_t count = get_u32(in, path);
    std::vector<NamedTensorRecord> records(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensorRecord& r = records[i];
        const std::uint32_t name_len = get_u32(in, path);
        r.name.resize(name_len);
        in.read(r.name.data(), name_len);
        const std::uint32_t rank = get_u32(in, path);
        r.dims.resize(rank);
        for (std::uint32_t d = 0; d < rank; ++d) r.dims[d] = get_u32(in, path);
        r.data.resize(static_cast<std::size_t>(r.numel()));
        for (float& v : r.data) {
            const std::uint32_t bits = get_u32(in, path);
            std::memcpy(&v, &bits, 4);
        }
        if (!in) throw IoError(fmt::format("truncated checkpoint '{}'", path));
    }
    return records;
}

namespace {

template <typename T>
NamedTensorRecord to_record(const std::string& name, const Tensor<T>& t) {
    NamedTensorRecord r;
    r.name = name;
    const Shape4 s = t.shape();
    r.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    r.data.resize(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        r.data[static_cast<std::size_t>(i)] = static_cast<float>(t.data()[i]);
    }
    return r;
}

NamedTensorRecord config_record(const std::string& text) {
    NamedTensorRecord r;
    r.name = kConfigRecordName;
    r.dims = {static_cast<std::uint32_t>(text.size())};
    r.data.reserve(text.size());
    for (unsigned char c : text) r.data.push_back(static_cast<float>(c));
    return r;
}

std::string decode_config(const NamedTensorRecord& r) {
    std::string s;
    s.reserve(r.data.size());
    for (float v : r.data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    return s;
}

}  // namespace

template <typename T>
void save_model(const std::string& path, const Model<T>& model) {
    std::vector<NamedTensorRecord> records;
    records.push_back(config_record(model.config.to_kv()));
    for (const auto& [name, t] : model.bank.params) records.push_back(to_record(name, t));
    for (const auto& [name, t] : model.bank.buffers) records.push_back(to_record(name, t));
    write_gdc1(path, records);
}

template <typename T>
Model<T> load_model(const std::string& path) {
    std::vector<NamedTensorRecord> records = read_gdc1(path);
    if (records.empty() || records.front().name != kConfigRecordName) {
        throw IoError(fmt::format("'{}' has no config preamble; not a model checkpoint", path));
    }
    NetConfig config = NetConfig::from_kv(decode_config(records.front()));
    Model<T> model = build<T>(config, 0);

    auto fill = [&](const std::string& name, Tensor<T>& t) {
        for (const NamedTensorRecord& r : records) {
            if (r.name != name) continue;
            if (r.numel() != t.numel()) {
                throw IoError(fmt::format("checkpoint record '{}' has {} values, expected {}",
                                          name, r.numel(), t.numel()));
            }
            for (std::int64_t i = 0; i < t.numel(); ++i) {
                t.data()[i] = static_cast<T>(r.data[static_cast<std::size_t>(i)]);
            }
            return;
        }
        throw IoError(fmt::format("checkpoint is missing record '{}'", name));
    };
    for (auto& [name, t] : model.bank.params) fill(name, t);
    for (auto& [name, t] : model.bank.buffers) fill(name, t);
    return model;
}

template void save_model(const std::string&, const Model<float>&);
template void save_model(const std::string&, const Model<double>&);
template Model<float> load_model(const std::string&);
template Model<double> load_model(const std::string&);

}  // namespace gdc
