#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdc/network.hpp"

namespace gdc {

// One record of a GDC1 container. The container layout is: magic bytes
// "GDC1", little-endian u32 record count, then per record a u32 name length,
// the UTF-8 name, u32 rank, rank u32 dims, and the raw little-endian 32-bit
// floats.
struct NamedTensorRecord {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::int64_t numel() const;
};

void write_gdc1(const std::string& path, const std::vector<NamedTensorRecord>& records);
std::vector<NamedTensorRecord> read_gdc1(const std::string& path);

// Model checkpoints carry the architecture as a key=value preamble: the first
// record, named "__config__", stores the config text one byte per float so
// any conforming GDC1 reader can decode it. Parameters and batch-norm
// buffers follow by name.
inline constexpr const char* kConfigRecordName = "__config__";

template <typename T>
void save_model(const std::string& path, const Model<T>& model);

template <typename T>
Model<T> load_model(const std::string& path);

}  // namespace gdc
