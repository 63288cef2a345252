#pragma once

#include "stmf/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace stmf {

using json = nlohmann::json;

// STMF1 tensor file: magic "STMF1\0", u8 dtype (0 = f64), u8 ndim,
// ndim x u64 little-endian shape, then the row-major f64 payload.
void write_stmf1(const std::filesystem::path& path, const Tensor& t);
Tensor read_stmf1(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

// FNV-1a over the canonical (sorted-key) JSON dump; stamps manifests and
// checkpoints so reruns can be matched to their exact configuration.
uint64_t config_hash(const json& j);

std::string hex_u64(uint64_t v);

// Append-style CSV writer with a fixed header row.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
    void row(const std::vector<double>& values);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    size_t ncols_;
};

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b);

} // namespace stmf
