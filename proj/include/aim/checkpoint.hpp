#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "aim/graph.hpp"
#include "aim/tensor.hpp"

namespace aim {

// "AIMC" container: magic, u32 format version, then repeated records
// {u32 name length, name utf-8, u8 rank, u32 dims x rank, f32 payload},
// little-endian throughout.
void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

void save_params(const std::string& path, const ParamStore& ps);
void load_params(const std::string& path, ParamStore& ps);

// "AIMT" raw tensor file: magic, u8 rank, u32 dims, f32 payload.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

std::uint64_t file_checksum(const std::string& path);

}  // namespace aim
