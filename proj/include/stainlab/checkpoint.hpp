#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace stainlab::ckpt {

/// Versioned container: a JSON header (spec parameters, counters, configuration) plus flat,
/// named float tensors and opaque byte blobs.
///
/// Layout: "STAINLAB" | u32 version | u64 header bytes | header JSON | payload.
/// The header's "tensors" and "blobs" arrays give each entry's offset into the payload.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, torch::Tensor> tensors;
    std::map<std::string, std::string> blobs;
};

void write(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read(const std::filesystem::path& path);

/// Copies every parameter and buffer of `module` into `ckpt` under `prefix`.
void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);

/// Overwrites the module's parameters and buffers in place; names and shapes must match exactly.
void load_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

}  // namespace stainlab::ckpt
