#pragma once
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "horai/model.hpp"
#include "horai/tensor.hpp"

namespace horai {

// Shared container: a UTF-8 manifest (config line, optional RNG line, one
// line per tensor with shape and byte offset) followed by a little-endian
// float32 payload in manifest order. Used by checkpoints and window packs.
struct TensorArchive {
    std::string kind = "HORAI-CKPT";  // or HORAI-PACK
    std::string config_json;          // "-" when absent
    std::string rng_state;            // "-" when absent
    std::vector<std::pair<std::string, Tensor>> tensors;  // manifest order

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

void write_archive(const std::string& path, const TensorArchive& archive);
TensorArchive read_archive(const std::string& path, const std::string& expected_kind);

// Model checkpoint: every parameter plus the config snapshot and the training
// RNG state. Reloading reproduces forward outputs bit-identically.
void save_checkpoint(const HoraiModel& model, const std::string& path,
                     const std::string& config_json, const std::string& rng_state);

struct CheckpointInfo {
    std::string config_json;
    std::string rng_state;
};

// Loads parameter tensors into an already-constructed model; a shape mismatch
// names the offending tensor.
CheckpointInfo load_checkpoint(HoraiModel& model, const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace horai
