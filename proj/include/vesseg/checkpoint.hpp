#pragma once

#include <memory>
#include <string>

#include "vesseg/architectures.hpp"

namespace vesseg {

// Single-file binary checkpoint: a text header (network kind, architecture,
// selection metadata), then a manifest of layer paths + shapes with raw
// little-endian float32 data. Snapshots are quantized to float32 when taken,
// so save -> load -> forward reproduces the snapshot bit for bit.
struct Checkpoint {
    std::string kind;  // unet | cae | socae
    ModelConfig model;
    std::int64_t epoch = 0;
    double val_metric = 0.0;
    std::string config_hash;
    NetworkParams params;

    static Checkpoint snapshot(const std::string& kind, const ModelConfig& model,
                               const NetworkParams& params, std::int64_t epoch, double val_metric,
                               const std::string& config_hash);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// Rebuild networks from a checkpoint; shapes and paths must match exactly.
UNet restore_unet(const Checkpoint& ckpt);
std::unique_ptr<AutoEncoder> restore_autoencoder(const Checkpoint& ckpt);

}  // namespace vesseg
