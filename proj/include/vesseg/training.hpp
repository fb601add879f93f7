#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vesseg/checkpoint.hpp"
#include "vesseg/data.hpp"
#include "vesseg/losses.hpp"
#include "vesseg/metrics.hpp"

namespace vesseg::train {

struct TrainConfig {
    std::string stage = "seg";  // ae | seg
    double learning_rate = 1e-3;
    index_t batch_size = 4;
    index_t epochs = 200;
    double lambda = 40.0;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";
    std::string prior = "none";  // none | cae | socae
    bool augment = false;

    void validate() const;
    static TrainConfig from_config(const KeyValueConfig& cfg);
    void to_config(KeyValueConfig& cfg) const;
    static const std::set<std::string>& config_keys();
};

struct DatasetSplit {
    std::vector<const data::ImageSample*> train;
    std::vector<const data::ImageSample*> val;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> train_curve;  // mean training loss per epoch
    std::vector<double> val_curve;    // validation metric per epoch
};

// hash binding a checkpoint to the exact model + training configuration
std::string config_fingerprint(const std::string& network_kind, const ModelConfig& mcfg,
                               const TrainConfig& tcfg);

// inverse foreground frequency (total / foreground pixels) of the fold
double positive_class_weight(const std::vector<const data::ImageSample*>& samples);

// Stage 1: auto-encoder pretraining on ground-truth masks; best epoch by
// validation reconstruction MSE (training MSE when no validation split).
TrainResult train_autoencoder(const std::string& model_kind, const DatasetSplit& split,
                              const ModelConfig& mcfg, const TrainConfig& tcfg,
                              std::ostream* log = nullptr);

// Stage 2: segmenter training with the lambda-weighted shape prior; best
// epoch by validation DSC.
TrainResult train_segmenter(const DatasetSplit& split, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, AutoEncoder* frozen_encoder,
                            std::ostream* log = nullptr);

struct CrossValResult {
    metrics::MetricsReport report;
    int completed_folds = 0;
    int requested_folds = 0;
    std::vector<std::string> audit_log;  // per-fold case-id ledger (AE leakage audit)
    bool complete() const { return completed_folds == requested_folds; }
};

// Per fold: stage 1 on the fold's training masks (AE validation carved out of
// the training cases — fold-validation cases never reach the AE), stage 2,
// then evaluation of every fold-validation case.
CrossValResult cross_validate(const std::vector<data::ImageSample>& samples, int k,
                              const ModelConfig& seg_cfg, const ModelConfig& ae_cfg,
                              const TrainConfig& ae_tcfg, const TrainConfig& seg_tcfg,
                              std::ostream* log = nullptr);

// evaluation-mode prediction for one sample
Tensor predict_probability(UNet& net, const data::ImageSample& sample);

}  // namespace vesseg::train
