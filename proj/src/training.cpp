#include "vesseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace vesseg::train {

namespace {
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (salt * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

void log_line(std::ostream* log, const std::string& line) {
    if (log) (*log) << line << '\n';
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace

void TrainConfig::validate() const {
    if (stage != "ae" && stage != "seg") throw ConfigError("stage must be ae or seg, got '" + stage + "'");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
    if (optimizer != "adam") throw ConfigError("optimizer must be adam, got '" + optimizer + "'");
    if (prior != "none" && prior != "cae" && prior != "socae")
        throw ConfigError("prior must be none, cae or socae, got '" + prior + "'");
}

const std::set<std::string>& TrainConfig::config_keys() {
    static const std::set<std::string> keys = {"stage",  "learning_rate", "batch_size", "epochs",
                                               "lambda", "seed",          "optimizer",  "prior",
                                               "augment"};
    return keys;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
    TrainConfig t;
    t.stage = cfg.get_or("stage", t.stage);
    t.learning_rate = cfg.get_real_or("learning_rate", t.learning_rate);
    t.batch_size = cfg.get_int_or("batch_size", t.batch_size);
    t.epochs = cfg.get_int_or("epochs", t.epochs);
    t.lambda = cfg.get_real_or("lambda", t.lambda);
    t.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
    t.optimizer = cfg.get_or("optimizer", t.optimizer);
    t.prior = cfg.get_or("prior", t.prior);
    t.augment = cfg.get_bool_or("augment", t.augment);
    return t;
}

void TrainConfig::to_config(KeyValueConfig& cfg) const {
    cfg.set("stage", stage);
    char lr[32], lm[32];
    std::snprintf(lr, sizeof(lr), "%.9g", learning_rate);
    std::snprintf(lm, sizeof(lm), "%.9g", lambda);
    cfg.set("learning_rate", lr);
    cfg.set("batch_size", std::to_string(batch_size));
    cfg.set("epochs", std::to_string(epochs));
    cfg.set("lambda", lm);
    cfg.set("seed", std::to_string(seed));
    cfg.set("optimizer", optimizer);
    cfg.set("prior", prior);
    cfg.set("augment", augment ? "true" : "false");
}

std::string config_fingerprint(const std::string& network_kind, const ModelConfig& mcfg,
                               const TrainConfig& tcfg) {
    KeyValueConfig kv;
    kv.set("network", network_kind);
    mcfg.to_config(kv);
    tcfg.to_config(kv);
    return kv.hash();
}

double positive_class_weight(const std::vector<const data::ImageSample*>& samples) {
    index_t total = 0, fg = 0;
    for (const data::ImageSample* s : samples) {
        total += s->mask.h * s->mask.w;
        fg += s->mask.foreground_count();
    }
    if (fg == 0) return 1.0;
    return static_cast<double>(total) / static_cast<double>(fg);
}

Tensor predict_probability(UNet& net, const data::ImageSample& sample) {
    Tensor x({1, sample.image.dim(0), sample.image.dim(1), sample.image.dim(2)}, sample.image.data);
    return net.predict(x);
}

namespace {

struct Batcher {
    std::vector<index_t> order;
    index_t batch_size;

    Batcher(size_t n, index_t bs, Rng& rng) : batch_size(bs) {
        order.resize(n);
        for (size_t i = 0; i < n; ++i) order[i] = static_cast<index_t>(i);
        rng.shuffle(order);
    }
    index_t num_batches() const {
        return (static_cast<index_t>(order.size()) + batch_size - 1) / batch_size;
    }
    std::vector<index_t> batch(index_t b) const {
        std::vector<index_t> out;
        for (index_t i = b * batch_size; i < std::min<index_t>((b + 1) * batch_size, order.size()); ++i)
            out.push_back(order[static_cast<size_t>(i)]);
        return out;
    }
};

void check_mask_shape(const ModelConfig& mcfg, const data::ImageSample& s, const char* what) {
    if (s.mask.h != mcfg.input_h || s.mask.w != mcfg.input_w)
        throw ConfigError(std::string(what) + ": sample " + s.case_id + " is " + std::to_string(s.mask.h) +
                          "x" + std::to_string(s.mask.w) + " but the model expects " +
                          std::to_string(mcfg.input_h) + "x" + std::to_string(mcfg.input_w));
}

}  // namespace

TrainResult train_autoencoder(const std::string& model_kind, const DatasetSplit& split,
                              const ModelConfig& mcfg, const TrainConfig& tcfg, std::ostream* log) {
    tcfg.validate();
    if (model_kind != "cae" && model_kind != "socae")
        throw ConfigError("auto-encoder model must be cae or socae, got '" + model_kind + "'");
    if (split.train.empty()) throw ConfigError("auto-encoder training set is empty");
    for (const data::ImageSample* s : split.train) check_mask_shape(mcfg, *s, "train_autoencoder");
    for (const data::ImageSample* s : split.val) check_mask_shape(mcfg, *s, "train_autoencoder");

    std::unique_ptr<AutoEncoder> net = build_autoencoder(model_kind, mcfg, tcfg.seed);
    Adam opt({tcfg.learning_rate});
    const std::string fingerprint = config_fingerprint(model_kind, mcfg, tcfg);
    const data::AugmentationConfig aug_cfg;  // defaults; geometric part only affects masks

    TrainResult result;
    double best_metric = std::numeric_limits<double>::infinity();
    NetworkParams best_params;
    std::int64_t best_epoch = 0;
    index_t step = 0;

    for (index_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        Rng erng(mix_seed(tcfg.seed, 0xAE00u + static_cast<std::uint64_t>(epoch)));
        Batcher batcher(split.train.size(), tcfg.batch_size, erng);
        Rng arng = erng.fork(0xA06);

        double epoch_loss = 0.0;
        index_t epoch_count = 0;
        for (index_t b = 0; b < batcher.num_batches(); ++b) {
            std::vector<data::ImageSample> storage;
            storage.reserve(static_cast<size_t>(tcfg.batch_size));
            std::vector<const data::ImageSample*> batch;
            for (index_t idx : batcher.batch(b)) {
                const data::ImageSample* s = split.train[static_cast<size_t>(idx)];
                if (tcfg.augment) {
                    storage.push_back(data::augment(*s, aug_cfg, arng));
                    batch.push_back(&storage.back());
                } else {
                    batch.push_back(s);
                }
            }
            Tensor y = data::stack_masks(batch);

            ParamBank bank(net->params());
            ag::Var yv = ag::leaf(y);
            ag::Var recon = net->reconstruct(bank, yv, /*training=*/true);
            ag::Var loss = ag::mse_loss(recon, yv);
            const double lv = loss.val().item();
            ++step;
            if (!std::isfinite(lv))
                throw DivergenceError("auto-encoder loss is not finite at step " + std::to_string(step) +
                                      " (epoch " + std::to_string(epoch) + ")");
            net->params().zero_grad();
            ag::backward(loss);
            bank.flush_grads();
            opt.step(net->params());

            log_line(log, "step=" + std::to_string(step) + " mse=" + fmt(lv));
            epoch_loss += lv * static_cast<double>(batch.size());
            epoch_count += static_cast<index_t>(batch.size());
        }
        const double train_mse = epoch_loss / static_cast<double>(epoch_count);
        result.train_curve.push_back(train_mse);

        double select_metric = train_mse;
        double val_mse = std::numeric_limits<double>::quiet_NaN();
        if (!split.val.empty()) {
            double acc = 0.0;
            for (const data::ImageSample* s : split.val) {
                Tensor y = data::stack_masks({s});
                acc += reconstruction_loss(y, net->reconstruct_tensor(y)).value;
            }
            val_mse = acc / static_cast<double>(split.val.size());
            select_metric = val_mse;
        }
        result.val_curve.push_back(split.val.empty() ? train_mse : val_mse);

        if (select_metric < best_metric) {
            best_metric = select_metric;
            best_params = net->params();
            best_epoch = epoch;
        }
        log_line(log, "epoch=" + std::to_string(epoch) + " train_mse=" + fmt(train_mse) +
                          (split.val.empty() ? "" : " val_mse=" + fmt(val_mse)));
    }

    result.checkpoint =
        Checkpoint::snapshot(model_kind, mcfg, best_params, best_epoch, best_metric, fingerprint);
    return result;
}

TrainResult train_segmenter(const DatasetSplit& split, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, AutoEncoder* frozen_encoder, std::ostream* log) {
    tcfg.validate();
    if (split.train.empty()) throw ConfigError("segmenter training set is empty");
    const bool use_prior = tcfg.prior != "none";
    if (use_prior && frozen_encoder == nullptr)
        throw ConfigError("prior=" + tcfg.prior + " requires a pretrained encoder checkpoint");
    if (use_prior) {
        const ModelConfig& ecfg = frozen_encoder->config();
        if (ecfg.input_h != mcfg.input_h || ecfg.input_w != mcfg.input_w)
            throw ConfigError("encoder expects " + std::to_string(ecfg.input_h) + "x" +
                              std::to_string(ecfg.input_w) + " inputs but the segmenter produces " +
                              std::to_string(mcfg.input_h) + "x" + std::to_string(mcfg.input_w));
    }
    for (const data::ImageSample* s : split.train) check_mask_shape(mcfg, *s, "train_segmenter");
    for (const data::ImageSample* s : split.val) check_mask_shape(mcfg, *s, "train_segmenter");

    UNet net = UNet::build(mcfg, tcfg.seed);
    Adam opt({tcfg.learning_rate});
    const std::string fingerprint = config_fingerprint("unet", mcfg, tcfg);
    const double lambda_eff = use_prior ? tcfg.lambda : 0.0;
    ClassWeights w{positive_class_weight(split.train)};
    const data::AugmentationConfig aug_cfg;
    log_line(log, "positive_weight=" + fmt(w.positive_weight));

    TrainResult result;
    double best_dsc = -1.0;
    NetworkParams best_params = net.params;
    std::int64_t best_epoch = 1;
    index_t step = 0;

    for (index_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        Rng erng(mix_seed(tcfg.seed, 0x5E60u + static_cast<std::uint64_t>(epoch)));
        Batcher batcher(split.train.size(), tcfg.batch_size, erng);
        Rng arng = erng.fork(0xA06);

        double epoch_loss = 0.0;
        index_t epoch_count = 0;
        for (index_t b = 0; b < batcher.num_batches(); ++b) {
            std::vector<data::ImageSample> storage;
            storage.reserve(static_cast<size_t>(tcfg.batch_size));
            std::vector<const data::ImageSample*> batch;
            for (index_t idx : batcher.batch(b)) {
                const data::ImageSample* s = split.train[static_cast<size_t>(idx)];
                if (tcfg.augment) {
                    storage.push_back(data::augment(*s, aug_cfg, arng));
                    batch.push_back(&storage.back());
                } else {
                    batch.push_back(s);
                }
            }
            Tensor x = data::stack_images(batch);
            Tensor y = data::stack_masks(batch);

            ParamBank bank(net.params);
            TotalLoss tl = total_loss(y, x, net, bank, use_prior ? frozen_encoder : nullptr, lambda_eff,
                                      w, /*training=*/true);
            const double lv = tl.total.val().item();
            ++step;
            if (!std::isfinite(lv))
                throw DivergenceError("segmentation loss is not finite at step " + std::to_string(step) +
                                      " (epoch " + std::to_string(epoch) + ")");
            net.params.zero_grad();
            ag::backward(tl.total);
            bank.flush_grads();
            opt.step(net.params);

            log_line(log, "step=" + std::to_string(step) + " seg=" + fmt(tl.breakdown.components.at("seg")) +
                              " shape=" + fmt(tl.breakdown.components.at("shape")) + " total=" + fmt(lv));
            epoch_loss += lv * static_cast<double>(batch.size());
            epoch_count += static_cast<index_t>(batch.size());
        }
        result.train_curve.push_back(epoch_loss / static_cast<double>(epoch_count));

        double val_dsc = 0.0;
        if (!split.val.empty()) {
            for (const data::ImageSample* s : split.val) {
                const Tensor prob = predict_probability(net, *s);
                val_dsc += metrics::dice(s->mask, metrics::binarize(prob, 0.5, s->mask.spacing));
            }
            val_dsc /= static_cast<double>(split.val.size());
        } else {
            val_dsc = -result.train_curve.back();  // fall back to training loss ordering
        }
        result.val_curve.push_back(val_dsc);
        if (val_dsc > best_dsc) {
            best_dsc = val_dsc;
            best_params = net.params;
            best_epoch = epoch;
        }
        log_line(log, "epoch=" + std::to_string(epoch) + " train_loss=" + fmt(result.train_curve.back()) +
                          " val_dsc=" + fmt(val_dsc));
    }

    result.checkpoint = Checkpoint::snapshot("unet", mcfg, best_params, best_epoch, best_dsc, fingerprint);
    return result;
}

CrossValResult cross_validate(const std::vector<data::ImageSample>& samples, int k,
                              const ModelConfig& seg_cfg, const ModelConfig& ae_cfg,
                              const TrainConfig& ae_tcfg, const TrainConfig& seg_tcfg,
                              std::ostream* log) {
    const std::vector<data::FoldSplit> folds = data::make_folds(samples, k, seg_tcfg.seed);
    std::map<std::string, const data::ImageSample*> by_id;
    for (const data::ImageSample& s : samples) by_id[s.case_id] = &s;

    CrossValResult out;
    out.requested_folds = k;

    auto join = [](const std::vector<std::string>& ids) {
        std::string s;
        for (const std::string& id : ids) {
            if (!s.empty()) s += ' ';
            s += id;
        }
        return s;
    };

    for (const data::FoldSplit& fold : folds) {
        DatasetSplit seg_split;
        for (const std::string& id : fold.train_ids) seg_split.train.push_back(by_id.at(id));
        for (const std::string& id : fold.val_ids) seg_split.val.push_back(by_id.at(id));

        try {
            std::unique_ptr<AutoEncoder> encoder;
            std::vector<std::string> ae_train_ids = fold.train_ids;
            std::vector<std::string> ae_val_ids;
            if (seg_tcfg.prior != "none") {
                // AE model selection split comes from the fold's TRAINING cases only
                Rng srng(mix_seed(ae_tcfg.seed, 0xAE5Bu + static_cast<std::uint64_t>(fold.fold_index)));
                srng.shuffle(ae_train_ids);
                size_t n_val = ae_train_ids.size() >= 5 ? ae_train_ids.size() / 5
                               : ae_train_ids.size() >= 2 ? 1
                                                          : 0;
                ae_val_ids.assign(ae_train_ids.end() - static_cast<std::ptrdiff_t>(n_val), ae_train_ids.end());
                ae_train_ids.resize(ae_train_ids.size() - n_val);

                DatasetSplit ae_split;
                for (const std::string& id : ae_train_ids) ae_split.train.push_back(by_id.at(id));
                for (const std::string& id : ae_val_ids) ae_split.val.push_back(by_id.at(id));

                TrainConfig ae_fold_cfg = ae_tcfg;
                ae_fold_cfg.seed = mix_seed(ae_tcfg.seed, 0xA100u + static_cast<std::uint64_t>(fold.fold_index));
                TrainResult ae = train_autoencoder(seg_tcfg.prior, ae_split, ae_cfg, ae_fold_cfg, log);
                encoder = restore_autoencoder(ae.checkpoint);
            }
            out.audit_log.push_back("fold=" + std::to_string(fold.fold_index) +
                                    " ae_train=[" + join(ae_train_ids) + "] ae_val=[" + join(ae_val_ids) +
                                    "] fold_val=[" + join(fold.val_ids) + "]");

            TrainConfig seg_fold_cfg = seg_tcfg;
            seg_fold_cfg.seed = mix_seed(seg_tcfg.seed, 0x5100u + static_cast<std::uint64_t>(fold.fold_index));
            TrainResult seg = train_segmenter(seg_split, seg_cfg, seg_fold_cfg, encoder.get(), log);

            UNet best = restore_unet(seg.checkpoint);
            for (const data::ImageSample* s : seg_split.val) {
                const Tensor prob = predict_probability(best, *s);
                out.report.per_case.push_back(metrics::evaluate_case(s->mask, prob, 0.5, s->case_id));
            }
            ++out.completed_folds;
        } catch (const std::exception& e) {
            out.audit_log.push_back("fold=" + std::to_string(fold.fold_index) +
                                    " FAILED: " + std::string(e.what()));
        }
    }

    std::sort(out.report.per_case.begin(), out.report.per_case.end(),
              [](const metrics::CaseMetrics& a, const metrics::CaseMetrics& b) { return a.case_id < b.case_id; });
    out.report.aggregate();
    if (!out.complete()) out.report.complete = false;
    return out;
}

}  // namespace vesseg::train
