#include "cardiofuse/models.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/evalx.hpp"
#include "cardiofuse/nn/loss.hpp"

#include <cmath>
#include <cstdio>

namespace cardiofuse::models {
namespace {

struct Workspace {
    std::vector<std::vector<nn::Tensor>> pcg, ecg, head;
    std::vector<nn::Tensor*> params;
    std::vector<const nn::Tensor*> grads;
};

void zero(std::vector<std::vector<nn::Tensor>>& g) {
    for (auto& layer : g) {
        for (auto& t : layer) t.fill(0.0f);
    }
}

Workspace make_workspace(ModelGraph& m) {
    Workspace w;
    w.pcg = nn::zero_grads(m.pcg_path);
    w.ecg = nn::zero_grads(m.ecg_path);
    w.head = nn::zero_grads(m.head);
    // Same order as ModelGraph::named_params.
    auto add = [&](nn::Stack& s, std::vector<std::vector<nn::Tensor>>& g) {
        for (std::size_t i = 0; i < s.params.size(); ++i) {
            for (std::size_t p = 0; p < s.params[i].size(); ++p) {
                w.params.push_back(&s.params[i][p]);
                w.grads.push_back(&g[i][p]);
            }
        }
    };
    add(m.pcg_path, w.pcg);
    add(m.ecg_path, w.ecg);
    add(m.head, w.head);
    return w;
}

std::pair<nn::Tensor, nn::Tensor> split_features(const nn::Tensor& g, std::size_t wa) {
    const std::size_t n = g.dim(0), w = g.dim(1), wb = w - wa;
    nn::Tensor a({n, wa}), b({n, wb});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(g.data() + i * w, g.data() + i * w + wa, a.data() + i * wa);
        std::copy(g.data() + i * w + wa, g.data() + (i + 1) * w, b.data() + i * wb);
    }
    return {std::move(a), std::move(b)};
}

/// One forward/backward pass; gradients land in ws. Returns the batch loss.
double step(ModelGraph& m, Workspace& ws, const dataset::Batch& batch, Rng& rng) {
    const bool use_pcg = m.has(Modality::Pcg), use_ecg = m.has(Modality::Ecg);
    nn::StackTrace tp, te, th;
    nn::Tensor fp, fe;
    if (use_pcg) {
        if (batch.pcg.empty()) throw ModelError("training batch lacks PCG scalograms");
        fp = nn::stack_forward(m.pcg_path, batch.pcg, nn::Mode::Train, rng, &tp);
    }
    if (use_ecg) {
        if (batch.ecg.empty()) throw ModelError("training batch lacks ECG scalograms");
        fe = nn::stack_forward(m.ecg_path, batch.ecg, nn::Mode::Train, rng, &te);
    }
    const std::size_t wa = use_pcg && use_ecg ? fp.dim(1) : 0;
    nn::Tensor feats;
    if (use_pcg && use_ecg) {
        const std::size_t n = fp.dim(0), wb = fe.dim(1);
        feats = nn::Tensor({n, wa + wb});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(fp.data() + i * wa, fp.data() + (i + 1) * wa, feats.data() + i * (wa + wb));
            std::copy(fe.data() + i * wb, fe.data() + (i + 1) * wb, feats.data() + i * (wa + wb) + wa);
        }
    } else {
        feats = use_pcg ? std::move(fp) : std::move(fe);
    }
    const auto probs = nn::stack_forward(m.head, std::move(feats), nn::Mode::Train, rng, &th);
    const auto loss = nn::cross_entropy(probs, batch.labels);
    if (!std::isfinite(loss.loss)) return loss.loss;

    zero(ws.pcg);
    zero(ws.ecg);
    zero(ws.head);
    // The fused softmax + cross-entropy gradient enters below the Softmax layer.
    auto g = nn::stack_backward(m.head, th, loss.grad_logits, ws.head, m.head.layers.size() - 1, true);
    if (use_pcg && use_ecg) {
        auto [ga, gb] = split_features(g, wa);
        nn::stack_backward(m.pcg_path, tp, std::move(ga), ws.pcg, SIZE_MAX, false);
        nn::stack_backward(m.ecg_path, te, std::move(gb), ws.ecg, SIZE_MAX, false);
    } else if (use_pcg) {
        nn::stack_backward(m.pcg_path, tp, std::move(g), ws.pcg, SIZE_MAX, false);
    } else {
        nn::stack_backward(m.ecg_path, te, std::move(g), ws.ecg, SIZE_MAX, false);
    }
    return loss.loss;
}

double val_gmean(const ModelGraph& m, const std::vector<dataset::LoadedSample>& val) {
    const auto scores = predict(m, val);
    std::vector<evalx::ScoredSample> scored;
    scored.reserve(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
        scored.push_back({val[i].sample_id, val[i].record_id, val[i].label, scores[i]});
    }
    const auto c = evalx::confusion(scored, 0.5);
    return evalx::gmean(c.sensitivity(), c.specificity());
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace

TrainResult train(ModelGraph model, const std::vector<dataset::LoadedSample>& train_set,
                  const std::vector<dataset::LoadedSample>& val_set, const TrainConfig& cfg,
                  const TrainLogger& log) {
    TrainResult r;
    if (cfg.epochs == 0) {
        r.model = std::move(model);
        return r;
    }
    if (train_set.empty()) throw DataError("train: the training split is empty");
    if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
    if (!(cfg.lr > 0.0f)) throw ConfigError("train: learning rate must be positive");

    Workspace ws = make_workspace(model);
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    nn::OptimizerState opt = nn::make_adam(ws.params, adam_cfg);
    r.model = model;
    r.best_val_gmean = -1.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = dataset::batch_order(train_set.size(), cfg.batch_size, cfg.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); ++b) {
            const auto batch = dataset::make_batch(train_set, order[b]);
            Rng rng = Rng(cfg.seed, "dropout").split(epoch).split(b);
            const double loss = step(model, ws, batch, rng);
            if (!std::isfinite(loss)) {
                throw ModelError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(b + 1) + " of " + std::to_string(order.size()) +
                                 " (lr " + fmt("%g", cfg.lr) + ", batch size " + std::to_string(order[b].size()) +
                                 ")");
            }
            nn::adam_step(ws.params, ws.grads, opt);
            loss_sum += loss * static_cast<double>(order[b].size());
        }
        for (const auto* p : ws.params) {
            if (!p->all_finite()) {
                throw ModelError("non-finite parameters after epoch " + std::to_string(epoch));
            }
        }
        EpochRecord e;
        e.epoch = epoch;
        e.train_loss = loss_sum / static_cast<double>(train_set.size());
        e.val_gmean = val_set.empty() ? 0.0 : val_gmean(model, val_set);
        e.improved = val_set.empty() || e.val_gmean > r.best_val_gmean;
        if (e.improved) {
            r.model = model;
            r.best_epoch = epoch;
            r.best_val_gmean = e.val_gmean;
            since_best = 0;
        } else {
            ++since_best;
        }
        r.history.push_back(e);
        if (log) {
            log("epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.epochs) + " loss " +
                fmt("%.5f", e.train_loss) + " val_gmean " + fmt("%.4f", e.val_gmean) + (e.improved ? " *" : ""));
        }
        if (cfg.patience > 0 && since_best >= cfg.patience) {
            r.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    return r;
}

nlohmann::json history_json(const TrainResult& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.history) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_gmean", e.val_gmean},
                          {"improved", e.improved}});
    }
    return {{"best_epoch", r.best_epoch},
            {"best_val_gmean", r.history.empty() ? 0.0 : r.best_val_gmean},
            {"stopped_early", r.stopped_early},
            {"epochs", epochs}};
}

} // namespace cardiofuse::models
