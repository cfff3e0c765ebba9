#pragma once

// Checkpoint composition: model tensors, optional critic tensors, the
// normalization record, and the scalar metadata needed to rebuild the exact
// data preparation a run used.

#include <map>
#include <string>
#include <vector>

#include "gapcast/checkpoint.hpp"
#include "gapcast/config.hpp"
#include "gapcast/critic.hpp"
#include "gapcast/forecaster.hpp"

namespace gapcast {

struct CheckpointBundle {
    RunConfig cfg;
    NormRecord norm;
    ModelParams model;
    CriticParams critic;
    bool has_critic = false;
    int64_t best_epoch = 0;
};

inline void save_bundle(const std::string& path, CheckpointBundle& b) {
    std::vector<std::pair<std::string, Tensor>> entries;
    auto meta = [&](const std::string& key, double v) {
        entries.emplace_back("meta/" + key, Tensor::scalar(v));
    };
    meta("n", static_cast<double>(b.cfg.n));
    meta("k", static_cast<double>(b.cfg.k));
    meta("stride", static_cast<double>(b.cfg.stride));
    meta("missing_p", b.cfg.missing_p);
    meta("seed", static_cast<double>(b.cfg.train.seed));
    meta("d", static_cast<double>(b.model.d));
    meta("hidden", static_cast<double>(b.model.hidden));
    meta("memory_slots", static_cast<double>(b.model.memory.slots()));
    meta("memory_dim", static_cast<double>(b.model.memory.slot_dim()));
    meta("k_prime", static_cast<double>(b.cfg.train.k_prime));
    meta("lambda", b.cfg.train.lambda);
    meta("use_memory", b.cfg.train.use_memory ? 1.0 : 0.0);
    meta("best_epoch", static_cast<double>(b.best_epoch));

    entries.emplace_back("norm/mean",
                         Tensor({static_cast<int64_t>(b.norm.mean.size())}, b.norm.mean));
    entries.emplace_back("norm/std",
                         Tensor({static_cast<int64_t>(b.norm.stddev.size())}, b.norm.stddev));

    for (auto& [name, t] : b.model.named_tensors()) entries.emplace_back("model/" + name, *t);
    if (b.has_critic)
        for (auto& [name, t] : b.critic.named_tensors()) entries.emplace_back(name, *t);

    save_checkpoint(path, entries);
}

inline CheckpointBundle load_bundle(const std::string& path) {
    std::map<std::string, Tensor> map = load_checkpoint(path);
    auto meta = [&](const std::string& key) {
        auto it = map.find("meta/" + key);
        if (it == map.end())
            throw std::runtime_error(path + ": checkpoint is missing meta/" + key);
        return it->second.scalar_value();
    };

    CheckpointBundle b;
    b.cfg.n = static_cast<int64_t>(meta("n"));
    b.cfg.k = static_cast<int64_t>(meta("k"));
    b.cfg.stride = static_cast<int64_t>(meta("stride"));
    b.cfg.missing_p = meta("missing_p");
    b.cfg.train.seed = static_cast<uint64_t>(meta("seed"));
    b.cfg.train.k = b.cfg.k;
    b.cfg.train.k_prime = static_cast<int64_t>(meta("k_prime"));
    b.cfg.train.lambda = meta("lambda");
    b.cfg.train.use_memory = meta("use_memory") != 0.0;
    b.cfg.train.hidden = static_cast<int64_t>(meta("hidden"));
    b.cfg.train.memory_slots = static_cast<int64_t>(meta("memory_slots"));
    b.cfg.train.memory_dim = static_cast<int64_t>(meta("memory_dim"));
    b.best_epoch = static_cast<int64_t>(meta("best_epoch"));

    int64_t d = static_cast<int64_t>(meta("d"));
    const Tensor& mean = map.at("norm/mean");
    const Tensor& sd = map.at("norm/std");
    for (int64_t j = 0; j < mean.numel(); ++j) {
        b.norm.mean.push_back(mean.at(j));
        b.norm.stddev.push_back(sd.at(j));
    }

    b.model = ModelParams::init(d, b.cfg.train.hidden, b.cfg.train.memory_slots,
                                b.cfg.train.memory_dim, 0);
    for (auto& [name, t] : b.model.named_tensors()) {
        auto it = map.find("model/" + name);
        if (it == map.end()) throw std::runtime_error(path + ": checkpoint is missing model/" + name);
        if (it->second.shape() != t->shape())
            throw std::runtime_error(path + ": model/" + name + " has shape " +
                                     shape_str(it->second.shape()) + ", expected " +
                                     shape_str(t->shape()));
        Tensor loaded = it->second;
        loaded.set_requires_grad(true);
        *t = loaded;
    }

    b.has_critic = map.count("critic/fc2_b") > 0;
    if (b.has_critic) {
        b.critic = CriticParams::init(b.cfg.train.k_prime, d, 0);
        for (auto& [name, t] : b.critic.named_tensors()) {
            auto it = map.find(name);
            if (it == map.end()) throw std::runtime_error(path + ": checkpoint is missing " + name);
            Tensor loaded = it->second;
            loaded.set_requires_grad(true);
            *t = loaded;
        }
    }
    return b;
}

}  // namespace gapcast
