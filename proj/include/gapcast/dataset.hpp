#pragma once

// Windowed multivariate samples with observation masks, plus the dataset
// operations: windowing from a CSV table, z-score normalization from
// training statistics, seeded missingness synthesis, 70/10/20 splitting, and
// sampling of fully observed snippets for the adversarial real set.
//
// Missing cells always hold the sentinel 0 in the value tensor; the mask is
// the source of truth (1 = observed).

#include <cstdint>
#include <string>
#include <vector>

#include "gapcast/csv.hpp"
#include "gapcast/random.hpp"
#include "gapcast/tensor.hpp"

namespace gapcast {

struct MtsSample {
    Tensor history;       // n x d
    Tensor history_mask;  // n x d, entries 0/1
    Tensor target;        // k x d
    Tensor target_mask;   // k x d

    int64_t n() const { return history.dim(0); }
    int64_t k() const { return target.dim(0); }
    int64_t d() const { return history.dim(1); }

    // Tensors share storage when copied; clone before mutating.
    MtsSample clone() const {
        return MtsSample{history.clone(), history_mask.clone(), target.clone(),
                         target_mask.clone()};
    }
};

struct NormRecord {
    std::vector<double> mean;
    std::vector<double> stddev;
    bool empty() const { return mean.empty(); }
};

struct Dataset {
    std::vector<MtsSample> samples;
    NormRecord norm;  // populated once normalization has been applied
    std::string provenance;

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
    int64_t d() const { return samples.empty() ? 0 : samples[0].d(); }
    int64_t n() const { return samples.empty() ? 0 : samples[0].n(); }
    int64_t k() const { return samples.empty() ? 0 : samples[0].k(); }
};

// Fully observed k' x d windows (the adversarial real set).
struct SnippetSet {
    std::vector<Tensor> snippets;
    bool shortfall = false;  // fewer distinct windows existed than requested
};

inline void validate_sample(const MtsSample& s) {
    auto check = [](const Tensor& x, const Tensor& m, const char* what) {
        if (x.shape() != m.shape()) op_error("sample", std::string(what) + " mask shape mismatch");
        for (int64_t i = 0; i < x.numel(); ++i) {
            double mv = m.at(i);
            if (mv != 0.0 && mv != 1.0) op_error("sample", std::string(what) + " mask not 0/1");
            if (mv == 0.0 && x.at(i) != 0.0)
                op_error("sample", std::string(what) + " missing cell without sentinel value");
        }
    };
    if (s.n() < 1 || s.k() < 1 || s.d() < 1) op_error("sample", "degenerate dimensions");
    check(s.history, s.history_mask, "history");
    check(s.target, s.target_mask, "target");
}

// Slide windows of length n+k over the table at the given stride. No
// normalization is applied here.
inline Dataset load_windows(const CsvTable& table, int64_t n, int64_t k, int64_t stride,
                            const std::string& provenance) {
    if (n < 1 || k < 1 || stride < 1) op_error("load_csv", "n, k, stride must be positive");
    int64_t need = n + k;
    if (table.rows() < need)
        throw std::runtime_error("load_csv: " + provenance + " has " + std::to_string(table.rows()) +
                                 " rows, need at least " + std::to_string(need));
    int64_t d = table.cols();
    Dataset ds;
    ds.provenance = provenance;
    for (int64_t start = 0; start + need <= table.rows(); start += stride) {
        MtsSample s;
        s.history = Tensor::zeros({n, d});
        s.history_mask = Tensor::zeros({n, d});
        s.target = Tensor::zeros({k, d});
        s.target_mask = Tensor::zeros({k, d});
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < d; ++j) {
                size_t r = static_cast<size_t>(start + i), c = static_cast<size_t>(j);
                if (table.observed[r][c]) {
                    s.history.at(i, j) = table.values[r][c];
                    s.history_mask.at(i, j) = 1.0;
                }
            }
        }
        for (int64_t i = 0; i < k; ++i) {
            for (int64_t j = 0; j < d; ++j) {
                size_t r = static_cast<size_t>(start + n + i), c = static_cast<size_t>(j);
                if (table.observed[r][c]) {
                    s.target.at(i, j) = table.values[r][c];
                    s.target_mask.at(i, j) = 1.0;
                }
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

inline Dataset load_csv(const std::string& path, int64_t n, int64_t k, int64_t stride) {
    return load_windows(read_csv(path), n, k, stride, path);
}

// Per-variable mean/std over observed cells (history and target) of the given
// dataset; std floored at 1e-8 for constant variables.
inline NormRecord compute_norm_stats(const Dataset& ds) {
    int64_t d = ds.d();
    std::vector<double> sum(static_cast<size_t>(d), 0.0), sumsq(static_cast<size_t>(d), 0.0);
    std::vector<int64_t> count(static_cast<size_t>(d), 0);
    auto accumulate = [&](const Tensor& x, const Tensor& m) {
        for (int64_t i = 0; i < x.dim(0); ++i) {
            for (int64_t j = 0; j < d; ++j) {
                if (m.at(i, j) == 1.0) {
                    sum[static_cast<size_t>(j)] += x.at(i, j);
                    sumsq[static_cast<size_t>(j)] += x.at(i, j) * x.at(i, j);
                    ++count[static_cast<size_t>(j)];
                }
            }
        }
    };
    for (const MtsSample& s : ds.samples) {
        accumulate(s.history, s.history_mask);
        accumulate(s.target, s.target_mask);
    }
    NormRecord rec;
    for (int64_t j = 0; j < d; ++j) {
        size_t sj = static_cast<size_t>(j);
        if (count[sj] == 0)
            throw std::runtime_error("normalize: variable " + std::to_string(j) +
                                     " has no observed training cells");
        double mean = sum[sj] / static_cast<double>(count[sj]);
        double var = sumsq[sj] / static_cast<double>(count[sj]) - mean * mean;
        double sd = std::sqrt(std::max(0.0, var));
        rec.mean.push_back(mean);
        rec.stddev.push_back(std::max(sd, 1e-8));
    }
    return rec;
}

inline Dataset apply_normalization(const Dataset& ds, const NormRecord& rec) {
    auto apply = [&](Tensor& x, const Tensor& m) {
        for (int64_t i = 0; i < x.dim(0); ++i) {
            for (int64_t j = 0; j < x.dim(1); ++j) {
                if (m.at(i, j) == 1.0)
                    x.at(i, j) = (x.at(i, j) - rec.mean[static_cast<size_t>(j)]) /
                                 rec.stddev[static_cast<size_t>(j)];
                else
                    x.at(i, j) = 0.0;
            }
        }
    };
    Dataset out;
    out.provenance = ds.provenance;
    out.norm = rec;
    for (const MtsSample& s : ds.samples) {
        MtsSample c = s.clone();
        apply(c.history, c.history_mask);
        apply(c.target, c.target_mask);
        out.samples.push_back(std::move(c));
    }
    return out;
}

// z-score the dataset from its own observed cells; the returned record
// denormalizes, or normalizes held-out data identically.
inline std::pair<Dataset, NormRecord> normalize(const Dataset& ds) {
    NormRecord rec = compute_norm_stats(ds);
    return {apply_normalization(ds, rec), rec};
}

inline double denormalize_value(double v, int64_t variable, const NormRecord& rec) {
    return v * rec.stddev[static_cast<size_t>(variable)] + rec.mean[static_cast<size_t>(variable)];
}

// Independently drop each observed history cell with probability p (MCAR).
// Target blocks are untouched. Deterministic for a fixed seed.
inline Dataset synthesize_missing(const Dataset& ds, double p, uint64_t seed) {
    if (p < 0.0 || p >= 1.0) op_error("synthesize_missing", "p must lie in [0,1)");
    if (p == 0.0) return ds;
    Rng rng(mix_seed(seed, 0xD20F));
    Dataset out;
    out.provenance = ds.provenance;
    out.norm = ds.norm;
    for (const MtsSample& src : ds.samples) {
        MtsSample s = src.clone();
        for (int64_t i = 0; i < s.n(); ++i) {
            for (int64_t j = 0; j < s.d(); ++j) {
                if (s.history_mask.at(i, j) == 1.0 && rng.uniform01() < p) {
                    s.history_mask.at(i, j) = 0.0;
                    s.history.at(i, j) = 0.0;
                }
            }
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

struct SplitResult {
    Dataset train, validation, test;
};

// Seeded permutation split: floor(0.7N) / floor(0.1N) / remainder.
inline SplitResult split(const Dataset& ds, uint64_t seed) {
    int64_t n = ds.size();
    if (n < 10) throw std::runtime_error("split: need at least 10 samples, have " + std::to_string(n));
    Rng rng(mix_seed(seed, 0x5917));
    std::vector<size_t> perm = rng.permutation(static_cast<size_t>(n));
    int64_t n_train = static_cast<int64_t>(0.7 * static_cast<double>(n));
    int64_t n_val = static_cast<int64_t>(0.1 * static_cast<double>(n));
    SplitResult r;
    r.train.provenance = ds.provenance + " [train]";
    r.validation.provenance = ds.provenance + " [validation]";
    r.test.provenance = ds.provenance + " [test]";
    for (int64_t i = 0; i < n; ++i) {
        const MtsSample& s = ds.samples[perm[static_cast<size_t>(i)]];
        if (i < n_train)
            r.train.samples.push_back(s);
        else if (i < n_train + n_val)
            r.validation.samples.push_back(s);
        else
            r.test.samples.push_back(s);
    }
    return r;
}

// Uniformly sample `count` distinct windows of k' consecutive fully observed
// rows from the histories. Returns fewer, flagged, when fewer exist.
inline SnippetSet sample_real_snippets(const Dataset& ds, int64_t k_prime, int64_t count,
                                       uint64_t seed) {
    if (k_prime < 1) op_error("sample_real_snippets", "k_prime must be >= 1");
    std::vector<std::pair<size_t, int64_t>> candidates;
    for (size_t si = 0; si < ds.samples.size(); ++si) {
        const MtsSample& s = ds.samples[si];
        for (int64_t start = 0; start + k_prime <= s.n(); ++start) {
            bool complete = true;
            for (int64_t i = start; complete && i < start + k_prime; ++i)
                for (int64_t j = 0; j < s.d(); ++j)
                    if (s.history_mask.at(i, j) != 1.0) {
                        complete = false;
                        break;
                    }
            if (complete) candidates.emplace_back(si, start);
        }
    }
    Rng rng(mix_seed(seed, 0x51E7));
    rng.shuffle(candidates);
    SnippetSet set;
    set.shortfall = static_cast<int64_t>(candidates.size()) < count;
    int64_t take = std::min<int64_t>(count, static_cast<int64_t>(candidates.size()));
    for (int64_t c = 0; c < take; ++c) {
        const MtsSample& s = ds.samples[candidates[static_cast<size_t>(c)].first];
        int64_t start = candidates[static_cast<size_t>(c)].second;
        Tensor snip = Tensor::zeros({k_prime, s.d()});
        for (int64_t i = 0; i < k_prime; ++i)
            for (int64_t j = 0; j < s.d(); ++j) snip.at(i, j) = s.history.at(start + i, j);
        set.snippets.push_back(std::move(snip));
    }
    return set;
}

}  // namespace gapcast
