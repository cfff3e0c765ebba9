#pragma once

// Bundled synthetic corpus: mixed-frequency sinusoids with light noise,
// emitted fully observed. Missingness is synthesized later in the pipeline so
// the same corpus serves every missing-ratio setting.

#include <cmath>
#include <cstdint>

#include "gapcast/csv.hpp"
#include "gapcast/random.hpp"

namespace gapcast {

inline CsvTable synth_corpus(int64_t rows, int64_t d, uint64_t seed, double noise_sigma = 0.05) {
    Rng rng(mix_seed(seed, 0x517E));
    const double periods[] = {7.0, 11.0, 16.0, 24.0, 9.0, 13.0, 29.0, 21.0};
    const double two_pi = 2.0 * 3.14159265358979323846;

    std::vector<double> period(static_cast<size_t>(d));
    std::vector<double> phase(static_cast<size_t>(d));
    std::vector<double> amp(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
        size_t sj = static_cast<size_t>(j);
        period[sj] = periods[sj % 8] * (1.0 + static_cast<double>(j / 8) * 0.5);
        phase[sj] = rng.uniform(0.0, two_pi);
        amp[sj] = rng.uniform(0.7, 1.3);
    }
    double drift_phase = rng.uniform(0.0, two_pi);

    CsvTable table;
    for (int64_t j = 0; j < d; ++j) table.variable_names.push_back("v" + std::to_string(j));
    for (int64_t t = 0; t < rows; ++t) {
        std::vector<double> row(static_cast<size_t>(d));
        std::vector<uint8_t> obs(static_cast<size_t>(d), 1);
        double drift = 0.3 * std::sin(two_pi * static_cast<double>(t) / 50.0 + drift_phase);
        for (int64_t j = 0; j < d; ++j) {
            size_t sj = static_cast<size_t>(j);
            double v = amp[sj] * std::sin(two_pi * static_cast<double>(t) / period[sj] + phase[sj]);
            row[sj] = v + drift + rng.normal(0.0, noise_sigma);
        }
        table.values.push_back(std::move(row));
        table.observed.push_back(std::move(obs));
    }
    return table;
}

}  // namespace gapcast
