#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// here must stay independent of the implementation paths they check.

#include <cmath>
#include <initializer_list>
#include <vector>

#include "flis/nn.hpp"
#include "flis/rng.hpp"

namespace test_helpers {

inline flis::LabeledData make_data(std::initializer_list<std::initializer_list<double>> rows,
                                   std::initializer_list<int> labels) {
    flis::LabeledData data;
    const std::size_t m = rows.size();
    const std::size_t d = rows.begin()->size();
    data.features = flis::Matrix(m, d);
    std::size_t r = 0;
    for (const auto& row : rows) {
        std::size_t c = 0;
        for (double v : row) data.features(r, c++) = v;
        ++r;
    }
    data.labels.assign(labels);
    return data;
}

inline flis::LabeledData random_data(std::size_t m, std::size_t d, int classes,
                                     std::uint64_t seed) {
    flis::LabeledData data;
    data.features = flis::Matrix(m, d);
    flis::Rng rng(seed);
    for (auto& v : data.features.data()) v = rng.normal();
    data.labels.resize(m);
    for (auto& y : data.labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return data;
}

// Central-difference gradient of the loss, the oracle for every analytic
// gradient claim.
inline std::vector<double> fd_gradient(const flis::ModelParams& model,
                                       const flis::LabeledData& data, double h) {
    std::vector<double> grad(model.weights.size());
    flis::ModelParams probe = model;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        probe.weights[i] = model.weights[i] + h;
        const double up = flis::loss(probe, data);
        probe.weights[i] = model.weights[i] - h;
        const double down = flis::loss(probe, data);
        probe.weights[i] = model.weights[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

}  // namespace test_helpers
