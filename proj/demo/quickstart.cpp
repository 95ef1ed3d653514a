// Generate a small nonnegative matrix, hide 10% of it, and compare a few
// models on the held-out cells.

#include <iostream>

#include "bmf/bmf.hpp"

int main() {
    bmf::SyntheticSpec s;
    s.rows = 40;
    s.cols = 30;
    s.k = 3;
    s.family = bmf::Family::Nonnegative;
    s.tau = 1.0;
    s.seed = 42;
    const auto data = bmf::generate_synthetic(s).matrix;

    const auto split = bmf::make_holdout(data, 0.1, 7);
    const auto train = data.restricted_to(split.train_cells(0));
    const auto test = split.test_cells(0);

    bmf::SamplerConfig cfg;
    cfg.n_iterations = 400;
    cfg.burn_in = 200;
    cfg.seed = 1;

    for (auto kind : {bmf::ModelKind::GGG, bmf::ModelKind::GEE, bmf::ModelKind::GEG, bmf::ModelKind::NMF}) {
        const bmf::ModelSpec spec(kind, 3);
        const auto res = bmf::fit(spec, train, cfg);
        std::vector<double> pred, truth;
        for (int id : test) {
            const auto& c = data.cells()[static_cast<std::size_t>(id)];
            pred.push_back(res.predictor.at(c.row, c.col));
            truth.push_back(c.value);
        }
        std::cout << spec.name() << "\theld-out MSE " << bmf::mse(pred, truth) << '\n';
    }
}
