#include "calica/nn/suite.hpp"

#include "calica/calicanet.hpp"
#include "calica/nn/gradcheck.hpp"
#include "calica/nn/ops.hpp"

namespace calica::nn {

namespace {

using DTensor = TensorT<double>;

DTensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
    size_t count = 1;
    for (int d : shape) count *= static_cast<size_t>(d);
    std::vector<double> values(count);
    for (auto& v : values) v = rng.uniform(lo, hi);
    return DTensor::from_values(std::move(shape), std::move(values));
}

double worst(double a, double b) { return a > b ? a : b; }

}  // namespace

std::vector<SuiteResult> gradcheck_suite(int n_seeds, std::uint64_t seed0) {
    std::vector<SuiteResult> results{
        {"conv2d", 0}, {"prelu", 0},     {"adaptive_avg_pool", 0},
        {"fully_connected", 0}, {"smooth_l1", 0}, {"correlation_volume", 0},
        {"normalize_rows", 0},  {"quat_distance", 0}, {"conv_prelu_pool_fc_chain", 0},
        {"calicanet_total_loss", 0}};
    auto slot = [&](const std::string& name) -> double& {
        for (auto& r : results)
            if (r.op == name) return r.max_rel_err;
        throw UserError("unknown suite op " + name);
    };

    for (int s = 0; s < n_seeds; ++s) {
        Rng rng(derive_seed(seed0, static_cast<std::uint64_t>(s)));

        {
            DTensor x = random_tensor(rng, {2, 3, 8, 8}, -1.0, 1.0);
            DTensor w = random_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5);
            DTensor b = random_tensor(rng, {4}, -0.2, 0.2);
            DTensor coeffs = random_tensor(rng, {2, 4, 8, 8}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                return weighted_sum(conv2d(in[0], in[1], in[2], 1, 1), coeffs);
            };
            slot("conv2d") = worst(slot("conv2d"),
                                   grad_check(fn, {x, w, b}, {"x", "w", "b"}).max_rel_err);
        }
        {
            DTensor x = random_tensor(rng, {2, 5, 4, 4}, -1.0, 1.0);
            avoid_kink(x.values(), 0.0, 0.05);
            DTensor a = random_tensor(rng, {5}, 0.05, 0.5);
            DTensor coeffs = random_tensor(rng, {2, 5, 4, 4}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                return weighted_sum(prelu(in[0], in[1]), coeffs);
            };
            slot("prelu") = worst(slot("prelu"),
                                  grad_check(fn, {x, a}, {"x", "a"}).max_rel_err);
        }
        {
            DTensor x = random_tensor(rng, {2, 3, 5, 7}, -1.0, 1.0);
            DTensor coeffs = random_tensor(rng, {2, 3, 1, 1}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                return weighted_sum(adaptive_avg_pool(in[0]), coeffs);
            };
            slot("adaptive_avg_pool") =
                worst(slot("adaptive_avg_pool"), grad_check(fn, {x}, {"x"}).max_rel_err);
        }
        {
            DTensor x = random_tensor(rng, {4, 10}, -1.0, 1.0);
            DTensor w = random_tensor(rng, {6, 10}, -0.5, 0.5);
            DTensor b = random_tensor(rng, {6}, -0.2, 0.2);
            DTensor coeffs = random_tensor(rng, {4, 6}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                return weighted_sum(fully_connected(in[0], in[1], in[2]), coeffs);
            };
            slot("fully_connected") =
                worst(slot("fully_connected"),
                      grad_check(fn, {x, w, b}, {"x", "w", "b"}).max_rel_err);
        }
        {
            DTensor pred = random_tensor(rng, {3, 4}, -2.0, 2.0);
            DTensor target = random_tensor(rng, {3, 4}, -2.0, 2.0);
            // Keep |pred - target| away from the beta = 1 kink.
            for (size_t i = 0; i < pred.values().size(); ++i) {
                double d = pred.values()[i] - target.values()[i];
                if (std::abs(std::abs(d) - 1.0) < 0.05)
                    pred.values()[i] = target.values()[i] + (d >= 0 ? 1.1 : -1.1);
            }
            avoid_kink(pred.values(), 0.0, 1e-9);
            auto fn = [&](const std::vector<DTensor>& in) {
                return smooth_l1(in[0], target, 1.0);
            };
            slot("smooth_l1") = worst(slot("smooth_l1"),
                                      grad_check(fn, {pred}, {"pred"}).max_rel_err);
        }
        {
            DTensor a = random_tensor(rng, {1, 4, 6, 6}, -1.0, 1.0);
            DTensor b = random_tensor(rng, {1, 4, 6, 6}, -1.0, 1.0);
            DTensor coeffs = random_tensor(rng, {1, 25, 6, 6}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                return weighted_sum(correlation_volume(in[0], in[1], 2), coeffs);
            };
            slot("correlation_volume") =
                worst(slot("correlation_volume"),
                      grad_check(fn, {a, b}, {"a", "b"}).max_rel_err);
        }
        {
            DTensor x = random_tensor(rng, {3, 4}, 0.4, 1.5);
            DTensor coeffs = random_tensor(rng, {3, 4}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                return weighted_sum(normalize_rows(in[0]), coeffs);
            };
            slot("normalize_rows") = worst(slot("normalize_rows"),
                                           grad_check(fn, {x}, {"x"}).max_rel_err);
        }
        {
            DTensor x = random_tensor(rng, {3, 4}, 0.3, 1.2);
            DTensor labels = random_tensor(rng, {3, 4}, -1.0, 1.0);
            for (int r = 0; r < 3; ++r) {
                double nrm = 0.0;
                for (int c = 0; c < 4; ++c) {
                    double v = labels.values()[r * 4 + c];
                    nrm += v * v;
                }
                nrm = std::sqrt(nrm);
                for (int c = 0; c < 4; ++c) labels.values()[r * 4 + c] /= nrm;
            }
            auto fn = [&](const std::vector<DTensor>& in) {
                return quat_distance_loss(normalize_rows(in[0]), labels);
            };
            slot("quat_distance") = worst(slot("quat_distance"),
                                          grad_check(fn, {x}, {"x"}).max_rel_err);
        }
        {
            DTensor x = random_tensor(rng, {1, 2, 8, 8}, -1.0, 1.0);
            DTensor w = random_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5);
            DTensor b = random_tensor(rng, {3}, -0.2, 0.2);
            DTensor a = random_tensor(rng, {3}, 0.05, 0.5);
            DTensor fw = random_tensor(rng, {2, 3}, -0.7, 0.7);
            DTensor fb = random_tensor(rng, {2}, -0.2, 0.2);
            DTensor coeffs = random_tensor(rng, {1, 2}, -1.0, 1.0);
            auto fn = [&](const std::vector<DTensor>& in) {
                auto y = conv2d(in[0], in[1], in[2], 2, 1);
                y = prelu(y, in[3]);
                auto pooled = flatten2(adaptive_avg_pool(y));
                return weighted_sum(fully_connected(pooled, in[4], in[5]), coeffs);
            };
            slot("conv_prelu_pool_fc_chain") =
                worst(slot("conv_prelu_pool_fc_chain"),
                      grad_check(fn, {x, w, b, a, fw, fb},
                                 {"x", "w", "b", "a", "fw", "fb"}).max_rel_err);
        }
        {
            net::CalicaConfig cfg;
            cfg.stem_channels = 4;
            cfg.trunk_channels = {6, 8};
            cfg.max_displacement = 2;
            cfg.head_widths = {10};
            net::CalicaNetT<double> model(cfg, derive_seed(seed0, 777 + s));

            DTensor rgb = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
            DTensor depth = random_tensor(rng, {1, 1, 32, 32}, 0.0, 1.0);
            net::BatchLabels<double> labels;
            labels.df = random_tensor(rng, {1, 1}, -80.0, 80.0);
            labels.dxi = random_tensor(rng, {1, 1}, -0.4, 0.4);
            Quat lq = from_euler_xyz_deg({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                                          rng.uniform(-2.0, 2.0)});
            labels.dq = DTensor::from_values({1, 4}, {lq.w, lq.x, lq.y, lq.z});
            labels.dt = random_tensor(rng, {1, 3}, -0.2, 0.2);

            std::vector<DTensor> inputs{rgb, depth};
            std::vector<std::string> names{"rgb", "depth"};
            for (auto& p : model.parameters()) {
                inputs.push_back(p.tensor);
                names.push_back(p.name);
            }
            auto fn = [&](const std::vector<DTensor>&) {
                auto out = model.forward(inputs[0], inputs[1]);
                return net::total_loss(out, labels, cfg).total;
            };
            slot("calicanet_total_loss") =
                worst(slot("calicanet_total_loss"),
                      grad_check(fn, inputs, names).max_rel_err);
        }
    }
    return results;
}

}  // namespace calica::nn
