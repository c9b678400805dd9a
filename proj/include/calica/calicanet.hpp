#pragma once

#include <optional>
#include <string>
#include <vector>

#include "calica/kitti_io.hpp"
#include "calica/labelgen.hpp"
#include "calica/nn/checkpoint.hpp"
#include "calica/nn/ops.hpp"

namespace calica::net {

/// Architecture and loss configuration. The trunk is a plain stack of
/// stride-2 conv + PReLU blocks; depth/channels are configuration so the
/// same code scales from desk experiments to full-size training.
struct CalicaConfig {
    int stem_channels = 16;
    std::vector<int> trunk_channels{16, 32, 64, 64};
    int max_displacement = 4;          // correlation volume D
    std::vector<int> head_widths{256, 128};
    double lambda_f = 1.0;
    double lambda_xi = 1.0;
    double lambda_q = 1.0;
    double lambda_t = 0.5;
    bool share_trunk = true;
    bool freeze_rgb = false;
    bool freeze_depth = false;
    double f_scale = 100.0;            // head output scaling, pixels
    double xi_scale = 0.5;
    double t_scale = 0.2;              // meters
    double depth_max_range = 80.0;     // depth input normalization, meters

    /// Rotation must weigh at least as much as translation.
    void validate() const;

    std::string to_json() const;
    static CalicaConfig from_json(const std::string& text);

    std::vector<nn::CheckpointEntry> to_entries() const;
    static CalicaConfig from_entries(const std::vector<nn::CheckpointEntry>& entries);
};

/// Regressed calibration deviation. The quaternion is normalized by the
/// network head before it gets here.
struct Prediction {
    double df = 0.0;
    double dxi = 0.0;
    Quat dq;
    Vec3 dt;
};

/// theta0 + prediction -> full calibration; f floored at 1e-3 and xi
/// clamped to [0, 1.5], each with a warning.
Calibration apply_prediction(const Calibration& theta0, const Prediction& pred);

/// Algebraic inverse of apply_prediction for in-range values.
Prediction recover_deviation(const Calibration& theta_pred, const Calibration& theta0);

namespace detail {

template <class T>
struct ConvBlock {
    nn::TensorT<T> w, b, a;
};

template <class T>
struct DenseLayer {
    nn::TensorT<T> w, b, a;  // a undefined on the final (linear) layer
    bool activated = false;
};

}  // namespace detail

/// Siamese correlation-regression network: per-modality stems, a trunk that
/// is either shared (one parameter set applied to both branches) or
/// duplicated, a local correlation volume, global average pooling and two
/// regression heads (intrinsic: df, dxi; extrinsic: quaternion + translation).
template <class T>
class CalicaNetT {
public:
    using Tensor = nn::TensorT<T>;

    struct Outputs {
        Tensor intr;   // N x 2: df (pixels), dxi
        Tensor quat;   // N x 4, unit rows
        Tensor trans;  // N x 3, meters
    };

    CalicaNetT(const CalicaConfig& config, std::uint64_t init_seed)
        : cfg_(config) {
        cfg_.validate();
        Rng rng(derive_seed(init_seed, 0xCA11CAULL));
        stem_rgb_ = make_block(rng, "stem_rgb", 3, cfg_.stem_channels, !cfg_.freeze_rgb);
        stem_depth_ = make_block(rng, "stem_depth", 1, cfg_.stem_channels, !cfg_.freeze_depth);
        if (cfg_.share_trunk) {
            trunk_rgb_ = make_trunk(rng, "trunk", !(cfg_.freeze_rgb && cfg_.freeze_depth));
            trunk_depth_ = trunk_rgb_;
        } else {
            trunk_rgb_ = make_trunk(rng, "trunk_rgb", !cfg_.freeze_rgb);
            trunk_depth_ = make_trunk(rng, "trunk_depth", !cfg_.freeze_depth);
        }
        int side = 2 * cfg_.max_displacement + 1;
        head_intr_ = make_head(rng, "head_intr", side * side, 2);
        head_ext_ = make_head(rng, "head_ext", side * side, 7);
        // Start the quaternion at identity so row normalization is stable.
        head_ext_.back().b.values()[0] = T(1);
    }

    const CalicaConfig& config() const { return cfg_; }
    std::vector<nn::NamedParam<T>>& parameters() { return params_; }
    long forward_count() const { return forward_count_; }

    /// True when both branches run through the same trunk parameter storage.
    bool trunk_storage_shared() const {
        return !trunk_rgb_.empty() &&
               trunk_rgb_[0].w.node() == trunk_depth_[0].w.node();
    }

    Outputs forward(const Tensor& rgb, const Tensor& depth) {
        if (rgb.shape().size() != 4 || depth.shape().size() != 4)
            throw UserError("forward: inputs must be NCHW");
        if (rgb.dim(1) != 3 || depth.dim(1) != 1)
            throw UserError("forward: rgb must have 3 channels and depth 1");
        if (rgb.dim(0) != depth.dim(0) || rgb.dim(2) != depth.dim(2) ||
            rgb.dim(3) != depth.dim(3))
            throw UserError("forward: rgb/depth shapes disagree");
        if (rgb.dim(2) < 32 || rgb.dim(3) < 32)
            throw UserError("forward: inputs must be at least 32x32");
        ++forward_count_;

        Tensor fa = run_block(stem_rgb_, rgb, "stem_rgb", 1);
        Tensor fb = run_block(stem_depth_, depth, "stem_depth", 1);
        for (size_t i = 0; i < trunk_rgb_.size(); ++i) {
            fa = run_block(trunk_rgb_[i], fa, "trunk_rgb/" + std::to_string(i), 2);
            fb = run_block(trunk_depth_[i], fb, "trunk_depth/" + std::to_string(i), 2);
        }
        Tensor corr = nn::correlation_volume(fa, fb, cfg_.max_displacement);
        check_finite(corr, "correlation");
        Tensor pooled = nn::flatten2(nn::adaptive_avg_pool(corr));

        Tensor intr_raw = run_head(head_intr_, pooled, "head_intr");
        Tensor ext_raw = run_head(head_ext_, pooled, "head_ext");

        Outputs out;
        out.intr = nn::col_scale(intr_raw, {static_cast<T>(cfg_.f_scale),
                                            static_cast<T>(cfg_.xi_scale)});
        out.quat = nn::normalize_rows(nn::slice_cols(ext_raw, 0, 4));
        out.trans = nn::scale(nn::slice_cols(ext_raw, 4, 3), static_cast<T>(cfg_.t_scale));
        return out;
    }

    /// Single-pair inference.
    Prediction predict(const Tensor& rgb, const Tensor& depth) {
        nn::GradGuard no_grad;
        Outputs out = forward(rgb, depth);
        Prediction p;
        p.df = static_cast<double>(out.intr.values()[0]);
        p.dxi = static_cast<double>(out.intr.values()[1]);
        p.dq = Quat::from_raw(out.quat.values()[0], out.quat.values()[1],
                              out.quat.values()[2], out.quat.values()[3]);
        p.dt = {static_cast<double>(out.trans.values()[0]),
                static_cast<double>(out.trans.values()[1]),
                static_cast<double>(out.trans.values()[2])};
        return p;
    }

    std::vector<nn::CheckpointEntry> state() const {
        std::vector<nn::CheckpointEntry> entries = cfg_.to_entries();
        for (const auto& p : params_) {
            nn::CheckpointEntry e;
            e.name = p.name;
            e.shape = p.tensor.shape();
            e.data.reserve(p.tensor.numel());
            for (T v : p.tensor.values()) e.data.push_back(static_cast<float>(v));
            entries.push_back(std::move(e));
        }
        return entries;
    }

    void load_state(const std::vector<nn::CheckpointEntry>& entries) {
        for (auto& p : params_) {
            const nn::CheckpointEntry* found = nullptr;
            for (const auto& e : entries)
                if (e.name == p.name) found = &e;
            if (!found) throw UserError("checkpoint is missing parameter '" + p.name + "'");
            if (found->shape != p.tensor.shape())
                throw UserError("checkpoint parameter '" + p.name + "' has mismatched shape");
            auto& values = p.tensor.values();
            for (size_t i = 0; i < values.size(); ++i)
                values[i] = static_cast<T>(found->data[i]);
        }
    }

private:
    using Block = detail::ConvBlock<T>;
    using Dense = detail::DenseLayer<T>;

    Tensor he_uniform(Rng& rng, std::vector<int> shape, int fan_in, double gain = 1.0) {
        double limit = gain * std::sqrt(6.0 / fan_in);
        size_t count = 1;
        for (int d : shape) count *= static_cast<size_t>(d);
        std::vector<T> values(count);
        for (auto& v : values) v = static_cast<T>(rng.uniform(-limit, limit));
        return Tensor::parameter(std::move(shape), std::move(values));
    }

    Block make_block(Rng& rng, const std::string& name, int in_c, int out_c,
                     bool trainable) {
        Block blk;
        blk.w = he_uniform(rng, {out_c, in_c, 3, 3}, in_c * 9);
        blk.b = Tensor::parameter({out_c}, std::vector<T>(out_c, T(0)));
        blk.a = Tensor::parameter({out_c}, std::vector<T>(out_c, T(0.25)));
        register_param(name + "/conv/w", blk.w, trainable);
        register_param(name + "/conv/b", blk.b, trainable);
        register_param(name + "/prelu/a", blk.a, trainable);
        return blk;
    }

    std::vector<Block> make_trunk(Rng& rng, const std::string& name, bool trainable) {
        std::vector<Block> trunk;
        int in_c = cfg_.stem_channels;
        for (size_t i = 0; i < cfg_.trunk_channels.size(); ++i) {
            trunk.push_back(make_block(rng, name + "/" + std::to_string(i), in_c,
                                       cfg_.trunk_channels[i], trainable));
            in_c = cfg_.trunk_channels[i];
        }
        return trunk;
    }

    std::vector<Dense> make_head(Rng& rng, const std::string& name, int in_d, int out_d) {
        std::vector<Dense> head;
        int d = in_d;
        for (size_t i = 0; i < cfg_.head_widths.size(); ++i) {
            int width = cfg_.head_widths[i];
            Dense layer;
            layer.w = he_uniform(rng, {width, d}, d);
            layer.b = Tensor::parameter({width}, std::vector<T>(width, T(0)));
            layer.a = Tensor::parameter({width}, std::vector<T>(width, T(0.25)));
            layer.activated = true;
            std::string base = name + "/" + std::to_string(i);
            register_param(base + "/w", layer.w, true);
            register_param(base + "/b", layer.b, true);
            register_param(base + "/prelu/a", layer.a, true);
            head.push_back(layer);
            d = width;
        }
        Dense final_layer;
        final_layer.w = he_uniform(rng, {out_d, d}, d, 0.1);
        final_layer.b = Tensor::parameter({out_d}, std::vector<T>(out_d, T(0)));
        final_layer.activated = false;
        std::string base = name + "/" + std::to_string(cfg_.head_widths.size());
        register_param(base + "/w", final_layer.w, true);
        register_param(base + "/b", final_layer.b, true);
        head.push_back(final_layer);
        return head;
    }

    void register_param(const std::string& name, Tensor& t, bool trainable) {
        if (!trainable) t.set_requires_grad(false);
        params_.push_back({name, t});
    }

    Tensor run_block(const Block& blk, const Tensor& x, const std::string& label,
                     int stride) {
        Tensor y = nn::prelu(nn::conv2d(x, blk.w, blk.b, stride, 1), blk.a);
        check_finite(y, label);
        return y;
    }

    Tensor run_head(const std::vector<Dense>& head, const Tensor& x,
                    const std::string& label) {
        Tensor y = x;
        for (size_t i = 0; i < head.size(); ++i) {
            y = nn::fully_connected(y, head[i].w, head[i].b);
            if (head[i].activated) y = nn::prelu(y, head[i].a);
            check_finite(y, label + "/" + std::to_string(i));
        }
        return y;
    }

    static void check_finite(const Tensor& t, const std::string& label) {
        for (T v : t.values())
            if (!std::isfinite(static_cast<double>(v)))
                throw UserError("non-finite activation after layer '" + label + "'");
    }

    CalicaConfig cfg_;
    Block stem_rgb_, stem_depth_;
    std::vector<Block> trunk_rgb_, trunk_depth_;
    std::vector<Dense> head_intr_, head_ext_;
    std::vector<nn::NamedParam<T>> params_;
    long forward_count_ = 0;
};

using CalicaNet = CalicaNetT<float>;

/// Batch regression targets (constants in the graph).
template <class T>
struct BatchLabels {
    nn::TensorT<T> df;   // N x 1
    nn::TensorT<T> dxi;  // N x 1
    nn::TensorT<T> dq;   // N x 4, unit rows
    nn::TensorT<T> dt;   // N x 3
};

struct LossTerms {
    std::optional<double> f, xi, q, t;  // unweighted per-term means
};

template <class T>
struct LossResult {
    nn::TensorT<T> total;
    LossTerms terms;
};

/// Weighted training loss: smooth-L1 on df, dxi, dt plus the quaternion
/// distance on dq. Terms can be switched off for the ablation experiments.
template <class T>
LossResult<T> total_loss(const typename CalicaNetT<T>::Outputs& out,
                         const BatchLabels<T>& labels, const CalicaConfig& cfg,
                         bool use_intrinsic = true, bool use_extrinsic = true) {
    cfg.validate();
    if (!use_intrinsic && !use_extrinsic)
        throw UserError("total_loss: at least one loss group must be active");
    LossResult<T> result;
    nn::TensorT<T> total;
    auto accumulate = [&](const nn::TensorT<T>& term, double weight) {
        nn::TensorT<T> weighted = nn::scale(term, static_cast<T>(weight));
        total = total.defined() ? nn::add(total, weighted) : weighted;
    };
    if (use_intrinsic) {
        nn::TensorT<T> lf = nn::smooth_l1(nn::slice_cols(out.intr, 0, 1), labels.df);
        nn::TensorT<T> lxi = nn::smooth_l1(nn::slice_cols(out.intr, 1, 1), labels.dxi);
        result.terms.f = static_cast<double>(lf.item());
        result.terms.xi = static_cast<double>(lxi.item());
        accumulate(lf, cfg.lambda_f);
        accumulate(lxi, cfg.lambda_xi);
    }
    if (use_extrinsic) {
        nn::TensorT<T> lq = nn::quat_distance_loss(out.quat, labels.dq);
        nn::TensorT<T> lt = nn::smooth_l1(out.trans, labels.dt);
        result.terms.q = static_cast<double>(lq.item());
        result.terms.t = static_cast<double>(lt.item());
        accumulate(lq, cfg.lambda_q);
        accumulate(lt, cfg.lambda_t);
    }
    result.total = total;
    return result;
}

}  // namespace calica::net
