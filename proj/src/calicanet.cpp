#include "calica/calicanet.hpp"

#include <algorithm>

#include <json.hpp>

namespace calica::net {

void CalicaConfig::validate() const {
    if (stem_channels < 1) throw UserError("config: stem_channels must be >= 1");
    if (trunk_channels.empty()) throw UserError("config: trunk needs at least one block");
    for (int c : trunk_channels)
        if (c < 1) throw UserError("config: trunk channels must be >= 1");
    if (max_displacement < 1) throw UserError("config: max_displacement must be >= 1");
    if (lambda_q < lambda_t)
        throw UserError("config: lambda_q must be >= lambda_t (rotation is penalized "
                        "at least as much as translation)");
    if (lambda_f < 0 || lambda_xi < 0 || lambda_q < 0 || lambda_t < 0)
        throw UserError("config: loss weights must be non-negative");
    if (f_scale <= 0 || xi_scale <= 0 || t_scale <= 0)
        throw UserError("config: output scales must be positive");
    if (depth_max_range <= 0) throw UserError("config: depth_max_range must be positive");
}

std::string CalicaConfig::to_json() const {
    nlohmann::json j;
    j["stem_channels"] = stem_channels;
    j["trunk_channels"] = trunk_channels;
    j["max_displacement"] = max_displacement;
    j["head_widths"] = head_widths;
    j["lambda_f"] = lambda_f;
    j["lambda_xi"] = lambda_xi;
    j["lambda_q"] = lambda_q;
    j["lambda_t"] = lambda_t;
    j["share_trunk"] = share_trunk;
    j["freeze_rgb"] = freeze_rgb;
    j["freeze_depth"] = freeze_depth;
    j["f_scale"] = f_scale;
    j["xi_scale"] = xi_scale;
    j["t_scale"] = t_scale;
    j["depth_max_range"] = depth_max_range;
    return j.dump(2);
}

CalicaConfig CalicaConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config JSON: ") + e.what());
    }
    CalicaConfig cfg;
    try {
        if (j.contains("stem_channels")) cfg.stem_channels = j["stem_channels"].get<int>();
        if (j.contains("trunk_channels"))
            cfg.trunk_channels = j["trunk_channels"].get<std::vector<int>>();
        if (j.contains("max_displacement"))
            cfg.max_displacement = j["max_displacement"].get<int>();
        if (j.contains("head_widths"))
            cfg.head_widths = j["head_widths"].get<std::vector<int>>();
        if (j.contains("lambda_f")) cfg.lambda_f = j["lambda_f"].get<double>();
        if (j.contains("lambda_xi")) cfg.lambda_xi = j["lambda_xi"].get<double>();
        if (j.contains("lambda_q")) cfg.lambda_q = j["lambda_q"].get<double>();
        if (j.contains("lambda_t")) cfg.lambda_t = j["lambda_t"].get<double>();
        if (j.contains("share_trunk")) cfg.share_trunk = j["share_trunk"].get<bool>();
        if (j.contains("freeze_rgb")) cfg.freeze_rgb = j["freeze_rgb"].get<bool>();
        if (j.contains("freeze_depth")) cfg.freeze_depth = j["freeze_depth"].get<bool>();
        if (j.contains("f_scale")) cfg.f_scale = j["f_scale"].get<double>();
        if (j.contains("xi_scale")) cfg.xi_scale = j["xi_scale"].get<double>();
        if (j.contains("t_scale")) cfg.t_scale = j["t_scale"].get<double>();
        if (j.contains("depth_max_range"))
            cfg.depth_max_range = j["depth_max_range"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config JSON schema: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

nn::CheckpointEntry numeric_entry(const std::string& name, std::vector<float> values) {
    nn::CheckpointEntry e;
    e.name = name;
    e.shape = {static_cast<int>(values.size())};
    e.data = std::move(values);
    return e;
}

const nn::CheckpointEntry* find_entry(const std::vector<nn::CheckpointEntry>& entries,
                                      const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

}  // namespace

std::vector<nn::CheckpointEntry> CalicaConfig::to_entries() const {
    std::vector<nn::CheckpointEntry> entries;
    entries.push_back(numeric_entry("config/stem_channels",
                                    {static_cast<float>(stem_channels)}));
    std::vector<float> trunk(trunk_channels.begin(), trunk_channels.end());
    entries.push_back(numeric_entry("config/trunk_channels", std::move(trunk)));
    entries.push_back(numeric_entry("config/max_displacement",
                                    {static_cast<float>(max_displacement)}));
    std::vector<float> heads(head_widths.begin(), head_widths.end());
    entries.push_back(numeric_entry("config/head_widths", std::move(heads)));
    entries.push_back(numeric_entry(
        "config/lambda", {static_cast<float>(lambda_f), static_cast<float>(lambda_xi),
                          static_cast<float>(lambda_q), static_cast<float>(lambda_t)}));
    entries.push_back(numeric_entry(
        "config/flags", {share_trunk ? 1.0f : 0.0f, freeze_rgb ? 1.0f : 0.0f,
                         freeze_depth ? 1.0f : 0.0f}));
    entries.push_back(numeric_entry(
        "config/scales", {static_cast<float>(f_scale), static_cast<float>(xi_scale),
                          static_cast<float>(t_scale)}));
    entries.push_back(numeric_entry("config/depth_max_range",
                                    {static_cast<float>(depth_max_range)}));
    return entries;
}

CalicaConfig CalicaConfig::from_entries(const std::vector<nn::CheckpointEntry>& entries) {
    CalicaConfig cfg;
    auto require = [&](const std::string& name) -> const nn::CheckpointEntry& {
        const nn::CheckpointEntry* e = find_entry(entries, name);
        if (!e) throw UserError("checkpoint is missing '" + name + "'");
        return *e;
    };
    cfg.stem_channels = static_cast<int>(require("config/stem_channels").data.at(0));
    cfg.trunk_channels.clear();
    for (float v : require("config/trunk_channels").data)
        cfg.trunk_channels.push_back(static_cast<int>(v));
    cfg.max_displacement = static_cast<int>(require("config/max_displacement").data.at(0));
    cfg.head_widths.clear();
    for (float v : require("config/head_widths").data)
        cfg.head_widths.push_back(static_cast<int>(v));
    const auto& lambda = require("config/lambda").data;
    if (lambda.size() != 4) throw UserError("checkpoint: config/lambda must have 4 values");
    cfg.lambda_f = lambda[0];
    cfg.lambda_xi = lambda[1];
    cfg.lambda_q = lambda[2];
    cfg.lambda_t = lambda[3];
    const auto& flags = require("config/flags").data;
    if (flags.size() != 3) throw UserError("checkpoint: config/flags must have 3 values");
    cfg.share_trunk = flags[0] != 0.0f;
    cfg.freeze_rgb = flags[1] != 0.0f;
    cfg.freeze_depth = flags[2] != 0.0f;
    const auto& scales = require("config/scales").data;
    if (scales.size() != 3) throw UserError("checkpoint: config/scales must have 3 values");
    cfg.f_scale = scales[0];
    cfg.xi_scale = scales[1];
    cfg.t_scale = scales[2];
    cfg.depth_max_range = require("config/depth_max_range").data.at(0);
    cfg.validate();
    return cfg;
}

Calibration apply_prediction(const Calibration& theta0, const Prediction& pred) {
    Calibration out = theta0;
    out.intr.f = theta0.intr.f + pred.df;
    if (out.intr.f < 1e-3) {
        warn("apply_prediction: focal length clamped to 1e-3 (was " +
             std::to_string(out.intr.f) + ")");
        out.intr.f = 1e-3;
    }
    out.intr.xi = theta0.intr.xi + pred.dxi;
    if (out.intr.xi < 0.0 || out.intr.xi > 1.5) {
        double clamped = std::clamp(out.intr.xi, 0.0, 1.5);
        warn("apply_prediction: xi clamped to " + std::to_string(clamped) + " (was " +
             std::to_string(out.intr.xi) + ")");
        out.intr.xi = clamped;
    }
    out.velo_to_cam = compose({pred.dq, pred.dt}, theta0.velo_to_cam);
    return out;
}

Prediction recover_deviation(const Calibration& theta_pred, const Calibration& theta0) {
    Prediction p;
    p.df = theta_pred.intr.f - theta0.intr.f;
    p.dxi = theta_pred.intr.xi - theta0.intr.xi;
    RigidTransform delta = compose(theta_pred.velo_to_cam, inverse(theta0.velo_to_cam));
    p.dq = delta.q;
    p.dt = delta.t;
    return p;
}

}  // namespace calica::net
