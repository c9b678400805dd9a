#include "calica/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "calica/nn/adam.hpp"
#include "calica/overlay.hpp"

namespace fs = std::filesystem;

namespace calica::pipeline {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "-"; }

}  // namespace

// --- checkerboard oracle -----------------------------------------------------

std::vector<Vec3> CheckerboardScene::corner_points() const {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<size_t>(board.rows) * board.cols);
    double ox = 0.5 * (board.cols - 1) * board.square;
    double oy = 0.5 * (board.rows - 1) * board.square;
    for (int r = 0; r < board.rows; ++r)
        for (int c = 0; c < board.cols; ++c)
            pts.push_back({c * board.square - ox, r * board.square - oy, 0.0});
    return pts;
}

double reprojection_rmse(const CameraIntrinsics& intr, const CheckerboardScene& scene) {
    std::vector<Vec3> corners = scene.corner_points();
    double sum_sq = 0.0;
    size_t count = 0;
    for (size_t j = 0; j < scene.poses.size(); ++j) {
        if (scene.observed[j].size() != corners.size())
            throw UserError("scene: observed corner count mismatch in pose " +
                            std::to_string(j));
        double pose_sum = 0.0;
        bool behind = false;
        for (size_t i = 0; i < corners.size(); ++i) {
            auto px = project_point(intr, scene.poses[j], corners[i]);
            if (!px) {
                behind = true;
                break;
            }
            double du = px->u - scene.observed[j][i].u;
            double dv = px->v - scene.observed[j][i].v;
            pose_sum += du * du + dv * dv;
        }
        if (behind) {
            warn("reprojection_rmse: pose " + std::to_string(j) +
                 " projects behind the model, excluded");
            continue;
        }
        sum_sq += pose_sum;
        count += corners.size();
    }
    if (count == 0) throw UserError("reprojection_rmse: no usable poses");
    return std::sqrt(sum_sq / static_cast<double>(count));
}

ExtrinsicErrors extrinsic_errors(const RigidTransform& pred, const RigidTransform& theta0) {
    RigidTransform delta = compose(pred, inverse(theta0));
    Vec3 euler = to_euler_xyz_deg(delta.q);
    ExtrinsicErrors e;
    e.rotation_deg = (std::abs(euler.x) + std::abs(euler.y) + std::abs(euler.z)) / 3.0;
    e.translation_m = (std::abs(delta.t.x) + std::abs(delta.t.y) + std::abs(delta.t.z)) / 3.0;
    return e;
}

// --- synthetic scenes ---------------------------------------------------------

namespace {

struct WallRect {
    double x0, x1, y0, y1, z;
};

// Extent of the z = z_wall plane visible through the image border, with margin.
WallRect wall_extent(const CameraIntrinsics& intr, int width, int height, double z_wall) {
    WallRect rect{1e30, -1e30, 1e30, -1e30, z_wall};
    auto consider = [&](double u, double v) {
        Vec3 ray;
        try {
            ray = undistort_pixel(intr, {u, v});
        } catch (const UserError&) {
            return;
        }
        if (ray.z <= 1e-6) return;
        double t = z_wall / ray.z;
        rect.x0 = std::min(rect.x0, ray.x * t);
        rect.x1 = std::max(rect.x1, ray.x * t);
        rect.y0 = std::min(rect.y0, ray.y * t);
        rect.y1 = std::max(rect.y1, ray.y * t);
    };
    for (int i = 0; i <= 8; ++i) {
        double u = width * i / 8.0;
        double v = height * i / 8.0;
        consider(u, 0.0);
        consider(u, height - 1.0);
        consider(0.0, v);
        consider(width - 1.0, v);
    }
    if (rect.x0 > rect.x1 || rect.y0 > rect.y1)
        throw UserError("synthetic scene: camera sees no part of the wall plane");
    double mx = 0.1 * (rect.x1 - rect.x0);
    double my = 0.1 * (rect.y1 - rect.y0);
    rect.x0 -= mx;
    rect.x1 += mx;
    rect.y0 -= my;
    rect.y1 += my;
    return rect;
}

struct WallDot {
    double x, y, half;
    float r, g, b;
};

struct WallTexture {
    WallRect rect;
    std::vector<WallDot> dots;

    void shade(double wx, double wy, float* rgb) const {
        float base = static_cast<float>(0.25 + 0.5 * (wx - rect.x0) / (rect.x1 - rect.x0));
        rgb[0] = base;
        rgb[1] = base;
        rgb[2] = static_cast<float>(0.2 + 0.5 * (wy - rect.y0) / (rect.y1 - rect.y0));
        for (const WallDot& d : dots)
            if (std::abs(wx - d.x) <= d.half && std::abs(wy - d.y) <= d.half) {
                rgb[0] = d.r;
                rgb[1] = d.g;
                rgb[2] = d.b;
                return;
            }
    }
};

WallTexture make_wall_texture(const WallRect& rect, Rng& rng, int n_dots) {
    WallTexture tex;
    tex.rect = rect;
    tex.dots.reserve(n_dots);
    for (int i = 0; i < n_dots; ++i) {
        WallDot d;
        d.x = rng.uniform(rect.x0, rect.x1);
        d.y = rng.uniform(rect.y0, rect.y1);
        d.half = 0.03;
        d.r = static_cast<float>(rng.uniform());
        d.g = static_cast<float>(rng.uniform());
        d.b = static_cast<float>(rng.uniform());
        tex.dots.push_back(d);
    }
    return tex;
}

// Checkerboard shade at a board-plane point, or nullopt outside the physical
// board (corner grid plus a one-square border).
std::optional<float> board_shade(const BoardSpec& board, double bx, double by) {
    double ox = 0.5 * (board.cols - 1) * board.square;
    double oy = 0.5 * (board.rows - 1) * board.square;
    double u = (bx + ox) / board.square;
    double v = (by + oy) / board.square;
    if (u < -1.0 || u > board.cols || v < -1.0 || v > board.rows) return std::nullopt;
    long pu = static_cast<long>(std::floor(u));
    long pv = static_cast<long>(std::floor(v));
    return ((pu + pv) % 2 + 2) % 2 == 0 ? 0.85f : 0.1f;
}

RigidTransform sample_board_pose(const CameraIntrinsics& intr, const BoardSpec& board,
                                 int width, int height, Rng& rng) {
    std::vector<Vec3> corners;
    {
        CheckerboardScene tmp;
        tmp.board = board;
        corners = tmp.corner_points();
    }
    for (int attempt = 0; attempt < 100; ++attempt) {
        double z = rng.uniform(1.4, 2.0);
        double pu = width * rng.uniform(0.35, 0.65);
        double pv = height * rng.uniform(0.35, 0.65);
        Vec3 center_ray = undistort_pixel(intr, {pu, pv});
        Vec3 center = center_ray * (z / center_ray.z);
        Vec3 angles{rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0),
                    rng.uniform(-12.0, 12.0)};
        RigidTransform pose{from_euler_xyz_deg(angles), center};
        bool ok = true;
        for (const Vec3& c : corners) {
            auto px = project_point(intr, pose, c);
            if (!px || px->u < 2.0 || px->v < 2.0 || px->u > width - 3.0 ||
                px->v > height - 3.0) {
                ok = false;
                break;
            }
        }
        if (ok) return pose;
    }
    throw UserError("synthetic scene: could not place the board inside the frame "
                    "after 100 attempts (board too large for the field of view?)");
}

}  // namespace

SyntheticScene make_synthetic_scene(const CameraIntrinsics& intr,
                                    const RigidTransform& velo_to_cam,
                                    const BoardSpec& board, int n_poses, int width,
                                    int height, double noise_sigma, std::uint64_t seed) {
    if (n_poses <= 0) throw UserError("make_synthetic_scene: need at least one pose");
    if (width < 16 || height < 16) throw UserError("make_synthetic_scene: frame too small");

    constexpr double kWallZ = 3.0;
    Rng rng(derive_seed(seed, 0x5CE11E));
    WallRect rect = wall_extent(intr, width, height, kWallZ);
    WallTexture wall = make_wall_texture(rect, rng, 150);

    SyntheticScene out;
    out.scene.board = board;
    std::vector<Vec3> corners;
    {
        CheckerboardScene tmp;
        tmp.board = board;
        corners = tmp.corner_points();
    }
    RigidTransform cam_to_velo = inverse(velo_to_cam);

    for (int pose_i = 0; pose_i < n_poses; ++pose_i) {
        RigidTransform pose = sample_board_pose(intr, board, width, height, rng);
        RigidTransform cam_to_board = inverse(pose);
        out.scene.poses.push_back(pose);

        // Exact corner observations plus radial Gaussian noise.
        std::vector<Pixel> observed;
        observed.reserve(corners.size());
        for (const Vec3& c : corners) {
            auto px = project_point(intr, pose, c);
            if (!px) throw UserError("synthetic scene: corner projected behind the model");
            if (noise_sigma > 0.0) {
                double mag = noise_sigma * rng.normal();
                double phi = rng.uniform(0.0, 6.283185307179586);
                px->u += mag * std::cos(phi);
                px->v += mag * std::sin(phi);
            }
            observed.push_back(*px);
        }
        out.scene.observed.push_back(std::move(observed));

        // Inverse-render the view: board plane first, wall behind.
        Image img = Image::zeros(width, height, 3);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                Vec3 ray;
                try {
                    ray = undistort_pixel(intr, {static_cast<double>(x),
                                                 static_cast<double>(y)});
                } catch (const UserError&) {
                    continue;
                }
                Vec3 origin_b = apply(cam_to_board, {0, 0, 0});
                Vec3 dir_b = cam_to_board.q.rotate(ray);
                bool painted = false;
                if (std::abs(dir_b.z) > 1e-9) {
                    double t = -origin_b.z / dir_b.z;
                    if (t > 0.0) {
                        Vec3 hit = origin_b + dir_b * t;
                        auto shade = board_shade(board, hit.x, hit.y);
                        if (shade) {
                            img.at(y, x, 0) = *shade;
                            img.at(y, x, 1) = *shade;
                            img.at(y, x, 2) = *shade;
                            painted = true;
                        }
                    }
                }
                if (!painted && ray.z > 1e-6) {
                    double t = kWallZ / ray.z;
                    double wx = ray.x * t, wy = ray.y * t;
                    if (wx >= rect.x0 && wx <= rect.x1 && wy >= rect.y0 && wy <= rect.y1) {
                        float rgb[3];
                        wall.shade(wx, wy, rgb);
                        img.at(y, x, 0) = rgb[0];
                        img.at(y, x, 1) = rgb[1];
                        img.at(y, x, 2) = rgb[2];
                    }
                }
            }
        out.images.push_back(std::move(img));

        // Lidar cloud: wall grid plus a denser board grid, in the Lidar frame.
        PointCloud cloud;
        constexpr int kWallNx = 140, kWallNy = 44;
        for (int iy = 0; iy < kWallNy; ++iy)
            for (int ix = 0; ix < kWallNx; ++ix) {
                double wx = rect.x0 + (rect.x1 - rect.x0) * (ix + 0.5) / kWallNx;
                double wy = rect.y0 + (rect.y1 - rect.y0) * (iy + 0.5) / kWallNy;
                // Skip wall points hidden behind the board.
                Vec3 pc{wx, wy, kWallZ};
                Vec3 pb = apply(cam_to_board, pc);
                Vec3 ob = apply(cam_to_board, {0, 0, 0});
                bool occluded = false;
                Vec3 db = pb - ob;
                if (std::abs(db.z) > 1e-9) {
                    double t = -ob.z / db.z;
                    if (t > 0.0 && t < 1.0) {
                        Vec3 hit = ob + db * t;
                        occluded = board_shade(board, hit.x, hit.y).has_value();
                    }
                }
                if (occluded) continue;
                float rgb[3];
                wall.shade(wx, wy, rgb);
                cloud.points.push_back(apply(cam_to_velo, pc));
                cloud.intensity.push_back(rgb[0]);
            }
        double step = board.square / 4.0;
        double bx0 = -0.5 * (board.cols - 1) * board.square - board.square;
        double bx1 = -bx0;
        double by0 = -0.5 * (board.rows - 1) * board.square - board.square;
        double by1 = -by0;
        for (double by = by0; by <= by1 + 1e-9; by += step)
            for (double bx = bx0; bx <= bx1 + 1e-9; bx += step) {
                auto shade = board_shade(board, bx, by);
                if (!shade) continue;
                Vec3 pc = apply(pose, {bx, by, 0.0});
                cloud.points.push_back(apply(cam_to_velo, pc));
                cloud.intensity.push_back(*shade);
            }
        out.clouds.push_back(std::move(cloud));
    }
    return out;
}

std::string write_synthetic_drive(const fs::path& root, const CameraIntrinsics& intr,
                                  const RigidTransform& velo_to_cam,
                                  const BoardSpec& board, int n_frames, int width,
                                  int height, std::uint64_t seed,
                                  const std::string& camera_id) {
    const std::string date = "2000_01_01";
    const std::string drive_id = date + "_drive_0001_sync";
    fs::path date_dir = root / date;
    fs::path drive_dir = date_dir / drive_id;
    fs::create_directories(drive_dir / ("image_" + camera_id) / "data");
    fs::create_directories(drive_dir / "velodyne_points" / "data");

    SyntheticScene scene =
        make_synthetic_scene(intr, velo_to_cam, board, n_frames, width, height, 0.0, seed);

    char line[512];
    std::snprintf(line, sizeof line,
                  "K_%s: %.17g 0.0 %.17g 0.0 %.17g %.17g 0.0 0.0 1.0\n",
                  camera_id.c_str(), intr.f, intr.cx, intr.f, intr.cy);
    std::string cam_text = line;
    write_file_bytes(date_dir / "calib_cam_to_cam.txt",
                     std::vector<std::uint8_t>(cam_text.begin(), cam_text.end()));

    Mat3 r = to_matrix(velo_to_cam.q);
    std::string velo_text = "R:";
    for (double v : r.m) {
        std::snprintf(line, sizeof line, " %.17g", v);
        velo_text += line;
    }
    std::snprintf(line, sizeof line, "\nT: %.17g %.17g %.17g\n", velo_to_cam.t.x,
                  velo_to_cam.t.y, velo_to_cam.t.z);
    velo_text += line;
    write_file_bytes(date_dir / "calib_velo_to_cam.txt",
                     std::vector<std::uint8_t>(velo_text.begin(), velo_text.end()));

    std::snprintf(line, sizeof line, "xi_%s: %.17g\n", camera_id.c_str(), intr.xi);
    std::string usm_text = line;
    write_file_bytes(date_dir / "calib_usm.txt",
                     std::vector<std::uint8_t>(usm_text.begin(), usm_text.end()));

    for (int i = 0; i < n_frames; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%010d", i);
        save_ppm(scene.images[i],
                 drive_dir / ("image_" + camera_id) / "data" / (std::string(name) + ".ppm"));
        save_velodyne_bin(scene.clouds[i],
                          drive_dir / "velodyne_points" / "data" /
                              (std::string(name) + ".bin"));
    }
    save_scene(scene.scene, drive_dir / "scene.json");
    return drive_id;
}

std::string scene_to_json(const CheckerboardScene& scene) {
    nlohmann::json j;
    j["board"] = {{"rows", scene.board.rows},
                  {"cols", scene.board.cols},
                  {"square", scene.board.square}};
    j["poses"] = nlohmann::json::array();
    for (const RigidTransform& p : scene.poses)
        j["poses"].push_back({{"q", {p.q.w, p.q.x, p.q.y, p.q.z}},
                              {"t", {p.t.x, p.t.y, p.t.z}}});
    j["observed"] = nlohmann::json::array();
    for (const auto& pose_obs : scene.observed) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Pixel& px : pose_obs) arr.push_back({px.u, px.v});
        j["observed"].push_back(std::move(arr));
    }
    return j.dump() + "\n";
}

CheckerboardScene scene_from_json(const std::string& text) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        CheckerboardScene scene;
        scene.board.rows = j.at("board").at("rows").get<int>();
        scene.board.cols = j.at("board").at("cols").get<int>();
        scene.board.square = j.at("board").at("square").get<double>();
        for (const auto& p : j.at("poses")) {
            const auto& q = p.at("q");
            const auto& t = p.at("t");
            scene.poses.push_back(
                {Quat::from_raw(q.at(0).get<double>(), q.at(1).get<double>(),
                                q.at(2).get<double>(), q.at(3).get<double>()),
                 {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()}});
        }
        for (const auto& pose_obs : j.at("observed")) {
            std::vector<Pixel> obs;
            for (const auto& px : pose_obs)
                obs.push_back({px.at(0).get<double>(), px.at(1).get<double>()});
            scene.observed.push_back(std::move(obs));
        }
        return scene;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scene JSON: ") + e.what());
    }
}

void save_scene(const CheckerboardScene& scene, const fs::path& path) {
    std::string text = scene_to_json(scene);
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

CheckerboardScene load_scene(const fs::path& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return scene_from_json(std::string(bytes.begin(), bytes.end()));
}

// --- training ------------------------------------------------------------------

AblationExp ablation_from_string(const std::string& s) {
    if (s == "none" || s.empty()) return AblationExp::none;
    if (s == "I") return AblationExp::I;
    if (s == "II") return AblationExp::II;
    if (s == "III") return AblationExp::III;
    if (s == "IV") return AblationExp::IV;
    throw UserError("unknown ablation experiment '" + s + "' (expected I, II, III or IV)");
}

std::string ablation_to_string(AblationExp e) {
    switch (e) {
        case AblationExp::none: return "none";
        case AblationExp::I: return "I";
        case AblationExp::II: return "II";
        case AblationExp::III: return "III";
        case AblationExp::IV: return "IV";
    }
    return "none";
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw UserError("train config: lr must be positive");
    if (lr_decay <= 0.0 || lr_decay > 1.0)
        throw UserError("train config: lr_decay must be in (0, 1]");
    if (batch_size < 1) throw UserError("train config: batch_size must be >= 1");
    if (epochs < 1) throw UserError("train config: epochs must be >= 1");
    if (input_width < 32 || input_height < 32)
        throw UserError("train config: input size must be at least 32x32");
    if (early_stop_rel < 0.0 || early_stop_rel >= 1.0)
        throw UserError("train config: early_stop_rel must be in [0, 1)");
    model.validate();
}

InputPreparer::InputPreparer(const Dataset& dataset, int input_w, int input_h,
                             double depth_max_range)
    : dataset_(dataset), input_w_(input_w), input_h_(input_h),
      depth_max_range_(depth_max_range) {
    Image probe = load_ppm(dataset_.dir / dataset_.labels.at(0).image_path);
    scale_ = static_cast<double>(input_w) / probe.width;
    double expect_h = probe.height * scale_;
    if (std::abs(expect_h - input_h) > 1.0)
        throw UserError("input size " + std::to_string(input_w) + "x" +
                        std::to_string(input_h) + " is not a uniform downscale of " +
                        std::to_string(probe.width) + "x" + std::to_string(probe.height));
    theta0_scaled_ = dataset_.index.theta0;
    theta0_scaled_.intr.f *= scale_;
    theta0_scaled_.intr.cx *= scale_;
    theta0_scaled_.intr.cy *= scale_;
}

const FrameRecord& InputPreparer::frame_record(int frame_number) const {
    for (const FrameRecord& f : dataset_.index.frames)
        if (f.frame_number == frame_number) return f;
    throw UserError("manifest references frame " + std::to_string(frame_number) +
                    " which is not in the index");
}

const PointCloud& InputPreparer::cloud_for_frame(int frame_number) const {
    for (const auto& [n, cloud] : cloud_cache_)
        if (n == frame_number) return cloud;
    cloud_cache_.emplace_back(frame_number,
                              load_velodyne_bin(frame_record(frame_number).cloud_path));
    return cloud_cache_.back().second;
}

PreparedItem InputPreparer::prepare(const CalibrationLabel& label) const {
    Image img = load_ppm(dataset_.dir / label.image_path);
    if (img.width != input_w_ || img.height != input_h_)
        img = resize_bilinear(img, input_w_, input_h_);

    PreparedItem item;
    size_t plane = static_cast<size_t>(input_w_) * input_h_;
    item.rgb.resize(3 * plane);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < input_h_; ++y)
            for (int x = 0; x < input_w_; ++x)
                item.rgb[c * plane + y * static_cast<size_t>(input_w_) + x] =
                    img.at(y, x, c);

    RigidTransform ext =
        deviated_extrinsic(label.deviation, dataset_.index.theta0.velo_to_cam);
    DepthImage depth = render_depth_image(cloud_for_frame(label.frame_number),
                                          theta0_scaled_.intr, ext, input_w_, input_h_);
    item.depth.resize(plane);
    for (size_t i = 0; i < plane; ++i)
        item.depth[i] = std::clamp(depth.depth[i] / static_cast<float>(depth_max_range_),
                                   0.0f, 1.0f);
    return item;
}

namespace {

struct LabelTargets {
    float df, dxi;
    float q[4];
    float t[3];
};

LabelTargets targets_of(const CalibrationLabel& label) {
    LabelTargets t;
    t.df = static_cast<float>(label.deviation.df);
    t.dxi = static_cast<float>(label.deviation.dxi);
    t.q[0] = static_cast<float>(label.deviation.dq.w);
    t.q[1] = static_cast<float>(label.deviation.dq.x);
    t.q[2] = static_cast<float>(label.deviation.dq.y);
    t.q[3] = static_cast<float>(label.deviation.dq.z);
    t.t[0] = static_cast<float>(label.deviation.dt.x);
    t.t[1] = static_cast<float>(label.deviation.dt.y);
    t.t[2] = static_cast<float>(label.deviation.dt.z);
    return t;
}

struct BatchBuffers {
    nn::Tensor rgb, depth;
    net::BatchLabels<float> labels;
};

BatchBuffers assemble_batch(const std::vector<const PreparedItem*>& items,
                            const std::vector<const CalibrationLabel*>& labels, int w,
                            int h) {
    int n = static_cast<int>(items.size());
    size_t plane = static_cast<size_t>(w) * h;
    std::vector<float> rgb(static_cast<size_t>(n) * 3 * plane);
    std::vector<float> depth(static_cast<size_t>(n) * plane);
    std::vector<float> df(n), dxi(n), dq(static_cast<size_t>(n) * 4),
        dt(static_cast<size_t>(n) * 3);
    for (int i = 0; i < n; ++i) {
        std::copy(items[i]->rgb.begin(), items[i]->rgb.end(),
                  rgb.begin() + static_cast<size_t>(i) * 3 * plane);
        std::copy(items[i]->depth.begin(), items[i]->depth.end(),
                  depth.begin() + static_cast<size_t>(i) * plane);
        LabelTargets t = targets_of(*labels[i]);
        df[i] = t.df;
        dxi[i] = t.dxi;
        std::copy(t.q, t.q + 4, dq.begin() + static_cast<size_t>(i) * 4);
        std::copy(t.t, t.t + 3, dt.begin() + static_cast<size_t>(i) * 3);
    }
    BatchBuffers buf;
    buf.rgb = nn::Tensor::from_values({n, 3, h, w}, std::move(rgb));
    buf.depth = nn::Tensor::from_values({n, 1, h, w}, std::move(depth));
    buf.labels.df = nn::Tensor::from_values({n, 1}, std::move(df));
    buf.labels.dxi = nn::Tensor::from_values({n, 1}, std::move(dxi));
    buf.labels.dq = nn::Tensor::from_values({n, 4}, std::move(dq));
    buf.labels.dt = nn::Tensor::from_values({n, 3}, std::move(dt));
    return buf;
}

net::CalicaConfig configure_experiment(const TrainConfig& cfg) {
    net::CalicaConfig model = cfg.model;
    switch (cfg.experiment) {
        case AblationExp::none:
            break;
        case AblationExp::I:
            model.share_trunk = false;
            model.freeze_rgb = true;
            break;
        case AblationExp::II:
            model.share_trunk = false;
            model.freeze_depth = true;
            break;
        case AblationExp::III:
            model.share_trunk = false;
            break;
        case AblationExp::IV:
            model.share_trunk = true;
            break;
    }
    return model;
}

void loss_term_mask(AblationExp exp, bool* use_intrinsic, bool* use_extrinsic) {
    *use_intrinsic = exp != AblationExp::I;
    *use_extrinsic = exp != AblationExp::II;
}

}  // namespace

std::string history_to_csv(const std::vector<EpochStats>& history) {
    std::string csv = "epoch,train_total,val_total,val_f,val_xi,val_q,val_t\n";
    for (const EpochStats& e : history) {
        csv += std::to_string(e.epoch) + "," + fmt(e.train_total) + "," +
               fmt(e.val_total) + "," + fmt_opt(e.val_f) + "," + fmt_opt(e.val_xi) + "," +
               fmt_opt(e.val_q) + "," + fmt_opt(e.val_t) + "\n";
    }
    return csv;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.labels.empty()) throw UserError("train: empty manifest");

    net::CalicaConfig model_cfg = configure_experiment(config);
    bool use_intrinsic = true, use_extrinsic = true;
    loss_term_mask(config.experiment, &use_intrinsic, &use_extrinsic);

    net::CalicaNet model(model_cfg, config.seed);
    nn::AdamState<float> adam;
    adam.lr = config.lr;

    InputPreparer preparer(dataset, config.input_width, config.input_height,
                           model_cfg.depth_max_range);

    std::vector<size_t> train_idx, val_idx;
    for (size_t i = 0; i < dataset.labels.size(); ++i)
        (dataset.labels[i].split == "val" ? val_idx : train_idx).push_back(i);
    if (train_idx.empty()) throw UserError("train: no labels in the train split");
    if (val_idx.empty()) {
        warn("train: no validation labels; validating on the training split");
        val_idx = train_idx;
    }

    // Desk-scale datasets fit in memory; prepare once.
    std::vector<PreparedItem> prepared(dataset.labels.size());
    for (size_t i = 0; i < dataset.labels.size(); ++i)
        prepared[i] = preparer.prepare(dataset.labels[i]);

    auto run_batch = [&](const std::vector<size_t>& indices, size_t begin, size_t end,
                         bool training) -> net::LossResult<float> {
        std::vector<const PreparedItem*> items;
        std::vector<const CalibrationLabel*> labels;
        for (size_t i = begin; i < end; ++i) {
            items.push_back(&prepared[indices[i]]);
            labels.push_back(&dataset.labels[indices[i]]);
        }
        BatchBuffers buf =
            assemble_batch(items, labels, config.input_width, config.input_height);
        auto out = model.forward(buf.rgb, buf.depth);
        auto loss = net::total_loss(out, buf.labels, model_cfg, use_intrinsic, use_extrinsic);
        if (!std::isfinite(static_cast<double>(loss.total.item())))
            throw UserError("train: non-finite loss in batch starting at label ordinal " +
                            std::to_string(dataset.labels[indices[begin]].ordinal));
        if (training) loss.total.backward();
        return loss;
    };

    TrainResult result;
    result.best_val = std::numeric_limits<double>::infinity();
    double first_epoch_loss = 0.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // Epoch-seeded shuffle (Fisher-Yates on a deterministic stream).
        std::vector<size_t> order = train_idx;
        Rng shuffle_rng(derive_seed(config.seed, 0xE90C000ULL + epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        adam.lr = config.lr * std::pow(config.lr_decay, epoch - 1);

        double train_sum = 0.0;
        for (size_t begin = 0; begin < order.size();
             begin += static_cast<size_t>(config.batch_size)) {
            size_t end = std::min(order.size(), begin + config.batch_size);
            for (auto& p : model.parameters()) p.tensor.zero_grad();
            auto loss = run_batch(order, begin, end, true);
            adam_step(model.parameters(), adam);
            train_sum += static_cast<double>(loss.total.item()) *
                         static_cast<double>(end - begin);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_total = train_sum / static_cast<double>(order.size());

        {
            nn::GradGuard no_grad;
            double val_sum = 0.0, f_sum = 0.0, xi_sum = 0.0, q_sum = 0.0, t_sum = 0.0;
            for (size_t begin = 0; begin < val_idx.size();
                 begin += static_cast<size_t>(config.batch_size)) {
                size_t end = std::min(val_idx.size(), begin + config.batch_size);
                auto loss = run_batch(val_idx, begin, end, false);
                double weight = static_cast<double>(end - begin);
                val_sum += static_cast<double>(loss.total.item()) * weight;
                if (loss.terms.f) f_sum += *loss.terms.f * weight;
                if (loss.terms.xi) xi_sum += *loss.terms.xi * weight;
                if (loss.terms.q) q_sum += *loss.terms.q * weight;
                if (loss.terms.t) t_sum += *loss.terms.t * weight;
            }
            double n = static_cast<double>(val_idx.size());
            stats.val_total = val_sum / n;
            if (use_intrinsic) {
                stats.val_f = f_sum / n;
                stats.val_xi = xi_sum / n;
            }
            if (use_extrinsic) {
                stats.val_q = q_sum / n;
                stats.val_t = t_sum / n;
            }
        }

        result.history.push_back(stats);
        if (stats.val_total < result.best_val) {
            result.best_val = stats.val_total;
            result.best_epoch = epoch;
            result.best_state = model.state();
        }
        if (epoch == 1) first_epoch_loss = stats.train_total;
        if (config.early_stop_rel > 0.0 &&
            stats.train_total <= config.early_stop_rel * first_epoch_loss)
            break;
    }

    if (result.best_state.empty()) result.best_state = model.state();

    if (!config.out_dir.empty()) {
        fs::create_directories(config.out_dir);
        nn::save_checkpoint(result.best_state, fs::path(config.out_dir) / "checkpoint.bin");
        std::string csv = history_to_csv(result.history);
        write_file_bytes(fs::path(config.out_dir) / "history.csv",
                         std::vector<std::uint8_t>(csv.begin(), csv.end()));
    }
    return result;
}

// --- evaluation -------------------------------------------------------------------

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["intrinsic_px"] = intrinsic_px;
    j["baseline_px"] = baseline_px;
    j["extrinsic_t_m"] = extrinsic_t_m;
    j["extrinsic_r_deg"] = extrinsic_r_deg;
    j["mean_f_pred"] = mean_f_pred;
    j["mean_xi_pred"] = mean_xi_pred;
    j["frames"] = frames;
    j["forward_passes"] = forward_passes;
    j["per_frame"] = nlohmann::json::array();
    for (const FrameEval& f : per_frame)
        j["per_frame"].push_back({{"ordinal", f.ordinal},
                                  {"rot_err_deg", f.rot_err_deg},
                                  {"trans_err_m", f.trans_err_m},
                                  {"df_err_px", f.df_err_px},
                                  {"dxi_err", f.dxi_err}});
    return j.dump(2) + "\n";
}

EvalReport evaluate(const std::vector<nn::CheckpointEntry>& checkpoint,
                    const Dataset& dataset, const CheckerboardScene& scene,
                    const std::string& split, const fs::path& overlays_dir) {
    net::CalicaConfig cfg = net::CalicaConfig::from_entries(checkpoint);
    net::CalicaNet model(cfg, 0);
    model.load_state(checkpoint);

    std::vector<size_t> selected;
    for (size_t i = 0; i < dataset.labels.size(); ++i)
        if (split == "all" || dataset.labels[i].split == split) selected.push_back(i);
    if (selected.empty()) throw UserError("evaluate: no labels in split '" + split + "'");

    // Input resolution comes from the stored images (uniform scale of 1 when
    // the dataset was generated at network resolution).
    Image probe = load_ppm(dataset.dir / dataset.labels[selected[0]].image_path);
    InputPreparer preparer(dataset, probe.width, probe.height, cfg.depth_max_range);

    const Calibration& theta0 = dataset.index.theta0;
    EvalReport report;
    double f_sum = 0.0, xi_sum = 0.0, rot_sum = 0.0, trans_sum = 0.0;
    if (!overlays_dir.empty()) fs::create_directories(overlays_dir);

    for (size_t idx : selected) {
        const CalibrationLabel& label = dataset.labels[idx];
        PreparedItem item = preparer.prepare(label);
        size_t plane = item.depth.size();
        auto rgb = nn::Tensor::from_values({1, 3, probe.height, probe.width},
                                           std::vector<float>(item.rgb));
        auto depth = nn::Tensor::from_values({1, 1, probe.height, probe.width},
                                             std::vector<float>(item.depth));
        (void)plane;
        net::Prediction pred = model.predict(rgb, depth);
        Calibration theta_pred = net::apply_prediction(theta0, pred);
        RigidTransform label_ext = deviated_extrinsic(label.deviation, theta0.velo_to_cam);

        ExtrinsicErrors err = extrinsic_errors(theta_pred.velo_to_cam, label_ext);
        FrameEval fe;
        fe.ordinal = label.ordinal;
        fe.rot_err_deg = err.rotation_deg;
        fe.trans_err_m = err.translation_m;
        fe.df_err_px = pred.df - label.deviation.df;
        fe.dxi_err = pred.dxi - label.deviation.dxi;
        report.per_frame.push_back(fe);

        rot_sum += err.rotation_deg;
        trans_sum += err.translation_m;
        f_sum += theta_pred.intr.f;
        xi_sum += theta_pred.intr.xi;

        if (!overlays_dir.empty()) {
            Image source = Image::zeros(probe.width, probe.height, 3);
            for (int c = 0; c < 3; ++c)
                for (size_t i = 0; i < plane; ++i)
                    source.data[i * 3 + c] = item.rgb[c * plane + i];
            CameraIntrinsics overlay_intr = theta_pred.intr;
            double s = preparer.scale();
            overlay_intr.f *= s;
            overlay_intr.cx *= s;
            overlay_intr.cy *= s;
            const PointCloud cloud = load_velodyne_bin(
                [&]() -> std::string {
                    for (const FrameRecord& f : dataset.index.frames)
                        if (f.frame_number == label.frame_number) return f.cloud_path;
                    throw UserError("evaluate: frame not in index");
                }());
            Image overlay = render_overlay(source, cloud, overlay_intr,
                                           theta_pred.velo_to_cam, cfg.depth_max_range);
            char name[40];
            std::snprintf(name, sizeof name, "overlay_%06d.ppm", label.ordinal);
            save_ppm(overlay, overlays_dir / name);
        }
    }

    double n = static_cast<double>(selected.size());
    report.frames = static_cast<int>(selected.size());
    report.forward_passes = model.forward_count();
    report.extrinsic_r_deg = rot_sum / n;
    report.extrinsic_t_m = trans_sum / n;
    report.mean_f_pred = f_sum / n;
    report.mean_xi_pred = xi_sum / n;

    CameraIntrinsics mean_intr = theta0.intr;
    mean_intr.f = report.mean_f_pred;
    mean_intr.xi = report.mean_xi_pred;
    report.intrinsic_px = reprojection_rmse(mean_intr, scene);
    report.baseline_px = reprojection_rmse(theta0.intr, scene);
    return report;
}

// --- ablation -----------------------------------------------------------------------

std::string AblationTable::to_csv() const {
    std::string csv = "exp,rgb_train,depth_train,siamese,f_loss,xi_loss,r_loss,t_loss\n";
    for (const AblationRow& r : rows) {
        csv += r.exp + "," + (r.rgb_train ? "yes" : "no") + "," +
               (r.depth_train ? "yes" : "no") + "," + (r.siamese ? "yes" : "no") + "," +
               fmt_opt(r.f_loss) + "," + fmt_opt(r.xi_loss) + "," + fmt_opt(r.r_loss) +
               "," + fmt_opt(r.t_loss) + "\n";
    }
    return csv;
}

AblationTable ablate(const Dataset& dataset, const TrainConfig& base) {
    AblationTable table;
    for (AblationExp exp :
         {AblationExp::I, AblationExp::II, AblationExp::III, AblationExp::IV}) {
        TrainConfig cfg = base;
        cfg.experiment = exp;
        if (!base.out_dir.empty())
            cfg.out_dir = (fs::path(base.out_dir) / ("exp_" + ablation_to_string(exp))).string();
        info("ablation experiment " + ablation_to_string(exp));
        TrainResult result = train(dataset, cfg);
        const EpochStats& last = result.history.back();
        AblationRow row;
        row.exp = ablation_to_string(exp);
        row.rgb_train = exp != AblationExp::I;
        row.depth_train = exp != AblationExp::II;
        row.siamese = exp == AblationExp::IV;
        row.f_loss = last.val_f;
        row.xi_loss = last.val_xi;
        row.r_loss = last.val_q;
        row.t_loss = last.val_t;
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace calica::pipeline
