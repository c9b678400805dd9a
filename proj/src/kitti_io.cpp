#include "calica/kitti_io.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace calica {

namespace {

// key: v0 v1 v2 ... lines; returns the values of the requested key.
// Duplicate keys keep the last occurrence and warn.
std::vector<double> find_key_values(const std::string& text, const std::string& key,
                                    bool* found) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    int hits = 0;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string k = line.substr(0, colon);
        while (!k.empty() && (k.back() == ' ' || k.back() == '\t')) k.pop_back();
        if (k != key) continue;
        ++hits;
        if (hits > 1) warn("duplicate key '" + key + "' in calib text; last occurrence wins");
        values.clear();
        std::istringstream vs(line.substr(colon + 1));
        std::string tok;
        while (vs >> tok) {
            try {
                size_t used = 0;
                double v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                values.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("non-numeric token '" + tok + "' on line " +
                                 std::to_string(line_no));
            }
        }
    }
    *found = hits > 0;
    return values;
}

}  // namespace

CameraIntrinsics parse_cam_calib(const std::string& text, const std::string& camera_id) {
    bool found = false;
    std::string key = "K_" + camera_id;
    std::vector<double> k = find_key_values(text, key, &found);
    if (!found) throw ParseError("calib_cam_to_cam: missing key '" + key + "'");
    if (k.size() != 9)
        throw ParseError("calib_cam_to_cam: key '" + key + "' has " +
                         std::to_string(k.size()) + " values, expected 9");
    CameraIntrinsics intr;
    intr.f = 0.5 * (k[0] + k[4]);
    intr.cx = k[2];
    intr.cy = k[5];
    intr.xi = 0.0;
    if (!intr.valid()) throw ParseError("calib_cam_to_cam: implausible intrinsics in '" + key + "'");
    return intr;
}

std::optional<double> parse_usm_sidecar(const std::string& text,
                                        const std::string& camera_id) {
    bool found = false;
    std::vector<double> v = find_key_values(text, "xi_" + camera_id, &found);
    if (!found) v = find_key_values(text, "xi", &found);
    if (!found) return std::nullopt;
    if (v.size() != 1) throw ParseError("USM sidecar: xi line must carry exactly one value");
    return v[0];
}

RigidTransform parse_velo_calib(const std::string& text) {
    bool found_r = false, found_t = false;
    std::vector<double> r = find_key_values(text, "R", &found_r);
    std::vector<double> t = find_key_values(text, "T", &found_t);
    if (!found_r) throw ParseError("calib_velo_to_cam: missing key 'R'");
    if (!found_t) throw ParseError("calib_velo_to_cam: missing key 'T'");
    if (r.size() != 9) throw ParseError("calib_velo_to_cam: 'R' needs 9 values");
    if (t.size() != 3) throw ParseError("calib_velo_to_cam: 'T' needs 3 values");

    Mat3 m;
    std::copy(r.begin(), r.end(), m.m.begin());
    double drift = orthonormality_drift(m);
    if (drift > 1e-3 || m.det() <= 0.0)
        throw UserError("calib_velo_to_cam: R is not a rotation (orthonormality drift " +
                        std::to_string(drift) + " > 1e-3)");
    if (drift > 1e-9) {
        warn("calib_velo_to_cam: correcting rotation drift of " + std::to_string(drift));
        m = orthonormalize(m);
    }
    return {to_quat(m), {t[0], t[1], t[2]}};
}

Image load_image(const fs::path& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    std::string magic;
    char hex[8];
    for (size_t i = 0; i < std::min<size_t>(bytes.size(), 4); ++i) {
        std::snprintf(hex, sizeof hex, "%02x", bytes[i]);
        if (!magic.empty()) magic += " ";
        magic += hex;
    }
    bool is_png = bytes.size() >= 4 && bytes[0] == 0x89 && bytes[1] == 'P' &&
                  bytes[2] == 'N' && bytes[3] == 'G';
    throw UserError("unsupported image format (magic bytes: " + magic +
                    (is_png ? ", PNG; convert to 8-bit binary PPM" : "") + "): " +
                    path.string());
}

namespace {

std::string read_text_file(const fs::path& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// Frame number from a file stem like "0000000042".
std::optional<int> frame_number_of(const fs::path& path) {
    std::string stem = path.stem().string();
    if (stem.empty()) return std::nullopt;
    int value = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), value);
    if (ec != std::errc() || ptr != stem.data() + stem.size()) return std::nullopt;
    return value;
}

std::map<int, fs::path> index_directory(const fs::path& dir) {
    std::map<int, fs::path> files;
    if (!fs::is_directory(dir)) return files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto n = frame_number_of(entry.path());
        if (n) files[*n] = entry.path();
    }
    return files;
}

}  // namespace

DriveIndex build_drive_index(const fs::path& root, const std::string& drive_id,
                             const std::string& camera_id) {
    if (drive_id.size() < 10) throw UserError("drive id must start with a <date> prefix");
    std::string date = drive_id.substr(0, 10);
    fs::path date_dir = root / date;
    fs::path drive_dir = date_dir / drive_id;
    if (!fs::is_directory(drive_dir))
        throw UserError("drive directory not found: " + drive_dir.string());

    fs::path cam_calib = date_dir / "calib_cam_to_cam.txt";
    fs::path velo_calib = date_dir / "calib_velo_to_cam.txt";
    if (!fs::exists(cam_calib)) throw UserError("missing calib file: " + cam_calib.string());
    if (!fs::exists(velo_calib)) throw UserError("missing calib file: " + velo_calib.string());

    DriveIndex index;
    index.drive_id = drive_id;
    index.theta0.intr = parse_cam_calib(read_text_file(cam_calib), camera_id);
    index.theta0.velo_to_cam = parse_velo_calib(read_text_file(velo_calib));

    fs::path usm = date_dir / "calib_usm.txt";
    if (fs::exists(usm)) {
        auto xi = parse_usm_sidecar(read_text_file(usm), camera_id);
        if (xi) {
            index.theta0.intr.xi = *xi;
            if (!index.theta0.intr.valid())
                throw UserError("calib_usm.txt: xi out of range [0, 1.5]");
        }
    }

    auto images = index_directory(drive_dir / ("image_" + camera_id) / "data");
    auto clouds = index_directory(drive_dir / "velodyne_points" / "data");
    for (const auto& [n, image_path] : images) {
        auto it = clouds.find(n);
        if (it == clouds.end()) {
            warn("frame " + std::to_string(n) + ": no matching cloud, skipped");
            continue;
        }
        index.frames.push_back({n, image_path.string(), it->second.string()});
    }
    for (const auto& [n, cloud_path] : clouds)
        if (!images.count(n)) warn("frame " + std::to_string(n) + ": no matching image, skipped");

    if (index.frames.empty())
        throw UserError("no paired image/cloud frames under " + drive_dir.string());
    return index;
}

namespace {

nlohmann::json calibration_json(const Calibration& c) {
    return {{"f", c.intr.f},
            {"cx", c.intr.cx},
            {"cy", c.intr.cy},
            {"xi", c.intr.xi},
            {"q", {c.velo_to_cam.q.w, c.velo_to_cam.q.x, c.velo_to_cam.q.y,
                   c.velo_to_cam.q.z}},
            {"t", {c.velo_to_cam.t.x, c.velo_to_cam.t.y, c.velo_to_cam.t.z}}};
}

Calibration calibration_from(const nlohmann::json& j) {
    Calibration c;
    c.intr.f = j.at("f").get<double>();
    c.intr.cx = j.at("cx").get<double>();
    c.intr.cy = j.at("cy").get<double>();
    c.intr.xi = j.at("xi").get<double>();
    const auto& q = j.at("q");
    c.velo_to_cam.q = Quat::from_raw(q.at(0).get<double>(), q.at(1).get<double>(),
                                     q.at(2).get<double>(), q.at(3).get<double>());
    const auto& t = j.at("t");
    c.velo_to_cam.t = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    return c;
}

}  // namespace

std::string calibration_to_json(const Calibration& calib) {
    return calibration_json(calib).dump(2) + "\n";
}

Calibration calibration_from_json(const std::string& json_text) {
    try {
        return calibration_from(nlohmann::json::parse(json_text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("calibration JSON: ") + e.what());
    }
}

std::string drive_index_to_json(const DriveIndex& index) {
    nlohmann::json j;
    j["drive"] = index.drive_id;
    j["theta0"] = calibration_json(index.theta0);
    j["frames"] = nlohmann::json::array();
    for (const FrameRecord& f : index.frames)
        j["frames"].push_back({{"n", f.frame_number}, {"image", f.image_path},
                               {"cloud", f.cloud_path}});
    return j.dump(2) + "\n";
}

DriveIndex drive_index_from_json(const std::string& json_text) {
    try {
        nlohmann::json j = nlohmann::json::parse(json_text);
        DriveIndex index;
        index.drive_id = j.at("drive").get<std::string>();
        index.theta0 = calibration_from(j.at("theta0"));
        for (const auto& f : j.at("frames"))
            index.frames.push_back({f.at("n").get<int>(), f.at("image").get<std::string>(),
                                    f.at("cloud").get<std::string>()});
        return index;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("index JSON: ") + e.what());
    }
}

void save_drive_index(const DriveIndex& index, const fs::path& path) {
    std::string text = drive_index_to_json(index);
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

DriveIndex load_drive_index(const fs::path& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return drive_index_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace calica
