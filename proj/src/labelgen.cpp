#include "calica/labelgen.hpp"

#include <cmath>

#include <json.hpp>

namespace fs = std::filesystem;

namespace calica {

Deviation sample_deviation(const DeviationRanges& ranges, Rng& rng) {
    if (!ranges.valid()) throw UserError("sample_deviation: negative range");
    Deviation d;
    d.df = rng.uniform(-ranges.df_max, ranges.df_max);
    d.dxi = rng.uniform(-ranges.dxi_max, ranges.dxi_max);
    double rx = rng.uniform(-ranges.drot_max, ranges.drot_max);
    double ry = rng.uniform(-ranges.drot_max, ranges.drot_max);
    double rz = rng.uniform(-ranges.drot_max, ranges.drot_max);
    d.dq = from_euler_xyz_deg({rx, ry, rz});
    d.dt = {rng.uniform(-ranges.dt_max, ranges.dt_max),
            rng.uniform(-ranges.dt_max, ranges.dt_max),
            rng.uniform(-ranges.dt_max, ranges.dt_max)};
    return d;
}

Image synthesize_distorted_image(const Image& image, const CameraIntrinsics& nominal,
                                 const CameraIntrinsics& deviated) {
    Image out = Image::zeros(image.width, image.height, image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            Vec3 ray;
            try {
                ray = undistort_pixel(deviated, {static_cast<double>(x),
                                                 static_cast<double>(y)});
            } catch (const UserError&) {
                continue;  // outside deviated model domain -> black
            }
            auto src = project_ray(nominal, ray);
            if (!src) continue;
            if (src->u < 0.0 || src->v < 0.0 || src->u > image.width - 1 ||
                src->v > image.height - 1)
                continue;
            for (int c = 0; c < image.channels; ++c)
                out.at(y, x, c) = bilinear_sample(image, src->u, src->v, c);
        }
    }
    return out;
}

RigidTransform deviated_extrinsic(const Deviation& d, const RigidTransform& theta0_ext) {
    return compose({d.dq, d.dt}, theta0_ext);
}

CameraIntrinsics deviated_intrinsics(const Deviation& d, const CameraIntrinsics& nominal) {
    CameraIntrinsics intr = nominal;
    intr.f = nominal.f + d.df;
    intr.xi = nominal.xi + d.dxi;
    if (intr.f <= 0.0)
        throw UserError("deviated focal length is non-positive; ranges too wide for f0");
    return intr;
}

std::string label_to_json_line(const CalibrationLabel& label) {
    nlohmann::json j;
    j["ordinal"] = label.ordinal;
    j["frame"] = label.frame_number;
    j["split"] = label.split;
    j["df"] = label.deviation.df;
    j["dxi"] = label.deviation.dxi;
    j["dq"] = {label.deviation.dq.w, label.deviation.dq.x, label.deviation.dq.y,
               label.deviation.dq.z};
    j["dt"] = {label.deviation.dt.x, label.deviation.dt.y, label.deviation.dt.z};
    j["image"] = label.image_path;
    j["seed"] = label.seed;
    return j.dump();
}

CalibrationLabel label_from_json_line(const std::string& line) {
    try {
        nlohmann::json j = nlohmann::json::parse(line);
        CalibrationLabel label;
        label.ordinal = j.at("ordinal").get<int>();
        label.frame_number = j.at("frame").get<int>();
        label.split = j.at("split").get<std::string>();
        label.deviation.df = j.at("df").get<double>();
        label.deviation.dxi = j.at("dxi").get<double>();
        const auto& q = j.at("dq");
        label.deviation.dq = Quat::from_raw(q.at(0).get<double>(), q.at(1).get<double>(),
                                            q.at(2).get<double>(), q.at(3).get<double>());
        const auto& t = j.at("dt");
        label.deviation.dt = {t.at(0).get<double>(), t.at(1).get<double>(),
                              t.at(2).get<double>()};
        label.image_path = j.at("image").get<std::string>();
        label.seed = j.at("seed").get<std::uint64_t>();
        return label;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest line: ") + e.what());
    }
}

GeneratedDataset generate_dataset(const DriveIndex& index, int count,
                                  const DeviationRanges& ranges,
                                  std::uint64_t master_seed, const fs::path& output_dir) {
    if (index.frames.empty()) throw UserError("generate_dataset: empty index");
    if (count <= 0) throw UserError("generate_dataset: count must be positive");
    fs::create_directories(output_dir / "images");

    GeneratedDataset result;
    std::string manifest;
    for (int ordinal = 0; ordinal < count; ++ordinal) {
        const FrameRecord& frame = index.frames[ordinal % index.frames.size()];
        CalibrationLabel label;
        label.ordinal = ordinal;
        label.frame_number = frame.frame_number;
        label.split = (ordinal % 5 == 4) ? "val" : "train";
        label.seed = derive_seed(master_seed, static_cast<std::uint64_t>(ordinal));
        Rng rng(label.seed);
        label.deviation = sample_deviation(ranges, rng);

        Image source = load_image(frame.image_path);
        Image distorted = synthesize_distorted_image(
            source, index.theta0.intr, deviated_intrinsics(label.deviation, index.theta0.intr));
        char name[32];
        std::snprintf(name, sizeof name, "images/label_%06d.ppm", ordinal);
        label.image_path = name;
        save_ppm(distorted, output_dir / name);

        manifest += label_to_json_line(label) + "\n";
        result.labels.push_back(label);
    }

    result.manifest_path = output_dir / "manifest.jsonl";
    write_file_bytes(result.manifest_path,
                     std::vector<std::uint8_t>(manifest.begin(), manifest.end()));
    save_drive_index(index, output_dir / "index.json");
    return result;
}

Dataset load_dataset(const fs::path& dataset_dir) {
    Dataset ds;
    ds.dir = dataset_dir;
    ds.index = load_drive_index(dataset_dir / "index.json");
    std::vector<std::uint8_t> bytes = read_file_bytes(dataset_dir / "manifest.jsonl");
    std::string text(bytes.begin(), bytes.end());
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        if (!line.empty()) ds.labels.push_back(label_from_json_line(line));
        pos = end + 1;
    }
    if (ds.labels.empty()) throw UserError("dataset has an empty manifest: " +
                                           dataset_dir.string());
    return ds;
}

}  // namespace calica
