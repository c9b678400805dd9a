#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "calica/cloud.hpp"
#include "calica/kitti_io.hpp"

using namespace calica;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("calica_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Minimal valid drive tree with n_images / n_clouds frame files.
fs::path make_drive(const TempDir& tmp, int n_images, int n_clouds) {
    fs::path date_dir = tmp.path / "2011_09_26";
    fs::path drive = date_dir / "2011_09_26_drive_0001_sync";
    fs::create_directories(drive / "image_02" / "data");
    fs::create_directories(drive / "velodyne_points" / "data");
    write_text(date_dir / "calib_cam_to_cam.txt",
               "K_02: 100.0 0. 32.0 0. 100.0 24.0 0. 0. 1.\n");
    write_text(date_dir / "calib_velo_to_cam.txt",
               "R: 1 0 0 0 1 0 0 0 1\nT: 0.1 0.2 0.3\n");
    Image img = Image::zeros(8, 8, 3);
    PointCloud cloud;
    cloud.points = {{1, 0, 0}};
    cloud.intensity = {0.5f};
    char name[16];
    for (int i = 0; i < n_images; ++i) {
        std::snprintf(name, sizeof name, "%010d.ppm", i);
        save_ppm(img, drive / "image_02" / "data" / name);
    }
    for (int i = 0; i < n_clouds; ++i) {
        std::snprintf(name, sizeof name, "%010d.bin", i);
        save_velodyne_bin(cloud, drive / "velodyne_points" / "data" / name);
    }
    return tmp.path;
}

}  // namespace

TEST_CASE("parse_cam_calib reads the K line for the configured camera") {
    std::string text =
        "K_02: 9.597910e+02 0. 6.960217e+02 0. 9.569251e+02 2.241806e+02 0. 0. 1.\n";
    CameraIntrinsics intr = parse_cam_calib(text, "02");
    CHECK(intr.f == doctest::Approx((959.791 + 956.9251) / 2.0).epsilon(1e-12));
    CHECK(intr.cx == doctest::Approx(696.0217).epsilon(1e-12));
    CHECK(intr.cy == doctest::Approx(224.1806).epsilon(1e-12));
    CHECK(intr.xi == 0.0);
}

TEST_CASE("parse_cam_calib errors") {
    CHECK_THROWS_WITH_AS(parse_cam_calib("", "02"),
                         doctest::Contains("missing key 'K_02'"), ParseError);
    CHECK_THROWS_WITH_AS(parse_cam_calib("K_02: 1 2 three 4 5 6 7 8 9\n", "02"),
                         doctest::Contains("line 1"), ParseError);
}

TEST_CASE("parse_cam_calib: duplicate key keeps the last occurrence") {
    std::string text =
        "K_02: 1. 0. 0. 0. 1. 0. 0. 0. 1.\n"
        "K_02: 100. 0. 5. 0. 200. 6. 0. 0. 1.\n";
    CameraIntrinsics intr = parse_cam_calib(text, "02");
    CHECK(intr.f == doctest::Approx(150.0));
    CHECK(intr.cx == doctest::Approx(5.0));
}

TEST_CASE("parse_usm_sidecar") {
    CHECK(parse_usm_sidecar("xi_02: 0.8\n", "02").value() == doctest::Approx(0.8));
    CHECK(parse_usm_sidecar("xi: 0.7\n", "02").value() == doctest::Approx(0.7));
    CHECK_FALSE(parse_usm_sidecar("other: 1\n", "02").has_value());
}

TEST_CASE("parse_velo_calib: identity and correction") {
    RigidTransform t = parse_velo_calib("R: 1 0 0 0 1 0 0 0 1\nT: 0 0 0\n");
    CHECK(quaternion_distance(t.q, Quat::identity()) < 1e-12);
    CHECK(t.t.norm() < 1e-12);

    // 1e-4 orthonormality drift gets polar-corrected.
    RigidTransform corrected =
        parse_velo_calib("R: 1.0001 0 0 0 1 0 0 0 1\nT: 1 2 3\n");
    Mat3 m = to_matrix(corrected.q);
    CHECK(orthonormality_drift(m) < 1e-12);

    CHECK_THROWS_AS(parse_velo_calib("R: 0 0 0 0 0 0 0 0 0\nT: 0 0 0\n"), UserError);
    CHECK_THROWS_AS(parse_velo_calib("T: 0 0 0\n"), ParseError);
    CHECK_THROWS_AS(parse_velo_calib("R: 1 0 0 0 1 0 0 0 1\n"), ParseError);
}

TEST_CASE("parse_velo_calib round-trips through its serialized form") {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        Quat q = from_euler_xyz_deg({rng.uniform(-90, 90), rng.uniform(-80, 80),
                                     rng.uniform(-90, 90)});
        Vec3 t{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        Mat3 m = to_matrix(q);
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "R: %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n"
                      "T: %.17g %.17g %.17g\n",
                      m.m[0], m.m[1], m.m[2], m.m[3], m.m[4], m.m[5], m.m[6], m.m[7],
                      m.m[8], t.x, t.y, t.z);
        RigidTransform back = parse_velo_calib(buf);
        CHECK(quaternion_distance(back.q, q) < 1e-9);
        CHECK((back.t - t).norm() < 1e-9);
    }
}

TEST_CASE("build_drive_index pairs frames and skips unmatched ones") {
    {
        TempDir tmp;
        DriveIndex index =
            build_drive_index(make_drive(tmp, 3, 3), "2011_09_26_drive_0001_sync", "02");
        CHECK(index.frames.size() == 3);
        CHECK(index.theta0.intr.f == doctest::Approx(100.0));
        CHECK(index.theta0.velo_to_cam.t.x == doctest::Approx(0.1));
        CHECK(std::is_sorted(index.frames.begin(), index.frames.end(),
                             [](const FrameRecord& a, const FrameRecord& b) {
                                 return a.frame_number < b.frame_number;
                             }));
    }
    {
        TempDir tmp;
        DriveIndex index =
            build_drive_index(make_drive(tmp, 3, 2), "2011_09_26_drive_0001_sync", "02");
        CHECK(index.frames.size() == 2);
    }
    {
        TempDir tmp;
        fs::path root = make_drive(tmp, 1, 1);
        fs::remove(root / "2011_09_26" / "calib_velo_to_cam.txt");
        CHECK_THROWS_AS(build_drive_index(root, "2011_09_26_drive_0001_sync", "02"),
                        UserError);
    }
    {
        TempDir tmp;
        fs::path root = make_drive(tmp, 0, 0);
        CHECK_THROWS_AS(build_drive_index(root, "2011_09_26_drive_0001_sync", "02"),
                        UserError);
    }
}

TEST_CASE("build_drive_index applies the USM sidecar") {
    TempDir tmp;
    fs::path root = make_drive(tmp, 1, 1);
    write_text(root / "2011_09_26" / "calib_usm.txt", "xi_02: 0.9\n");
    DriveIndex index = build_drive_index(root, "2011_09_26_drive_0001_sync", "02");
    CHECK(index.theta0.intr.xi == doctest::Approx(0.9));
}

TEST_CASE("load_image: 1x1 red pixel") {
    TempDir tmp;
    std::string ppm = "P6\n1 1\n255\n";
    std::vector<std::uint8_t> bytes(ppm.begin(), ppm.end());
    bytes.push_back(255);
    bytes.push_back(0);
    bytes.push_back(0);
    write_file_bytes(tmp.path / "px.ppm", bytes);
    Image img = load_image(tmp.path / "px.ppm");
    CHECK(img.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(img.at(0, 0, 1) == doctest::Approx(0.0));
    CHECK(img.at(0, 0, 2) == doctest::Approx(0.0));
}

TEST_CASE("load_image rejects unsupported formats naming the magic bytes") {
    TempDir tmp;
    write_file_bytes(tmp.path / "img.png", {0x89, 'P', 'N', 'G', 0x0D, 0x0A});
    try {
        load_image(tmp.path / "img.png");
        FAIL("expected UserError");
    } catch (const UserError& e) {
        std::string msg = e.what();
        CHECK(msg.find("89") != std::string::npos);
        CHECK(msg.find("PNG") != std::string::npos);
    }
}

TEST_CASE("a 2x2 image survives the PPM writer bit-exactly") {
    TempDir tmp;
    Image img = Image::zeros(2, 2, 3);
    Rng rng(3);
    for (auto& v : img.data)
        v = static_cast<float>(rng.below(256)) / 255.0f;
    save_ppm(img, tmp.path / "a.ppm");
    Image back = load_image(tmp.path / "a.ppm");
    save_ppm(back, tmp.path / "b.ppm");
    CHECK(read_file_bytes(tmp.path / "a.ppm") == read_file_bytes(tmp.path / "b.ppm"));
}

TEST_CASE("drive index JSON round trip is deterministic") {
    TempDir tmp;
    DriveIndex index =
        build_drive_index(make_drive(tmp, 2, 2), "2011_09_26_drive_0001_sync", "02");
    std::string a = drive_index_to_json(index);
    DriveIndex parsed = drive_index_from_json(a);
    CHECK(drive_index_to_json(parsed) == a);
    CHECK(parsed.frames.size() == index.frames.size());
    CHECK(quaternion_distance(parsed.theta0.velo_to_cam.q, index.theta0.velo_to_cam.q) <
          1e-12);
}

TEST_CASE("calibration JSON round trip") {
    Calibration c;
    c.intr = {140.0, 96.0, 32.0, 0.6};
    c.velo_to_cam = {from_euler_xyz_deg({1, 2, 3}), {0.4, 0.5, 0.6}};
    Calibration back = calibration_from_json(calibration_to_json(c));
    CHECK(back.intr.f == doctest::Approx(c.intr.f));
    CHECK(quaternion_distance(back.velo_to_cam.q, c.velo_to_cam.q) < 1e-12);
}
