#include "calica/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace calica {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UserError("short write: " + path.string());
}

namespace {

// PPM token reader: whitespace-separated decimal fields, '#' comments.
struct PpmCursor {
    const std::vector<std::uint8_t>& b;
    size_t pos = 0;

    int next_int() {
        skip();
        if (pos >= b.size()) throw ParseError("malformed PPM: truncated header");
        int v = 0;
        bool any = false;
        while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
            v = v * 10 + (b[pos] - '0');
            if (v > 1 << 24) throw ParseError("malformed PPM: field too large");
            ++pos;
            any = true;
        }
        if (!any) throw ParseError("malformed PPM: expected integer at byte " +
                                   std::to_string(pos));
        return v;
    }

    void skip() {
        while (pos < b.size()) {
            std::uint8_t c = b[pos];
            if (c == '#') {
                while (pos < b.size() && b[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }
};

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw ParseError("not a P6 PPM (bad magic)");
    PpmCursor cur{bytes, 2};
    int w = cur.next_int();
    int h = cur.next_int();
    int maxval = cur.next_int();
    if (w <= 0 || h <= 0) throw ParseError("malformed PPM: non-positive dimensions");
    if (maxval != 255)
        throw ParseError("unsupported PPM maxval " + std::to_string(maxval) +
                         " (only 8-bit, 255, is supported)");
    if (cur.pos >= bytes.size()) throw ParseError("malformed PPM: missing pixel data");
    ++cur.pos;  // single whitespace byte after maxval
    size_t need = static_cast<size_t>(w) * h * 3;
    if (bytes.size() - cur.pos < need)
        throw ParseError("malformed PPM: truncated pixel data (need " +
                         std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - cur.pos) + ")");
    Image img = Image::zeros(w, h, 3);
    for (size_t i = 0; i < need; ++i)
        img.data[i] = static_cast<float>(bytes[cur.pos + i]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
    if (img.channels != 3) throw UserError("encode_ppm expects a 3-channel image");
    std::string header = "P6\n" + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.data.size());
    for (float v : img.data) {
        float c = std::clamp(v, 0.0f, 1.0f);
        out.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
    }
    return out;
}

Image load_ppm(const std::filesystem::path& path) {
    return decode_ppm(read_file_bytes(path));
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
    write_file_bytes(path, encode_ppm(img));
}

Image grayscale(const Image& img) {
    if (img.channels == 1) return img;
    Image g = Image::zeros(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            g.at(y, x, 0) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) +
                            0.114f * img.at(y, x, 2);
    return g;
}

float bilinear_sample(const Image& img, double x, double y, int c) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double fx = x - x0;
    double fy = y - y0;
    double v00 = img.at(y0, x0, c), v01 = img.at(y0, x1, c);
    double v10 = img.at(y1, x0, c), v11 = img.at(y1, x1, c);
    double top = v00 + (v01 - v00) * fx;
    double bot = v10 + (v11 - v10) * fx;
    return static_cast<float>(top + (bot - top) * fy);
}

Image resize_bilinear(const Image& img, int new_w, int new_h) {
    if (new_w <= 0 || new_h <= 0) throw UserError("resize to non-positive size");
    double sx = static_cast<double>(img.width) / new_w;
    double sy = static_cast<double>(img.height) / new_h;
    if (std::abs(sx - sy) > 0.02 * std::max(sx, sy))
        throw UserError("resize requires a uniform scale (single-f camera model); got " +
                        std::to_string(sx) + " x vs " + std::to_string(sy) + " y");
    Image out = Image::zeros(new_w, new_h, img.channels);
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = bilinear_sample(img, (x + 0.5) * sx - 0.5,
                                                  (y + 0.5) * sy - 0.5, c);
    return out;
}

}  // namespace calica
