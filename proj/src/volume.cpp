#include "segreg/volume.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace segreg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_f64_le(const std::string& path, const std::vector<double>& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("vvol: cannot open " + path + " for writing");
    std::vector<char> buf(data.size() * 8);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(data[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xff);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("vvol: write failed for " + path);
}

std::vector<double> read_f64_le(const std::string& path, std::size_t count) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("vvol: cannot open " + path);
    std::vector<char> buf(count * 8);
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("vvol: payload " + path + " shorter than the header promises");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) {
            u |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b])) << (8 * b);
        }
        out[i] = std::bit_cast<double>(u);
    }
    return out;
}

void write_u8(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("vvol: cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!os) throw std::runtime_error("vvol: write failed for " + path);
}

std::vector<std::uint8_t> read_u8(const std::string& path, std::size_t count) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("vvol: cannot open " + path);
    std::vector<std::uint8_t> out(count);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count));
    if (!is) throw std::runtime_error("vvol: payload " + path + " shorter than the header promises");
    return out;
}

json read_header(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("vvol: cannot open " + path);
    json j;
    is >> j;
    if (j.value("format", "") != "VVOL") throw std::runtime_error("vvol: " + path + " is not a VVOL header");
    return j;
}

}  // namespace

std::size_t BinaryVolume::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : voxels) n += v != 0;
    return n;
}

BinaryVolume make_volume(int d, int h, int w, std::array<double, 3> spacing_mm) {
    BinaryVolume v;
    v.d = d;
    v.h = h;
    v.w = w;
    v.spacing_mm = spacing_mm;
    v.voxels.assign(static_cast<std::size_t>(d) * h * w, 0);
    return v;
}

void write_case_vvol(const std::string& dir, const Case& c) {
    fs::create_directories(dir);
    const std::string stem = (fs::path(dir) / c.case_id).string();
    json header = {{"format", "VVOL"},
                   {"version", 1},
                   {"case_id", c.case_id},
                   {"condition_tag", c.condition_tag},
                   {"extents", {c.d, c.h, c.w}},
                   {"spacing_mm", {c.spacing_mm[0], c.spacing_mm[1], c.spacing_mm[2]}},
                   {"class_count", c.num_classes},
                   {"image_dtype", "f64le"},
                   {"labels_dtype", "u8"}};
    std::ofstream hs(stem + ".vvol.json");
    if (!hs) throw std::runtime_error("vvol: cannot open " + stem + ".vvol.json for writing");
    hs << header.dump(2) << "\n";
    write_f64_le(stem + ".image.raw", c.image);
    write_u8(stem + ".labels.raw", c.labels);
}

Case read_case_vvol(const std::string& dir, const std::string& case_id) {
    const std::string stem = (fs::path(dir) / case_id).string();
    json header = read_header(stem + ".vvol.json");
    Case c;
    c.case_id = header.at("case_id");
    c.condition_tag = header.value("condition_tag", "");
    const auto ext = header.at("extents").get<std::vector<int>>();
    c.d = ext.at(0);
    c.h = ext.at(1);
    c.w = ext.at(2);
    const auto sp = header.at("spacing_mm").get<std::vector<double>>();
    c.spacing_mm = {sp.at(0), sp.at(1), sp.at(2)};
    c.num_classes = header.at("class_count");
    const std::size_t n = static_cast<std::size_t>(c.d) * c.h * c.w;
    c.image = read_f64_le(stem + ".image.raw", n);
    c.labels = read_u8(stem + ".labels.raw", n);
    for (std::uint8_t v : c.labels) {
        if (v > c.num_classes) throw std::runtime_error("vvol: label exceeds class count in " + stem);
    }
    return c;
}

void write_mask_vvol(const std::string& dir, const std::string& stem_name, const BinaryVolume& mask) {
    fs::create_directories(dir);
    const std::string stem = (fs::path(dir) / stem_name).string();
    json header = {{"format", "VVOL"},
                   {"version", 1},
                   {"case_id", stem_name},
                   {"extents", {mask.d, mask.h, mask.w}},
                   {"spacing_mm", {mask.spacing_mm[0], mask.spacing_mm[1], mask.spacing_mm[2]}},
                   {"class_count", 1},
                   {"labels_dtype", "u8"}};
    std::ofstream hs(stem + ".vvol.json");
    if (!hs) throw std::runtime_error("vvol: cannot open " + stem + ".vvol.json for writing");
    hs << header.dump(2) << "\n";
    write_u8(stem + ".labels.raw", mask.voxels);
}

BinaryVolume read_mask_vvol(const std::string& dir, const std::string& stem_name) {
    const std::string stem = (fs::path(dir) / stem_name).string();
    json header = read_header(stem + ".vvol.json");
    const auto ext = header.at("extents").get<std::vector<int>>();
    const auto sp = header.at("spacing_mm").get<std::vector<double>>();
    BinaryVolume v = make_volume(ext.at(0), ext.at(1), ext.at(2), {sp.at(0), sp.at(1), sp.at(2)});
    v.voxels = read_u8(stem + ".labels.raw", v.voxels.size());
    for (auto& b : v.voxels) b = b != 0;
    return v;
}

std::vector<std::string> list_vvol_cases(const std::string& dir) {
    std::vector<std::string> ids;
    const std::string suffix = ".vvol.json";
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace segreg
