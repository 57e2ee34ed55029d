#include "vdt/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vdt::io {

namespace fs = std::filesystem;

void save_npy(const std::string& path, const Tensor& t) {
    std::ostringstream header;
    header << "{'descr': '<f8', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < t.ndim(); ++i) {
        header << t.shape()[i];
        if (t.ndim() == 1 || i + 1 < t.ndim()) header << ",";
        if (i + 1 < t.ndim()) header << " ";
    }
    header << "), }";
    std::string h = header.str();
    // pad so that magic(6)+version(2)+len(2)+header is a multiple of 64
    size_t unpadded = 10 + h.size() + 1;
    size_t pad = (64 - unpadded % 64) % 64;
    h.append(pad, ' ');
    h.push_back('\n');

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("save_npy: cannot open " + tmp);
        const char magic[] = "\x93NUMPY";
        f.write(magic, 6);
        f.put(1).put(0);
        uint16_t hlen = static_cast<uint16_t>(h.size());
        f.write(reinterpret_cast<const char*>(&hlen), 2);
        f.write(h.data(), static_cast<std::streamsize>(h.size()));
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!f) throw DataError("save_npy: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

Tensor load_npy(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_npy: cannot open " + path);
    char magic[6];
    f.read(magic, 6);
    if (std::memcmp(magic, "\x93NUMPY", 6) != 0) throw DataError("load_npy: bad magic in " + path);
    char ver[2];
    f.read(ver, 2);
    uint32_t hlen = 0;
    if (ver[0] == 1) {
        uint16_t l;
        f.read(reinterpret_cast<char*>(&l), 2);
        hlen = l;
    } else {
        f.read(reinterpret_cast<char*>(&hlen), 4);
    }
    std::string header(hlen, '\0');
    f.read(header.data(), hlen);
    if (header.find("'<f8'") == std::string::npos)
        throw DataError("load_npy: only float64 supported (" + path + ")");
    if (header.find("'fortran_order': False") == std::string::npos)
        throw DataError("load_npy: only C order supported (" + path + ")");
    size_t lp = header.find('(');
    size_t rp = header.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos)
        throw DataError("load_npy: malformed shape in " + path);
    std::vector<int64_t> shape;
    std::string body = header.substr(lp + 1, rp - lp - 1);
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string s;
        for (char c : tok)
            if (!isspace(static_cast<unsigned char>(c))) s += c;
        if (!s.empty()) shape.push_back(std::stoll(s));
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw DataError("load_npy: truncated data in " + path);
    return t;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("write_text_atomic: cannot open " + tmp);
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    fs::rename(tmp, path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_text: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_json_atomic(const std::string& path, const json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

json read_json(const std::string& path) { return json::parse(read_text(path)); }

void save_array_with_manifest(const std::string& base, const Tensor& t, json extra) {
    save_npy(base + ".npy", t);
    json m = std::move(extra);
    m["dtype"] = "float64";
    m["shape"] = t.shape();
    write_json_atomic(base + ".json", m);
}

Tensor load_array_checked(const std::string& base, json* manifest_out) {
    Tensor t = load_npy(base + ".npy");
    json m = read_json(base + ".json");
    std::vector<int64_t> shape = m.at("shape").get<std::vector<int64_t>>();
    if (shape != t.shape()) throw DataError("manifest/array shape mismatch at " + base);
    if (manifest_out) *manifest_out = std::move(m);
    return t;
}

void write_ppm(const std::string& path, const Tensor& frame) {
    if (frame.ndim() != 3 || frame.dim(2) != 3) throw DimError("write_ppm: expect [H,W,3]");
    const int64_t H = frame.dim(0), W = frame.dim(1);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("write_ppm: cannot open " + path);
    f << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                double v = (frame.at(y, x, c) + 1.0) * 0.5;
                v = std::clamp(v, 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(v * 255.0 + 0.5);
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

bool file_exists(const std::string& path) { return fs::exists(path); }

void ensure_dir(const std::string& path) { fs::create_directories(path); }

}  // namespace vdt::io
