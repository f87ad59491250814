#pragma once

#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "antnet/detect.hpp"
#include "antnet/model.hpp"

namespace antnet {

// File formats. All integers are little-endian.
//   ATF  : magic "ATF1", u8 dtype (0 = binary32, 1 = binary64), u8 ndim (4),
//          four u64 dims (N,C,H,W), raw values row-major.
//   ANTW : magic "ANTW", u32 version, u32 entry count, then per entry a u16
//          name length, the UTF-8 name, and an ATF-format tensor.

namespace io_detail {

template <typename U>
void put_le(std::ostream& os, U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
    unsigned char buf[sizeof(U)];
    is.read(reinterpret_cast<char*>(buf), sizeof(U));
    if (!is) throw ParseError("unexpected end of file", 0);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

template <typename T>
void put_scalar(std::ostream& os, T v) {
    if constexpr (sizeof(T) == 4) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le(os, bits);
    } else {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_le(os, bits);
    }
}

template <typename T>
T get_scalar(std::istream& is) {
    T v;
    if constexpr (sizeof(T) == 4) {
        const std::uint32_t bits = get_le<std::uint32_t>(is);
        std::memcpy(&v, &bits, 4);
    } else {
        const std::uint64_t bits = get_le<std::uint64_t>(is);
        std::memcpy(&v, &bits, 8);
    }
    return v;
}

template <typename T>
constexpr std::uint8_t dtype_code() {
    return sizeof(T) == 4 ? 0 : 1;
}

}  // namespace io_detail

template <typename T>
void write_atf(std::ostream& os, const std::array<i64, 4>& dims, const T* data, i64 count) {
    using namespace io_detail;
    os.write("ATF1", 4);
    put_le<std::uint8_t>(os, dtype_code<T>());
    put_le<std::uint8_t>(os, 4);
    for (const i64 d : dims) put_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    for (i64 i = 0; i < count; ++i) put_scalar(os, data[i]);
}

template <typename T>
void write_atf(const std::string& path, const Tensor4<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("cannot open '" + path + "' for writing", 0);
    write_atf(os, {t.n, t.c, t.h, t.w}, t.data.data(), t.numel());
}

struct AtfHeader {
    std::uint8_t dtype = 0;
    std::array<i64, 4> dims{};
};

inline AtfHeader read_atf_header(std::istream& is) {
    using namespace io_detail;
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ATF1", 4) != 0) throw ParseError("bad ATF magic", 0);
    AtfHeader h;
    h.dtype = get_le<std::uint8_t>(is);
    if (h.dtype > 1) throw ParseError("bad ATF dtype code", 0);
    const std::uint8_t ndim = get_le<std::uint8_t>(is);
    if (ndim != 4) throw ParseError("ATF ndim must be 4", 0);
    for (auto& d : h.dims) d = static_cast<i64>(get_le<std::uint64_t>(is));
    return h;
}

/// Reads an ATF tensor; values stored at the other precision are converted.
template <typename T>
Tensor4<T> read_atf(std::istream& is) {
    using namespace io_detail;
    const AtfHeader h = read_atf_header(is);
    Tensor4<T> t(h.dims[0], h.dims[1], h.dims[2], h.dims[3]);
    for (auto& v : t.data) {
        v = h.dtype == 0 ? static_cast<T>(get_scalar<float>(is)) : static_cast<T>(get_scalar<double>(is));
    }
    return t;
}

template <typename T>
Tensor4<T> read_atf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open '" + path + "'", 0);
    return read_atf<T>(is);
}

// ---------------------------------------------------------------------------
// ANTW weight container. The entry set is exactly the model's learnable
// parameter manifest; loading fails (listing names) on any mismatch.
// ---------------------------------------------------------------------------
template <typename T>
void save_weights(const std::string& path, Model<T>& model) {
    using namespace io_detail;
    std::vector<std::pair<std::string, TensorView<T>>> entries;
    model.visit_params([&entries](const std::string& name, TensorView<T> v) {
        entries.emplace_back(name, v);
    });
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("cannot open '" + path + "' for writing", 0);
    os.write("ANTW", 4);
    put_le<std::uint32_t>(os, 1);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, view] : entries) {
        put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_atf(os, view.dims, view.ptr, view.size);
    }
}

template <typename T>
void load_weights(const std::string& path, Model<T>& model) {
    using namespace io_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open '" + path + "'", 0);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ANTW", 4) != 0) throw ParseError("bad ANTW magic", 0);
    const std::uint32_t version = get_le<std::uint32_t>(is);
    if (version != 1) throw ParseError("unsupported ANTW version", 0);
    const std::uint32_t count = get_le<std::uint32_t>(is);

    std::map<std::string, std::pair<std::array<i64, 4>, std::vector<T>>> entries;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t len = get_le<std::uint16_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw ParseError("truncated ANTW entry name", 0);
        if (entries.count(name)) throw ManifestError("duplicate weight entry '" + name + "'");
        const AtfHeader h = read_atf_header(is);
        i64 n = 1;
        for (const i64 d : h.dims) n *= d;
        std::vector<T> data(static_cast<std::size_t>(n));
        for (auto& v : data)
            v = h.dtype == 0 ? static_cast<T>(get_scalar<float>(is)) : static_cast<T>(get_scalar<double>(is));
        entries[name] = {h.dims, std::move(data)};
    }

    std::vector<std::string> missing, wrong_shape;
    std::set<std::string> used;
    model.visit_params([&](const std::string& name, TensorView<T> view) {
        const auto it = entries.find(name);
        if (it == entries.end()) {
            missing.push_back(name);
            return;
        }
        used.insert(name);
        if (it->second.first != view.dims) {
            wrong_shape.push_back(name);
            return;
        }
        std::copy(it->second.second.begin(), it->second.second.end(), view.ptr);
    });
    std::vector<std::string> extra;
    for (const auto& [name, _] : entries)
        if (!used.count(name)) extra.push_back(name);

    if (!missing.empty() || !extra.empty() || !wrong_shape.empty()) {
        std::ostringstream os;
        os << "weight container does not match graph manifest;";
        auto emit = [&os](const char* label, const std::vector<std::string>& names) {
            if (names.empty()) return;
            os << " " << label << ":";
            for (const auto& n : names) os << " " << n;
        };
        emit("missing", missing);
        emit("extra", extra);
        emit("wrong-shape", wrong_shape);
        throw ManifestError(os.str());
    }
}

// ---------------------------------------------------------------------------
// Binary PPM (P6), maxval 255. Converted to binary32 by value/255,
// channel-planar.
// ---------------------------------------------------------------------------
inline Tensor4<float> read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open '" + path + "'", 0);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw ParseError("expected P6 PPM", 1);
    auto next_int = [&is]() {
        // skip whitespace and '#' comments
        for (;;) {
            const int ch = is.peek();
            if (ch == '#') {
                std::string dummy;
                std::getline(is, dummy);
            } else if (std::isspace(ch)) {
                is.get();
            } else {
                break;
            }
        }
        i64 v;
        if (!(is >> v)) throw ParseError("bad PPM header", 0);
        return v;
    };
    const i64 w = next_int();
    const i64 h = next_int();
    const i64 maxval = next_int();
    if (maxval != 255) throw ParseError("PPM maxval must be 255", 0);
    is.get();  // single whitespace before raster
    std::vector<unsigned char> raster(static_cast<std::size_t>(w * h * 3));
    is.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (!is) throw ParseError("truncated PPM raster", 0);
    Tensor4<float> t(1, 3, h, w);
    for (i64 iy = 0; iy < h; ++iy)
        for (i64 ix = 0; ix < w; ++ix)
            for (i64 ic = 0; ic < 3; ++ic)
                t.at(0, ic, iy, ix) =
                    static_cast<float>(raster[static_cast<std::size_t>((iy * w + ix) * 3 + ic)]) / 255.0f;
    return t;
}

// ---------------------------------------------------------------------------
// Detection / ground-truth text: one box per line,
//   image_id class_id x1 y1 x2 y2 [score]
// (score present only for detections).
// ---------------------------------------------------------------------------
inline std::vector<GroundTruthBox> read_ground_truth(std::istream& is) {
    std::vector<GroundTruthBox> out;
    std::string line;
    i64 lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        GroundTruthBox g;
        if (!(ls >> g.image >> g.class_id >> g.x1 >> g.y1 >> g.x2 >> g.y2))
            throw ParseError("bad ground-truth record", lineno);
        std::string extra;
        if (ls >> extra) throw ParseError("trailing fields in ground-truth record", lineno);
        if (g.class_id < 0 || g.x2 <= g.x1 || g.y2 <= g.y1)
            throw ParseError("ground-truth box must have positive area and class_id >= 0", lineno);
        out.push_back(g);
    }
    return out;
}

inline std::vector<DetectionBox> read_detections(std::istream& is) {
    std::vector<DetectionBox> out;
    std::string line;
    i64 lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        DetectionBox d;
        if (!(ls >> d.image >> d.class_id >> d.x1 >> d.y1 >> d.x2 >> d.y2 >> d.score))
            throw ParseError("bad detection record", lineno);
        std::string extra;
        if (ls >> extra) throw ParseError("trailing fields in detection record", lineno);
        if (d.class_id < 0 || d.x2 <= d.x1 || d.y2 <= d.y1 || d.score < 0.0 || d.score > 1.0)
            throw ParseError("detection needs positive area, class_id >= 0, score in [0,1]", lineno);
        out.push_back(d);
    }
    return out;
}

inline std::vector<GroundTruthBox> read_ground_truth(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open '" + path + "'", 0);
    return read_ground_truth(is);
}

inline std::vector<DetectionBox> read_detections(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open '" + path + "'", 0);
    return read_detections(is);
}

inline void write_detections(std::ostream& os, const std::vector<DetectionBox>& dets) {
    char buf[256];
    for (const auto& d : dets) {
        std::snprintf(buf, sizeof buf, "%s %d %.4f %.4f %.4f %.4f %.6f\n", d.image.c_str(), d.class_id,
                      d.x1, d.y1, d.x2, d.y2, d.score);
        os << buf;
    }
}

}  // namespace antnet
