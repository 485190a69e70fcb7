#ifndef UDAKIT_CLOUD_IO_HPP
#define UDAKIT_CLOUD_IO_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "udakit/class_map.hpp"
#include "udakit/errors.hpp"
#include "udakit/types.hpp"

namespace udakit {

namespace detail {

inline std::uint32_t load_le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_le32(unsigned char* p, std::uint32_t v) {
    p[0] = static_cast<unsigned char>(v & 0xFF);
    p[1] = static_cast<unsigned char>((v >> 8) & 0xFF);
    p[2] = static_cast<unsigned char>((v >> 16) & 0xFF);
    p[3] = static_cast<unsigned char>((v >> 24) & 0xFF);
}

inline std::uint64_t load_le64(const unsigned char* p) {
    return static_cast<std::uint64_t>(load_le32(p)) |
           (static_cast<std::uint64_t>(load_le32(p + 4)) << 32);
}

inline void store_le64(unsigned char* p, std::uint64_t v) {
    store_le32(p, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
    store_le32(p + 4, static_cast<std::uint32_t>(v >> 32));
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    auto size = in.tellg();
    if (size < 0) throw IoError("cannot determine size of file: " + path);
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("failed reading file: " + path);
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path);
    if (!bytes.empty()) out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    if (!out) throw IoError("failed writing file: " + path);
}

inline std::vector<std::uint32_t> read_u32_file(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() % 4 != 0) {
        throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of 4");
    }
    std::vector<std::uint32_t> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = load_le32(bytes.data() + i * 4);
    }
    return values;
}

inline void write_u32_file(const std::string& path, const std::vector<std::uint32_t>& values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        store_le32(bytes.data() + i * 4, values[i]);
    }
    write_file_bytes(path, bytes);
}

}  // namespace detail

/// Reads a scan stored as consecutive little-endian float32 records
/// (x, y, z, remission), 16 bytes per point.
inline PointCloud read_point_cloud(const std::string& path) {
    auto bytes = detail::read_file_bytes(path);
    if (bytes.size() % 16 != 0) {
        throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of 16");
    }
    PointCloud cloud;
    cloud.points.resize(bytes.size() / 16);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const unsigned char* rec = bytes.data() + i * 16;
        float f[4];
        for (int k = 0; k < 4; ++k) {
            f[k] = std::bit_cast<float>(detail::load_le32(rec + k * 4));
        }
        if (!std::isfinite(f[0]) || !std::isfinite(f[1]) || !std::isfinite(f[2]) ||
            !std::isfinite(f[3])) {
            throw FormatError(path + ": non-finite value at point " + std::to_string(i));
        }
        cloud.points[i] = Point{f[0], f[1], f[2], f[3]};
    }
    return cloud;
}

/// Writes a scan in the same binary layout. Coordinates are narrowed to
/// float32; clouds read from disk round-trip byte-exactly.
inline void write_point_cloud(const PointCloud& cloud, const std::string& path) {
    std::vector<unsigned char> bytes(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud[i];
        const float f[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                            static_cast<float>(p.z), static_cast<float>(p.remission)};
        for (int k = 0; k < 4; ++k) {
            detail::store_le32(bytes.data() + i * 16 + k * 4, std::bit_cast<std::uint32_t>(f[k]));
        }
    }
    detail::write_file_bytes(path, bytes);
}

/// Reads packed labels (little-endian uint32 per point).
inline LabelArray read_labels(const std::string& path,
                              std::optional<std::size_t> expected_count = std::nullopt) {
    LabelArray labels(detail::read_u32_file(path));
    if (expected_count && labels.size() != *expected_count) {
        throw CountMismatch(path, *expected_count, labels.size());
    }
    return labels;
}

inline void write_labels(const LabelArray& labels, const std::string& path) {
    detail::write_u32_file(path, labels.values);
}

/// Replaces semantic ids per the map, preserving instance bits. Ids equal to
/// the map's ignore id pass through unchanged; anything else outside the map
/// domain raises UnmappedClass.
inline LabelArray remap_labels(const LabelArray& labels, const ClassMap& map) {
    LabelArray out;
    out.values.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::uint16_t sem = labels.semantic(i);
        auto it = map.entries.find(sem);
        std::uint16_t target;
        if (it != map.entries.end()) {
            target = it->second;
        } else if (sem == map.ignore_id) {
            target = sem;
        } else {
            throw UnmappedClass(sem, i);
        }
        out.values[i] = pack_label(target, labels.instance(i));
    }
    return out;
}

/// K per-model predictions over one scan; model_names order is the ensemble
/// tie-break priority.
struct PredictionSet {
    std::vector<std::string> model_names;
    std::vector<LabelArray> per_model_labels;

    std::size_t model_count() const { return per_model_labels.size(); }
};

}  // namespace udakit

#endif
