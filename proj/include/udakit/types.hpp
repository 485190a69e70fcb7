#ifndef UDAKIT_TYPES_HPP
#define UDAKIT_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace udakit {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
};

/// One LiDAR return. Coordinates are held as doubles so downstream geometry
/// and training math run at 64-bit precision; the on-disk format is float32.
struct Point {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double remission = 0.0;

    Vec3 position() const { return {x, y, z}; }
    double range() const { return std::sqrt(x * x + y * y + z * z); }
};

struct PointCloud {
    std::vector<Point> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    Point& operator[](std::size_t i) { return points[i]; }
    const Point& operator[](std::size_t i) const { return points[i]; }
};

// Packed label: low 16 bits semantic class id, high 16 bits instance id.
using PackedLabel = std::uint32_t;

constexpr std::uint16_t semantic_id(PackedLabel v) {
    return static_cast<std::uint16_t>(v & 0xFFFFu);
}

constexpr std::uint16_t instance_id(PackedLabel v) {
    return static_cast<std::uint16_t>(v >> 16);
}

constexpr PackedLabel pack_label(std::uint16_t semantic, std::uint16_t instance = 0) {
    return static_cast<PackedLabel>(semantic) | (static_cast<PackedLabel>(instance) << 16);
}

struct LabelArray {
    std::vector<PackedLabel> values;

    LabelArray() = default;
    explicit LabelArray(std::vector<PackedLabel> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    PackedLabel operator[](std::size_t i) const { return values[i]; }
    PackedLabel& operator[](std::size_t i) { return values[i]; }
    std::uint16_t semantic(std::size_t i) const { return semantic_id(values[i]); }
    std::uint16_t instance(std::size_t i) const { return instance_id(values[i]); }

    bool operator==(const LabelArray& o) const { return values == o.values; }
};

}  // namespace udakit

#endif
