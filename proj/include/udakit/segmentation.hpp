#ifndef UDAKIT_SEGMENTATION_HPP
#define UDAKIT_SEGMENTATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "udakit/cloud_io.hpp"
#include "udakit/errors.hpp"
#include "udakit/rng.hpp"
#include "udakit/types.hpp"

namespace udakit {

/// Plane normal·p + offset = 0 with unit normal oriented so normal.z >= 0.
struct PlaneModel {
    Vec3 normal{0.0, 0.0, 1.0};
    double offset = 0.0;
    std::size_t inlier_count = 0;

    double distance(const Point& p) const {
        return std::abs(normal.dot(p.position()) + offset);
    }
};

struct SegmentationParams {
    int ransac_iterations = 100;
    double ransac_distance = 0.25;
    double dbscan_eps = 0.5;
    int dbscan_min_pts = 10;
    int top_delta = 50;
    int min_segment_points = 20;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (ransac_iterations < 1) throw ConfigError("ransac_iterations must be >= 1");
        if (ransac_distance <= 0.0) throw ConfigError("ransac_distance must be > 0");
        if (dbscan_eps <= 0.0) throw ConfigError("dbscan_eps must be > 0");
        if (dbscan_min_pts < 1) throw ConfigError("dbscan_min_pts must be >= 1");
        if (top_delta < 1) throw ConfigError("top_delta must be >= 1");
        if (min_segment_points < 1) throw ConfigError("min_segment_points must be >= 1");
    }
};

/// Per-point tags: GROUND, NOISE, or a dense segment id ordered by
/// descending size. The tag values double as the on-disk encoding.
struct SegmentAssignment {
    static constexpr std::uint32_t kNoise = 0xFFFFFFFFu;
    static constexpr std::uint32_t kGround = 0xFFFFFFFEu;

    std::vector<std::uint32_t> tags;
    std::vector<std::size_t> segment_sizes;

    std::size_t size() const { return tags.size(); }
    std::size_t segment_count() const { return segment_sizes.size(); }
    bool is_segment(std::size_t i) const { return tags[i] < kGround; }
};

// Raw DBSCAN output: cluster id per point, or kDbscanNoise.
inline constexpr std::int32_t kDbscanNoise = -1;

inline PlaneModel ransac_ground_fit(const PointCloud& cloud, const SegmentationParams& params) {
    params.validate();
    const std::size_t n = cloud.size();
    if (n < 3) {
        throw DegenerateInput("ransac_ground_fit needs at least 3 points, got " +
                              std::to_string(n));
    }
    Rng rng(params.rng_seed);
    PlaneModel best;
    bool found = false;
    for (int it = 0; it < params.ransac_iterations; ++it) {
        std::size_t ia = rng.uniform_index(n);
        std::size_t ib = rng.uniform_index(n);
        std::size_t ic = rng.uniform_index(n);
        if (ia == ib || ib == ic || ia == ic) continue;
        Vec3 a = cloud[ia].position();
        Vec3 b = cloud[ib].position();
        Vec3 c = cloud[ic].position();
        Vec3 normal = (b - a).cross(c - a);
        double len = normal.norm();
        if (len < 1e-12) continue;  // collinear triple
        normal = normal * (1.0 / len);
        double offset = -normal.dot(a);
        if (normal.z < 0.0) {
            normal = normal * -1.0;
            offset = -offset;
        }
        std::size_t inliers = 0;
        for (const Point& p : cloud.points) {
            if (std::abs(normal.dot(p.position()) + offset) <= params.ransac_distance) ++inliers;
        }
        if (!found || inliers > best.inlier_count) {
            best = PlaneModel{normal, offset, inliers};
            found = true;
        }
    }
    if (!found) throw DegenerateInput("all sampled point triples were collinear");
    return best;
}

/// Keeps points farther than `distance` from the plane. The index map gives
/// each kept point's original index, strictly increasing.
inline std::pair<PointCloud, std::vector<std::size_t>> remove_ground(const PointCloud& cloud,
                                                                     const PlaneModel& plane,
                                                                     double distance) {
    PointCloud kept;
    std::vector<std::size_t> index_map;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (plane.distance(cloud[i]) > distance) {
            kept.points.push_back(cloud[i]);
            index_map.push_back(i);
        }
    }
    return {std::move(kept), std::move(index_map)};
}

namespace detail {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (std::uint64_t v : {static_cast<std::uint64_t>(k.x), static_cast<std::uint64_t>(k.y),
                                static_cast<std::uint64_t>(k.z)}) {
            h ^= v;
            h *= 0x100000001b3ull;
        }
        return static_cast<std::size_t>(h);
    }
};

inline CellKey cell_of(const Point& p, double eps) {
    return {static_cast<std::int64_t>(std::floor(p.x / eps)),
            static_cast<std::int64_t>(std::floor(p.y / eps)),
            static_cast<std::int64_t>(std::floor(p.z / eps))};
}

}  // namespace detail

/// Classical DBSCAN on 3D Euclidean distance, accelerated by a uniform voxel
/// grid of cell size eps. Border points join the first core cluster that
/// reaches them in scan order (outer loop by index, FIFO expansion, neighbor
/// lists sorted by index), so the result is identical to the O(N^2)
/// definition evaluated in the same order.
inline std::vector<std::int32_t> dbscan_cluster(const PointCloud& cloud, double eps, int min_pts) {
    if (eps <= 0.0) throw ConfigError("dbscan eps must be > 0");
    if (min_pts < 1) throw ConfigError("dbscan min_pts must be >= 1");
    const std::size_t n = cloud.size();
    std::vector<std::int32_t> labels(n, -2);  // -2 = unclassified
    if (n == 0) return labels;

    std::unordered_map<detail::CellKey, std::vector<std::uint32_t>, detail::CellKeyHash> grid;
    grid.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[detail::cell_of(cloud[i], eps)].push_back(static_cast<std::uint32_t>(i));
    }

    const double eps2 = eps * eps;
    auto neighbors = [&](std::size_t i) {
        std::vector<std::uint32_t> out;
        const Point& p = cloud[i];
        detail::CellKey c = detail::cell_of(p, eps);
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == grid.end()) continue;
                    for (std::uint32_t j : it->second) {
                        double ddx = cloud[j].x - p.x;
                        double ddy = cloud[j].y - p.y;
                        double ddz = cloud[j].z - p.z;
                        if (ddx * ddx + ddy * ddy + ddz * ddz <= eps2) out.push_back(j);
                    }
                }
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    };

    std::int32_t next_cluster = 0;
    std::deque<std::uint32_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != -2) continue;
        auto nb = neighbors(i);
        if (nb.size() < static_cast<std::size_t>(min_pts)) {
            labels[i] = kDbscanNoise;
            continue;
        }
        const std::int32_t cid = next_cluster++;
        labels[i] = cid;
        queue.assign(nb.begin(), nb.end());
        while (!queue.empty()) {
            std::uint32_t q = queue.front();
            queue.pop_front();
            if (labels[q] == kDbscanNoise) labels[q] = cid;  // border point claimed
            if (labels[q] != -2) continue;
            labels[q] = cid;
            auto qnb = neighbors(q);
            if (qnb.size() >= static_cast<std::size_t>(min_pts)) {
                queue.insert(queue.end(), qnb.begin(), qnb.end());
            }
        }
    }
    return labels;
}

/// Drops clusters below min_segment_points, keeps the top_delta largest of
/// the rest (ties by smallest member index), and renumbers them 0..S-1 by
/// descending size. Everything else becomes NOISE.
inline SegmentAssignment filter_segments(const std::vector<std::int32_t>& raw,
                                         const SegmentationParams& params) {
    params.validate();
    std::int32_t max_id = -1;
    for (std::int32_t id : raw) max_id = std::max(max_id, id);

    struct ClusterInfo {
        std::size_t size = 0;
        std::size_t first_index = 0;
        std::int32_t id = 0;
    };
    std::vector<ClusterInfo> clusters(static_cast<std::size_t>(max_id + 1));
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] < 0) continue;
        ClusterInfo& info = clusters[static_cast<std::size_t>(raw[i])];
        if (info.size == 0) info.first_index = i;
        info.id = raw[i];
        ++info.size;
    }

    std::vector<ClusterInfo> eligible;
    for (const ClusterInfo& info : clusters) {
        if (info.size >= static_cast<std::size_t>(params.min_segment_points)) {
            eligible.push_back(info);
        }
    }
    std::sort(eligible.begin(), eligible.end(), [](const ClusterInfo& a, const ClusterInfo& b) {
        if (a.size != b.size) return a.size > b.size;
        return a.first_index < b.first_index;
    });
    if (eligible.size() > static_cast<std::size_t>(params.top_delta)) {
        eligible.resize(static_cast<std::size_t>(params.top_delta));
    }

    std::vector<std::uint32_t> renumber(static_cast<std::size_t>(max_id + 1),
                                        SegmentAssignment::kNoise);
    SegmentAssignment out;
    out.segment_sizes.reserve(eligible.size());
    for (std::size_t k = 0; k < eligible.size(); ++k) {
        renumber[static_cast<std::size_t>(eligible[k].id)] = static_cast<std::uint32_t>(k);
        out.segment_sizes.push_back(eligible[k].size);
    }
    out.tags.resize(raw.size(), SegmentAssignment::kNoise);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] >= 0) out.tags[i] = renumber[static_cast<std::size_t>(raw[i])];
    }
    return out;
}

/// Full pipeline: RANSAC ground fit, ground removal, DBSCAN on the remainder,
/// size filtering. Ground points are tagged GROUND in the full-length output.
inline SegmentAssignment segment_scan(const PointCloud& cloud, const SegmentationParams& params) {
    PlaneModel plane = ransac_ground_fit(cloud, params);
    auto [subcloud, index_map] = remove_ground(cloud, plane, params.ransac_distance);
    auto raw = dbscan_cluster(subcloud, params.dbscan_eps, params.dbscan_min_pts);
    SegmentAssignment filtered = filter_segments(raw, params);

    SegmentAssignment out;
    out.segment_sizes = std::move(filtered.segment_sizes);
    out.tags.assign(cloud.size(), SegmentAssignment::kGround);
    for (std::size_t j = 0; j < index_map.size(); ++j) {
        out.tags[index_map[j]] = filtered.tags[j];
    }
    return out;
}

/// On-disk form: one uint32 per point; 0xFFFFFFFF = NOISE, 0xFFFFFFFE =
/// GROUND, anything else a segment id.
inline void write_segment_assignment(const SegmentAssignment& assignment,
                                     const std::string& path) {
    detail::write_u32_file(path, assignment.tags);
}

inline SegmentAssignment read_segment_assignment(const std::string& path) {
    SegmentAssignment out;
    out.tags = detail::read_u32_file(path);
    std::uint32_t max_id = 0;
    bool any = false;
    for (std::uint32_t t : out.tags) {
        if (t < SegmentAssignment::kGround) {
            max_id = std::max(max_id, t);
            any = true;
        }
    }
    if (any) {
        out.segment_sizes.assign(max_id + 1, 0);
        for (std::uint32_t t : out.tags) {
            if (t < SegmentAssignment::kGround) ++out.segment_sizes[t];
        }
        for (std::size_t k = 0; k < out.segment_sizes.size(); ++k) {
            if (out.segment_sizes[k] == 0) {
                throw FormatError(path + ": segment ids not dense, id " + std::to_string(k) +
                                  " has no members");
            }
        }
    }
    return out;
}

}  // namespace udakit

#endif
