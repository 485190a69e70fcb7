#ifndef UDAKIT_AUGMENTATION_HPP
#define UDAKIT_AUGMENTATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "udakit/errors.hpp"
#include "udakit/rng.hpp"
#include "udakit/types.hpp"

namespace udakit {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct AugmentationSpec {
    bool crop_enabled = false;
    Vec3 crop_extent{20.0, 20.0, 20.0};
    double rotation_z_range = kTwoPi;  // angle drawn uniformly from [0, range)
    double scale_min = 0.95;
    double scale_max = 1.05;
    double flip_prob_x = 0.5;
    double flip_prob_y = 0.5;
    int dropout_cuboids = 0;
    Vec3 dropout_extent{2.0, 2.0, 2.0};
    double jitter_sigma = 0.01;
    double jitter_clip = 0.05;
    double fine_rotation_sigma = 0.01;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (scale_min <= 0.0 || scale_max < scale_min) {
            throw ConfigError("scale range must satisfy 0 < scale_min <= scale_max");
        }
        for (double p : {flip_prob_x, flip_prob_y}) {
            if (p < 0.0 || p > 1.0) throw ConfigError("flip probability must be in [0, 1]");
        }
        if (jitter_clip < 0.0) throw ConfigError("jitter_clip must be >= 0");
        if (jitter_sigma < 0.0) throw ConfigError("jitter_sigma must be >= 0");
        if (rotation_z_range < 0.0) throw ConfigError("rotation_z_range must be >= 0");
        if (fine_rotation_sigma < 0.0) throw ConfigError("fine_rotation_sigma must be >= 0");
        if (dropout_cuboids < 0) throw ConfigError("dropout_cuboids must be >= 0");
    }

    /// All transforms off; apply_augmentation becomes the identity.
    static AugmentationSpec disabled() {
        AugmentationSpec s;
        s.crop_enabled = false;
        s.rotation_z_range = 0.0;
        s.scale_min = s.scale_max = 1.0;
        s.flip_prob_x = s.flip_prob_y = 0.0;
        s.dropout_cuboids = 0;
        s.jitter_sigma = 0.0;
        s.jitter_clip = 0.0;
        s.fine_rotation_sigma = 0.0;
        return s;
    }
};

/// One concrete parameter draw. Replaying it through apply_realized
/// reproduces the augmented view exactly.
struct RealizedAugmentation {
    bool cropped = false;
    Vec3 crop_center{};
    Vec3 crop_extent{};
    std::vector<std::pair<Vec3, Vec3>> dropouts;  // (center, extent)
    double rotation_z = 0.0;
    double scale = 1.0;
    bool flip_x = false;
    bool flip_y = false;
    double jitter_sigma = 0.0;
    double jitter_clip = 0.0;
    std::uint64_t jitter_seed = 0;
    Vec3 fine_angles{};  // rotations about x, y, z

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        if (cropped) {
            os << "crop center=(" << crop_center.x << "," << crop_center.y << ","
               << crop_center.z << ") extent=(" << crop_extent.x << "," << crop_extent.y << ","
               << crop_extent.z << "); ";
        }
        os << "dropouts=" << dropouts.size() << "; rot_z=" << rotation_z << "; scale=" << scale
           << "; flip_x=" << flip_x << "; flip_y=" << flip_y << "; jitter_sigma=" << jitter_sigma
           << " clip=" << jitter_clip << " seed=" << jitter_seed << "; fine=(" << fine_angles.x
           << "," << fine_angles.y << "," << fine_angles.z << ")";
        return os.str();
    }
};

namespace detail {

inline bool inside_cuboid(const Point& p, const Vec3& center, const Vec3& extent) {
    return std::abs(p.x - center.x) <= extent.x * 0.5 &&
           std::abs(p.y - center.y) <= extent.y * 0.5 &&
           std::abs(p.z - center.z) <= extent.z * 0.5;
}

inline void rotate_z_inplace(Point& p, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    double x = p.x * c - p.y * s;
    double y = p.x * s + p.y * c;
    p.x = x;
    p.y = y;
}

inline void rotate_xyz_inplace(Point& p, const Vec3& angles) {
    // Fixed composition order: X, then Y, then Z.
    double cx = std::cos(angles.x), sx = std::sin(angles.x);
    double y = p.y * cx - p.z * sx;
    double z = p.y * sx + p.z * cx;
    p.y = y;
    p.z = z;
    double cy = std::cos(angles.y), sy = std::sin(angles.y);
    double x = p.x * cy + p.z * sy;
    z = -p.x * sy + p.z * cy;
    p.x = x;
    p.z = z;
    rotate_z_inplace(p, angles.z);
}

}  // namespace detail

/// Replays a realized draw: crop -> dropout -> rotate(z) -> scale -> flip ->
/// jitter -> fine rotation. Returns the transformed cloud and the original
/// indices of surviving points.
inline std::pair<PointCloud, std::vector<std::size_t>> apply_realized(
    const PointCloud& cloud, const RealizedAugmentation& r) {
    PointCloud out;
    std::vector<std::size_t> index_map;
    out.points.reserve(cloud.size());
    index_map.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud[i];
        if (r.cropped && !detail::inside_cuboid(p, r.crop_center, r.crop_extent)) continue;
        bool dropped = false;
        for (const auto& [center, extent] : r.dropouts) {
            if (detail::inside_cuboid(p, center, extent)) {
                dropped = true;
                break;
            }
        }
        if (dropped) continue;
        out.points.push_back(p);
        index_map.push_back(i);
    }
    if (!cloud.empty() && out.empty()) {
        throw EmptyResult("augmentation removed every point");
    }

    for (Point& p : out.points) detail::rotate_z_inplace(p, r.rotation_z);
    for (Point& p : out.points) {
        p.x *= r.scale;
        p.y *= r.scale;
        p.z *= r.scale;
    }
    if (r.flip_x) {
        for (Point& p : out.points) p.x = -p.x;
    }
    if (r.flip_y) {
        for (Point& p : out.points) p.y = -p.y;
    }
    if (r.jitter_sigma > 0.0) {
        Rng jitter_rng(r.jitter_seed);
        for (Point& p : out.points) {
            for (double* coord : {&p.x, &p.y, &p.z}) {
                double d = jitter_rng.normal(0.0, r.jitter_sigma);
                d = std::clamp(d, -r.jitter_clip, r.jitter_clip);
                *coord += d;
            }
        }
    }
    if (r.fine_angles.x != 0.0 || r.fine_angles.y != 0.0 || r.fine_angles.z != 0.0) {
        for (Point& p : out.points) detail::rotate_xyz_inplace(p, r.fine_angles);
    }
    return {std::move(out), std::move(index_map)};
}

/// Draws realized parameters from the spec's seed. Crop and dropout cuboids
/// are centered on randomly chosen points, so a crop alone never empties the
/// cloud.
inline RealizedAugmentation draw_augmentation(const PointCloud& cloud,
                                              const AugmentationSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed);
    RealizedAugmentation r;
    if (spec.crop_enabled && !cloud.empty()) {
        std::size_t anchor = rng.uniform_index(cloud.size());
        r.cropped = true;
        r.crop_center = cloud[anchor].position();
        r.crop_extent = spec.crop_extent;
    }
    if (spec.dropout_cuboids > 0 && !cloud.empty()) {
        for (int k = 0; k < spec.dropout_cuboids; ++k) {
            std::size_t anchor = rng.uniform_index(cloud.size());
            r.dropouts.emplace_back(cloud[anchor].position(), spec.dropout_extent);
        }
    }
    r.rotation_z = spec.rotation_z_range > 0.0 ? rng.uniform(0.0, spec.rotation_z_range) : 0.0;
    r.scale = spec.scale_max > spec.scale_min ? rng.uniform(spec.scale_min, spec.scale_max)
                                              : spec.scale_min;
    r.flip_x = spec.flip_prob_x > 0.0 && rng.bernoulli(spec.flip_prob_x);
    r.flip_y = spec.flip_prob_y > 0.0 && rng.bernoulli(spec.flip_prob_y);
    r.jitter_sigma = spec.jitter_sigma;
    r.jitter_clip = spec.jitter_clip;
    r.jitter_seed = rng.next_u64();
    if (spec.fine_rotation_sigma > 0.0) {
        r.fine_angles = {rng.normal(0.0, spec.fine_rotation_sigma),
                         rng.normal(0.0, spec.fine_rotation_sigma),
                         rng.normal(0.0, spec.fine_rotation_sigma)};
    }
    return r;
}

inline std::pair<PointCloud, std::vector<std::size_t>> apply_augmentation(
    const PointCloud& cloud, const AugmentationSpec& spec, RealizedAugmentation* realized_out = nullptr) {
    RealizedAugmentation r = draw_augmentation(cloud, spec);
    if (realized_out) *realized_out = r;
    return apply_realized(cloud, r);
}

/// Two augmented views of one scan with per-view provenance maps.
struct ViewPair {
    PointCloud view_a, view_b;
    std::vector<std::size_t> map_a, map_b;
    RealizedAugmentation spec_a, spec_b;
};

/// Both views draw independent parameters split deterministically from one
/// seed. On EmptyResult the pair is redrawn once before the error surfaces.
inline ViewPair make_view_pair(const PointCloud& cloud, const AugmentationSpec& spec) {
    std::uint64_t state = spec.rng_seed;
    for (int attempt = 0; attempt < 2; ++attempt) {
        AugmentationSpec spec_a = spec;
        AugmentationSpec spec_b = spec;
        spec_a.rng_seed = splitmix64(state);
        spec_b.rng_seed = splitmix64(state);
        try {
            ViewPair pair;
            std::tie(pair.view_a, pair.map_a) = apply_augmentation(cloud, spec_a, &pair.spec_a);
            std::tie(pair.view_b, pair.map_b) = apply_augmentation(cloud, spec_b, &pair.spec_b);
            return pair;
        } catch (const EmptyResult&) {
            if (attempt == 1) throw;
        }
    }
    throw EmptyResult("unreachable");
}

struct PolarMixParams {
    double sector_start = 0.0;
    double sector_width = 3.14159265358979323846;
    std::set<std::uint16_t> instance_classes;
    std::vector<double> paste_rotations{1.5707963267948966, 3.141592653589793,
                                        4.71238898038469};
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (sector_width <= 0.0 || sector_width > kTwoPi) {
            throw ConfigError("sector_width must be in (0, 2*pi]");
        }
    }
};

namespace detail {

inline bool in_sector(double azimuth, double start, double width) {
    double d = std::fmod(azimuth - start, kTwoPi);
    if (d < 0.0) d += kTwoPi;
    return d < width;
}

}  // namespace detail

/// Scene-level sector swap plus instance paste: the output holds A's points
/// outside the azimuth sector, B's points inside it, and for each paste
/// rotation a rotated copy of B's instance-class points. Labels follow their
/// points.
inline std::pair<PointCloud, LabelArray> polar_mix(const PointCloud& cloud_a,
                                                   const LabelArray& labels_a,
                                                   const PointCloud& cloud_b,
                                                   const LabelArray& labels_b,
                                                   const PolarMixParams& params) {
    params.validate();
    if (cloud_a.size() != labels_a.size()) {
        throw LengthMismatch("polar_mix: scene A cloud/labels length mismatch");
    }
    if (cloud_b.size() != labels_b.size()) {
        throw LengthMismatch("polar_mix: scene B cloud/labels length mismatch");
    }
    PointCloud out_cloud;
    LabelArray out_labels;
    for (std::size_t i = 0; i < cloud_a.size(); ++i) {
        double az = std::atan2(cloud_a[i].y, cloud_a[i].x);
        if (!detail::in_sector(az, params.sector_start, params.sector_width)) {
            out_cloud.points.push_back(cloud_a[i]);
            out_labels.values.push_back(labels_a[i]);
        }
    }
    for (std::size_t i = 0; i < cloud_b.size(); ++i) {
        double az = std::atan2(cloud_b[i].y, cloud_b[i].x);
        if (detail::in_sector(az, params.sector_start, params.sector_width)) {
            out_cloud.points.push_back(cloud_b[i]);
            out_labels.values.push_back(labels_b[i]);
        }
    }
    if (!params.instance_classes.empty()) {
        for (double angle : params.paste_rotations) {
            for (std::size_t i = 0; i < cloud_b.size(); ++i) {
                if (!params.instance_classes.count(semantic_id(labels_b[i]))) continue;
                Point p = cloud_b[i];
                detail::rotate_z_inplace(p, angle);
                out_cloud.points.push_back(p);
                out_labels.values.push_back(labels_b[i]);
            }
        }
    }
    return {std::move(out_cloud), std::move(out_labels)};
}

}  // namespace udakit

#endif
