#ifndef UDAKIT_RANGE_IMAGE_HPP
#define UDAKIT_RANGE_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "udakit/errors.hpp"
#include "udakit/types.hpp"

namespace udakit {

/// Spherical projection of a scan. Each pixel keeps the nearest projected
/// point; every point records the pixel it fell into.
struct RangeImage {
    int width = 0;
    int height = 0;
    double fov_up = 0.0;    // radians
    double fov_down = 0.0;  // radians
    std::vector<double> depth;             // width*height, +inf = empty
    std::vector<std::int64_t> pixel_point; // width*height, -1 = empty
    std::vector<std::pair<int, int>> point_pixel;  // per point (row, col)

    static constexpr double kEmpty = std::numeric_limits<double>::infinity();

    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(col);
    }
    bool occupied(int row, int col) const { return pixel_point[index(row, col)] >= 0; }
};

struct KnnParams {
    int k = 5;
    int window = 5;
    double sigma = 1.0;         // pixels
    double depth_cutoff = 1.0;  // meters

    void validate() const {
        if (k < 1) throw ConfigError("knn k must be >= 1");
        if (window < 1 || window % 2 == 0) throw ConfigError("knn window must be odd and >= 1");
        if (sigma <= 0.0) throw ConfigError("knn sigma must be > 0");
        if (depth_cutoff <= 0.0) throw ConfigError("knn depth_cutoff must be > 0");
    }
};

/// col = floor((1 - (atan2(y,x)/pi + 1)/2) * width), wrapped; row follows the
/// elevation between fov_down and fov_up, clamped.
inline RangeImage project_spherical(const PointCloud& cloud, int width, int height,
                                    double fov_up, double fov_down) {
    if (width < 1 || height < 1) throw ConfigError("range image dimensions must be >= 1");
    if (!(fov_up > fov_down)) throw ConfigError("fov_up must be greater than fov_down");
    RangeImage image;
    image.width = width;
    image.height = height;
    image.fov_up = fov_up;
    image.fov_down = fov_down;
    image.depth.assign(static_cast<std::size_t>(width) * height, RangeImage::kEmpty);
    image.pixel_point.assign(static_cast<std::size_t>(width) * height, -1);
    image.point_pixel.resize(cloud.size());

    const double fov_span = fov_up - fov_down;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud[i];
        double r = p.range();
        if (r == 0.0) {
            throw ZeroRangePoint("point " + std::to_string(i) + " has zero range");
        }
        double yaw = std::atan2(p.y, p.x);
        double pitch = std::asin(std::clamp(p.z / r, -1.0, 1.0));
        std::int64_t col = static_cast<std::int64_t>(
            std::floor((1.0 - (yaw / 3.14159265358979323846 + 1.0) * 0.5) * width));
        col = ((col % width) + width) % width;
        std::int64_t row = static_cast<std::int64_t>(
            std::floor((1.0 - (pitch - fov_down) / fov_span) * height));
        row = std::clamp<std::int64_t>(row, 0, height - 1);
        image.point_pixel[i] = {static_cast<int>(row), static_cast<int>(col)};
        std::size_t px = image.index(static_cast<int>(row), static_cast<int>(col));
        if (r < image.depth[px]) {
            image.depth[px] = r;
            image.pixel_point[px] = static_cast<std::int64_t>(i);
        }
    }
    return image;
}

/// Range-image kNN label cleanup. For each point: gather the representative
/// points of the pixels in the window around its pixel (columns wrap, rows
/// clamp to the image), drop candidates whose range differs by more than
/// depth_cutoff, keep the k nearest by pixel distance, and take the
/// Gaussian-weighted mode of their labels. Points with no surviving
/// candidate keep their original label.
inline LabelArray knn_filter(const PointCloud& cloud, const LabelArray& labels,
                             const RangeImage& image, const KnnParams& params) {
    params.validate();
    if (labels.size() != cloud.size()) {
        throw LengthMismatch("knn_filter: labels do not match cloud");
    }
    if (image.point_pixel.size() != cloud.size()) {
        throw LengthMismatch("knn_filter: range image built from a different cloud");
    }
    std::vector<double> ranges(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) ranges[i] = cloud[i].range();

    LabelArray out;
    out.values.resize(cloud.size());
    const int half = params.window / 2;
    const double inv_two_sigma2 = 1.0 / (2.0 * params.sigma * params.sigma);

    struct Candidate {
        std::int64_t point;
        double dist2;  // squared pixel distance
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(params.window) * params.window);

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto [row, col] = image.point_pixel[i];
        candidates.clear();
        for (int dr = -half; dr <= half; ++dr) {
            int rr = row + dr;
            if (rr < 0 || rr >= image.height) continue;
            for (int dc = -half; dc <= half; ++dc) {
                int cc = ((col + dc) % image.width + image.width) % image.width;
                std::int64_t j = image.pixel_point[image.index(rr, cc)];
                if (j < 0) continue;
                if (std::abs(ranges[static_cast<std::size_t>(j)] - ranges[i]) >
                    params.depth_cutoff) {
                    continue;
                }
                candidates.push_back({j, static_cast<double>(dr * dr + dc * dc)});
            }
        }
        if (candidates.empty()) {
            out.values[i] = labels[i];
            continue;
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.dist2 < b.dist2; });
        if (candidates.size() > static_cast<std::size_t>(params.k)) {
            candidates.resize(static_cast<std::size_t>(params.k));
        }
        std::map<std::uint16_t, double> weights;
        for (const Candidate& c : candidates) {
            double w = std::exp(-c.dist2 * inv_two_sigma2);
            weights[labels.semantic(static_cast<std::size_t>(c.point))] += w;
        }
        std::uint16_t winner = weights.begin()->first;
        double best = weights.begin()->second;
        for (const auto& [label, w] : weights) {
            if (w > best) {  // ties keep the smaller id (map iterates ascending)
                best = w;
                winner = label;
            }
        }
        out.values[i] = pack_label(winner);
    }
    return out;
}

}  // namespace udakit

#endif
