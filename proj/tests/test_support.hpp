#ifndef UDAKIT_TEST_SUPPORT_HPP
#define UDAKIT_TEST_SUPPORT_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "udakit/rng.hpp"
#include "udakit/types.hpp"

// Oracles and generators used by the test suites. Everything here is
// independent of the library implementation paths it checks: clustering,
// tallying, and differentiation are all done the slow, obvious way.

namespace testsupport {

using udakit::LabelArray;
using udakit::Point;
using udakit::PointCloud;
using udakit::Rng;

/// Temporary directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        namespace fs = std::filesystem;
        path_ = fs::temp_directory_path() /
                ("udakit_test_" + tag + "_" + std::to_string(counter_++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path path() const { return path_; }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }
    std::string subdir(const std::string& name) const {
        auto p = path_ / name;
        std::filesystem::create_directories(p);
        return p.string();
    }

  private:
    std::filesystem::path path_;
    static inline int counter_ = 0;
};

/// Random cloud with float32-representable coordinates (round-trip safe).
inline PointCloud random_cloud(Rng& rng, std::size_t count, double extent = 10.0) {
    PointCloud cloud;
    cloud.points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        cloud.points.push_back(Point{static_cast<float>(rng.uniform(-extent, extent)),
                                     static_cast<float>(rng.uniform(-extent, extent)),
                                     static_cast<float>(rng.uniform(-extent, extent)),
                                     static_cast<float>(rng.uniform())});
    }
    return cloud;
}

/// Reference DBSCAN: O(N^2) neighbor search, same deterministic expansion
/// order as the spec (index-ordered outer loop, FIFO queue, ascending
/// neighbor lists).
inline std::vector<std::int32_t> brute_force_dbscan(const PointCloud& cloud, double eps,
                                                    int min_pts) {
    const std::size_t n = cloud.size();
    std::vector<std::int32_t> labels(n, -2);
    const double eps2 = eps * eps;
    auto neighbors = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j) {
            double dx = cloud[j].x - cloud[i].x;
            double dy = cloud[j].y - cloud[i].y;
            double dz = cloud[j].z - cloud[i].z;
            if (dx * dx + dy * dy + dz * dz <= eps2) out.push_back(j);
        }
        return out;
    };
    std::int32_t next = 0;
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != -2) continue;
        auto nb = neighbors(i);
        if (nb.size() < static_cast<std::size_t>(min_pts)) {
            labels[i] = -1;
            continue;
        }
        std::int32_t cid = next++;
        labels[i] = cid;
        queue.assign(nb.begin(), nb.end());
        std::size_t head = 0;
        while (head < queue.size()) {
            std::size_t q = queue[head++];
            if (labels[q] == -1) labels[q] = cid;
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

/// Canonical partition form: sorted member sets, ignoring cluster ids.
inline std::set<std::vector<std::size_t>> partition_of(const std::vector<std::int32_t>& labels) {
    std::int32_t max_id = -1;
    for (auto l : labels) max_id = std::max(max_id, l);
    std::vector<std::vector<std::size_t>> clusters(static_cast<std::size_t>(max_id + 1));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) clusters[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    std::set<std::vector<std::size_t>> out;
    for (auto& c : clusters) {
        if (!c.empty()) out.insert(c);
    }
    return out;
}

inline std::set<std::size_t> noise_of(const std::vector<std::int32_t>& labels) {
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == -1) out.insert(i);
    }
    return out;
}

/// Central finite difference of a scalar function of a parameter vector.
inline std::vector<double> finite_difference(std::vector<double>& params,
                                             const std::function<double()>& eval,
                                             double h = 1e-5) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = params[i];
        params[i] = saved + h;
        double up = eval();
        params[i] = saved - h;
        double down = eval();
        params[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// Max relative error between analytic and numeric gradients; entries where
/// both are tiny are skipped.
inline double max_relative_error(const std::vector<double>& analytic,
                                 const std::vector<double>& numeric, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double denom = std::max(std::abs(analytic[i]) + std::abs(numeric[i]), floor);
        double err = std::abs(analytic[i] - numeric[i]) / denom;
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace testsupport

#endif
