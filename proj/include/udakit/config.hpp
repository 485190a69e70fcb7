#ifndef UDAKIT_CONFIG_HPP
#define UDAKIT_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "udakit/augmentation.hpp"
#include "udakit/class_map.hpp"
#include "udakit/contrastive.hpp"
#include "udakit/errors.hpp"
#include "udakit/range_image.hpp"
#include "udakit/segmentation.hpp"
#include "udakit/util.hpp"

namespace udakit {

/// Parsed `key = value` config with `[section]` headers and '#' comments.
/// Keys are addressed as "section.key". Extraction marks keys consumed so
/// unknown (misspelled) keys can be rejected afterwards.
class ConfigFile {
  public:
    static ConfigFile parse(std::istream& in, const std::string& origin = "<config>") {
        ConfigFile cfg;
        cfg.origin_ = origin;
        std::string section;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim_copy(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw ConfigError(origin + ":" + std::to_string(line_no) +
                                      ": malformed section header");
                }
                section = trim_copy(line.substr(1, line.size() - 2));
                if (section.empty()) {
                    throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
                }
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
            }
            std::string key = trim_copy(line.substr(0, eq));
            std::string value = trim_copy(line.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
            }
            cfg.set(section.empty() ? key : section + "." + key, value);
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file: " + path);
        return parse(in, path);
    }

    /// Sets or overrides a fully-qualified key, preserving first-seen order.
    void set(const std::string& full_key, const std::string& value) {
        auto it = values_.find(full_key);
        if (it == values_.end()) {
            order_.push_back(full_key);
            values_[full_key] = value;
        } else {
            it->second = value;
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::optional<std::string> get_string(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        consumed_.insert(key);
        return it->second;
    }

    std::string require_string(const std::string& key) {
        auto v = get_string(key);
        if (!v) throw ConfigError(origin_ + ": missing required key '" + key + "'");
        return *v;
    }

    template <typename T>
    std::optional<T> get_number(const std::string& key) {
        auto v = get_string(key);
        if (!v) return std::nullopt;
        std::istringstream is(*v);
        T out{};
        is >> out;
        if (is.fail() || !is.eof()) {
            throw ConfigError(origin_ + ": key '" + key + "' has invalid numeric value '" + *v +
                              "'");
        }
        return out;
    }

    std::optional<bool> get_bool(const std::string& key) {
        auto v = get_string(key);
        if (!v) return std::nullopt;
        if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
        if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
        throw ConfigError(origin_ + ": key '" + key + "' has invalid boolean value '" + *v + "'");
    }

    /// All keys of one section in file order (used for [models] priority).
    std::vector<std::pair<std::string, std::string>> section_items(const std::string& section) {
        std::vector<std::pair<std::string, std::string>> items;
        const std::string prefix = section + ".";
        for (const std::string& key : order_) {
            if (key.rfind(prefix, 0) == 0) {
                consumed_.insert(key);
                items.emplace_back(key.substr(prefix.size()), values_.at(key));
            }
        }
        return items;
    }

    /// Errors on the first key never consumed by the loader: silent typo
    /// tolerance is worse than a hard failure.
    void reject_unconsumed() const {
        for (const std::string& key : order_) {
            if (!consumed_.count(key)) {
                throw ConfigError(origin_ + ": unknown key '" + key + "'");
            }
        }
    }

    const std::string& origin() const { return origin_; }

  private:
    std::string origin_;
    std::unordered_map<std::string, std::string> values_;
    std::vector<std::string> order_;
    std::set<std::string> consumed_;
};

namespace detail {

inline Vec3 parse_extent(const std::string& value, const std::string& key) {
    std::vector<double> parts;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim_copy(item);
        std::istringstream is(item);
        double v{};
        is >> v;
        if (is.fail() || !is.eof()) {
            throw ConfigError("key '" + key + "' has invalid extent component '" + item + "'");
        }
        parts.push_back(v);
    }
    if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
    if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
    throw ConfigError("key '" + key + "' must be one value or three comma-separated values");
}

}  // namespace detail

/// Everything a pipeline run needs, loaded from one config file. Paths that
/// are present must exist (output_dir is created on demand instead).
struct RunConfig {
    // [data]
    std::string points_dir;
    std::string labels_dir;
    std::string pred_dir;
    std::string pseudo_dir;
    std::string segments_dir;
    std::string knn_input_dir;
    std::string scan_list_path;
    std::string class_map_path;
    std::string pred_class_map_path;
    std::string output_dir;

    // [models] name -> directory, file order = tie-break priority
    std::vector<std::pair<std::string, std::string>> model_dirs;

    SegmentationParams segmentation;
    AugmentationSpec augmentation;
    TrainConfig training;
    std::string init_params_path;
    int start_step = 0;

    int range_width = 1024;
    int range_height = 64;
    double range_fov_up_deg = 3.0;
    double range_fov_down_deg = -25.0;
    KnnParams knn;

    std::uint64_t rng_seed = 0;
    int workers = 1;

    static RunConfig load(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
        ConfigFile cfg = ConfigFile::load(path);
        for (const auto& [key, value] : overrides) cfg.set(key, value);
        return from_config(cfg);
    }

    static RunConfig from_config(ConfigFile& cfg) {
        RunConfig rc;
        auto path_key = [&](const std::string& key, std::string& field, bool must_exist) {
            if (auto v = cfg.get_string(key)) {
                field = *v;
                if (must_exist && !std::filesystem::exists(field)) {
                    throw ConfigError(cfg.origin() + ": key '" + key + "' references missing path '" +
                                      field + "'");
                }
            }
        };
        path_key("data.points_dir", rc.points_dir, true);
        path_key("data.labels_dir", rc.labels_dir, true);
        path_key("data.pred_dir", rc.pred_dir, true);
        path_key("data.pseudo_dir", rc.pseudo_dir, true);
        path_key("data.segments_dir", rc.segments_dir, true);
        path_key("data.knn_input_dir", rc.knn_input_dir, true);
        path_key("data.scan_list", rc.scan_list_path, true);
        path_key("data.class_map", rc.class_map_path, true);
        path_key("data.pred_class_map", rc.pred_class_map_path, true);
        path_key("data.output_dir", rc.output_dir, false);

        for (auto& [name, dir] : cfg.section_items("models")) {
            if (!std::filesystem::exists(dir)) {
                throw ConfigError(cfg.origin() + ": key 'models." + name +
                                  "' references missing path '" + dir + "'");
            }
            rc.model_dirs.emplace_back(name, dir);
        }

        auto num = [&](const std::string& key, auto& field) {
            using T = std::remove_reference_t<decltype(field)>;
            if (auto v = cfg.get_number<T>(key)) field = *v;
        };
        num("segmentation.ransac_iterations", rc.segmentation.ransac_iterations);
        num("segmentation.ransac_distance", rc.segmentation.ransac_distance);
        num("segmentation.dbscan_eps", rc.segmentation.dbscan_eps);
        num("segmentation.dbscan_min_pts", rc.segmentation.dbscan_min_pts);
        num("segmentation.top_delta", rc.segmentation.top_delta);
        num("segmentation.min_segment_points", rc.segmentation.min_segment_points);

        if (auto v = cfg.get_bool("augmentation.crop_enabled")) rc.augmentation.crop_enabled = *v;
        if (auto v = cfg.get_string("augmentation.crop_extent")) {
            rc.augmentation.crop_extent = detail::parse_extent(*v, "augmentation.crop_extent");
        }
        num("augmentation.rotation_z_range", rc.augmentation.rotation_z_range);
        num("augmentation.scale_min", rc.augmentation.scale_min);
        num("augmentation.scale_max", rc.augmentation.scale_max);
        num("augmentation.flip_prob_x", rc.augmentation.flip_prob_x);
        num("augmentation.flip_prob_y", rc.augmentation.flip_prob_y);
        num("augmentation.dropout_cuboids", rc.augmentation.dropout_cuboids);
        if (auto v = cfg.get_string("augmentation.dropout_extent")) {
            rc.augmentation.dropout_extent =
                detail::parse_extent(*v, "augmentation.dropout_extent");
        }
        num("augmentation.jitter_sigma", rc.augmentation.jitter_sigma);
        num("augmentation.jitter_clip", rc.augmentation.jitter_clip);
        num("augmentation.fine_rotation_sigma", rc.augmentation.fine_rotation_sigma);

        num("training.temperature", rc.training.temperature);
        num("training.learning_rate", rc.training.learning_rate);
        num("training.dropout_rate", rc.training.dropout_rate);
        num("training.steps", rc.training.steps);
        num("training.batch_segments", rc.training.batch_segments);
        path_key("training.init_params", rc.init_params_path, true);
        num("training.start_step", rc.start_step);

        num("range_image.width", rc.range_width);
        num("range_image.height", rc.range_height);
        num("range_image.fov_up_deg", rc.range_fov_up_deg);
        num("range_image.fov_down_deg", rc.range_fov_down_deg);
        num("knn.k", rc.knn.k);
        num("knn.window", rc.knn.window);
        num("knn.sigma", rc.knn.sigma);
        num("knn.depth_cutoff", rc.knn.depth_cutoff);

        num("run.seed", rc.rng_seed);
        num("run.workers", rc.workers);
        if (rc.workers < 1) throw ConfigError(cfg.origin() + ": run.workers must be >= 1");

        cfg.reject_unconsumed();

        rc.segmentation.rng_seed = rc.rng_seed;
        rc.augmentation.rng_seed = rc.rng_seed;
        rc.training.rng_seed = rc.rng_seed;
        return rc;
    }
};

}  // namespace udakit

#endif
