#ifndef UDAKIT_CLI_HPP
#define UDAKIT_CLI_HPP

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "udakit/cloud_io.hpp"
#include "udakit/config.hpp"
#include "udakit/contrastive.hpp"
#include "udakit/ensemble.hpp"
#include "udakit/evaluation.hpp"
#include "udakit/range_image.hpp"
#include "udakit/segmentation.hpp"
#include "udakit/util.hpp"

namespace udakit::cli {

namespace fs = std::filesystem;

struct Options {
    std::string subcommand;
    std::string config_path;
    bool dry_run = false;
    bool skip_bad = false;
    std::vector<std::pair<std::string, std::string>> overrides;
};

inline const char* kUsage =
    "usage: uda-kit <segment|pretrain|vote|finetune|eval|knn> --config <path>\n"
    "               [--seed N] [--workers N] [--dry-run] [--skip-bad] [key=value ...]\n"
    "\n"
    "subcommands:\n"
    "  segment   RANSAC ground removal + DBSCAN clustering per scan\n"
    "  pretrain  segment-level contrastive pre-training of the toy encoder\n"
    "  vote      multi-model hard-vote pseudo-label fusion\n"
    "  finetune  cross-entropy fine-tuning on pseudo-labels\n"
    "  eval      per-class IoU / accuracy report\n"
    "  knn       range-image kNN label post-processing\n";

namespace detail {

inline Options parse_args(const std::vector<std::string>& args) {
    Options opt;
    if (args.empty()) throw ConfigError("missing subcommand");
    opt.subcommand = args[0];
    const std::set<std::string> known = {"segment", "pretrain", "vote", "finetune", "eval", "knn"};
    if (!known.count(opt.subcommand)) {
        throw ConfigError("unknown subcommand '" + opt.subcommand + "'");
    }
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& arg = args[i];
        auto value_of = [&](const std::string& flag) {
            if (i + 1 >= args.size()) throw ConfigError(flag + " requires a value");
            return args[++i];
        };
        if (arg == "--config") {
            opt.config_path = value_of(arg);
        } else if (arg == "--seed") {
            opt.overrides.emplace_back("run.seed", value_of(arg));
        } else if (arg == "--workers") {
            opt.overrides.emplace_back("run.workers", value_of(arg));
        } else if (arg == "--dry-run") {
            opt.dry_run = true;
        } else if (arg == "--skip-bad") {
            opt.skip_bad = true;
        } else if (arg.rfind("--", 0) == 0) {
            throw ConfigError("unknown flag '" + arg + "'");
        } else {
            auto eq = arg.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("expected key=value override, got '" + arg + "'");
            }
            opt.overrides.emplace_back(trim_copy(arg.substr(0, eq)),
                                       trim_copy(arg.substr(eq + 1)));
        }
    }
    if (opt.config_path.empty()) throw ConfigError("--config is required");
    return opt;
}

inline void require_key(const std::string& value, const std::string& key,
                        const std::string& subcommand) {
    if (value.empty()) {
        throw ConfigError(subcommand + " requires config key '" + key + "'");
    }
}

inline std::vector<std::string> load_scan_list(const RunConfig& rc,
                                               const std::string& subcommand) {
    require_key(rc.scan_list_path, "data.scan_list", subcommand);
    auto scans = read_scan_list(rc.scan_list_path);
    if (scans.empty()) throw ConfigError("empty scan list: " + rc.scan_list_path);
    return scans;
}

inline void require_scan_files(const std::vector<std::string>& scans, const std::string& dir,
                               const std::string& extension) {
    for (const std::string& scan : scans) {
        fs::path p = fs::path(dir) / (scan + extension);
        if (!fs::exists(p)) throw MissingFile("missing input file: " + p.string());
    }
}

inline void ensure_output_dir(const RunConfig& rc, const std::string& subcommand) {
    require_key(rc.output_dir, "data.output_dir", subcommand);
    fs::create_directories(rc.output_dir);
}

inline std::string loss_csv(const std::vector<double>& losses, int start_step) {
    std::ostringstream os;
    os.precision(17);
    os << "step,loss\n";
    for (std::size_t t = 0; t < losses.size(); ++t) {
        os << start_step + static_cast<int>(t) << ",";
        if (std::isnan(losses[t])) {
            os << "nan";
        } else {
            os << losses[t];
        }
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------

inline int cmd_segment(const RunConfig& rc, const Options& opt, std::ostream& out) {
    auto scans = load_scan_list(rc, "segment");
    require_key(rc.points_dir, "data.points_dir", "segment");
    require_scan_files(scans, rc.points_dir, ".bin");
    if (opt.dry_run) {
        out << "dry run ok: segment over " << scans.size() << " scans\n";
        return 0;
    }
    ensure_output_dir(rc, "segment");

    std::mutex mutex;
    std::map<std::size_t, std::size_t> histogram;  // segment count -> scans
    std::uint64_t total_points = 0, total_segments = 0;
    std::size_t skipped = 0;
    parallel_for(scans.size(), rc.workers, [&](std::size_t i) {
        PointCloud cloud = read_point_cloud((fs::path(rc.points_dir) / (scans[i] + ".bin")).string());
        SegmentationParams params = rc.segmentation;
        params.rng_seed = derive_seed(rc.rng_seed, i);
        SegmentAssignment assignment;
        try {
            assignment = segment_scan(cloud, params);
        } catch (const DegenerateInput& e) {
            if (!opt.skip_bad) {
                throw DegenerateInput("scan " + scans[i] + ": " + e.what());
            }
            std::lock_guard<std::mutex> lock(mutex);
            ++skipped;
            return;
        }
        write_segment_assignment(assignment, (fs::path(rc.output_dir) / (scans[i] + ".seg")).string());
        std::lock_guard<std::mutex> lock(mutex);
        ++histogram[assignment.segment_count()];
        total_points += cloud.size();
        total_segments += assignment.segment_count();
    });

    std::ostringstream summary;
    summary << "scans: " << scans.size() - skipped << "\n";
    summary << "skipped: " << skipped << "\n";
    summary << "total points: " << total_points << "\n";
    summary << "total segments: " << total_segments << "\n";
    summary << "segments per scan histogram:\n";
    for (const auto& [count, num] : histogram) {
        summary << "  " << count << ": " << num << "\n";
    }
    write_text_file((fs::path(rc.output_dir) / "segment_summary.txt").string(), summary.str());
    out << summary.str();
    return 0;
}

inline int cmd_vote(const RunConfig& rc, const Options& opt, std::ostream& out) {
    auto scans = load_scan_list(rc, "vote");
    require_key(rc.class_map_path, "data.class_map", "vote");
    if (rc.model_dirs.empty()) throw EmptyEnsemble("vote requires at least one [models] entry");
    ClassMap map = ClassMap::load(rc.class_map_path);
    for (const auto& [name, dir] : rc.model_dirs) {
        for (const std::string& scan : scans) {
            if (!fs::exists(fs::path(dir) / (scan + ".label"))) {
                throw MissingPrediction(scan, name);
            }
        }
    }
    if (opt.dry_run) {
        out << "dry run ok: vote over " << scans.size() << " scans, " << rc.model_dirs.size()
            << " models\n";
        return 0;
    }
    ensure_output_dir(rc, "vote");

    std::mutex mutex;
    VoteSummary total;
    parallel_for(scans.size(), rc.workers, [&](std::size_t i) {
        VoteSummary one = fuse_scan(scans[i], rc.model_dirs, map, rc.output_dir);
        std::lock_guard<std::mutex> lock(mutex);
        total.merge(one);
    });

    std::ostringstream summary;
    summary << "scans: " << total.scans << "  points: " << total.points << "  ties: "
            << total.ties << "\n";
    summary << "vote agreement histogram (class: votes -> points):\n";
    std::ostringstream csv;
    csv << "class,votes,points\n";
    for (const auto& [cls, hist] : total.agreement) {
        summary << "  " << map.class_name(cls) << ":";
        for (std::size_t v = 0; v < hist.size(); ++v) {
            if (hist[v] == 0) continue;
            summary << " " << (v + 1) << "->" << hist[v];
            csv << map.class_name(cls) << "," << (v + 1) << "," << hist[v] << "\n";
        }
        summary << "\n";
    }
    write_text_file((fs::path(rc.output_dir) / "vote_summary.txt").string(), summary.str());
    write_text_file((fs::path(rc.output_dir) / "vote_summary.csv").string(), csv.str());
    out << summary.str();
    return 0;
}

inline int cmd_eval(const RunConfig& rc, const Options& opt, std::ostream& out) {
    auto scans = load_scan_list(rc, "eval");
    require_key(rc.labels_dir, "data.labels_dir", "eval");
    require_key(rc.pred_dir, "data.pred_dir", "eval");
    require_key(rc.class_map_path, "data.class_map", "eval");
    ClassMap truth_map = ClassMap::load(rc.class_map_path);
    ClassMap pred_map = rc.pred_class_map_path.empty() ? truth_map
                                                       : ClassMap::load(rc.pred_class_map_path);
    require_scan_files(scans, rc.labels_dir, ".label");
    require_scan_files(scans, rc.pred_dir, ".label");
    if (opt.dry_run) {
        out << "dry run ok: eval over " << scans.size() << " scans\n";
        return 0;
    }
    EvalReport report = eval_report(rc.labels_dir, rc.pred_dir, scans, truth_map, pred_map);
    out << format_report_text(report);
    if (!rc.output_dir.empty()) {
        ensure_output_dir(rc, "eval");
        write_text_file((fs::path(rc.output_dir) / "eval_report.csv").string(),
                        format_report_csv(report));
        write_text_file((fs::path(rc.output_dir) / "confusion.csv").string(),
                        report.matrix.to_csv(truth_map));
    }
    return 0;
}

/// Loads clouds plus segment assignments, computing assignments on the fly
/// when no segments_dir is configured (seeded identically to cmd_segment).
inline std::vector<PretrainScan> load_pretrain_scans(const RunConfig& rc,
                                                     const std::vector<std::string>& scans,
                                                     bool skip_bad, std::ostream& err) {
    std::vector<PretrainScan> loaded;
    for (std::size_t i = 0; i < scans.size(); ++i) {
        PretrainScan scan;
        scan.cloud = read_point_cloud((fs::path(rc.points_dir) / (scans[i] + ".bin")).string());
        if (!rc.segments_dir.empty()) {
            scan.assignment = read_segment_assignment(
                (fs::path(rc.segments_dir) / (scans[i] + ".seg")).string());
            if (scan.assignment.size() != scan.cloud.size()) {
                throw CountMismatch("scan " + scans[i] + " segment assignment",
                                    scan.cloud.size(), scan.assignment.size());
            }
        } else {
            SegmentationParams params = rc.segmentation;
            params.rng_seed = derive_seed(rc.rng_seed, i);
            try {
                scan.assignment = segment_scan(scan.cloud, params);
            } catch (const DegenerateInput& e) {
                if (!skip_bad) throw DegenerateInput("scan " + scans[i] + ": " + e.what());
                err << "skipping scan " << scans[i] << ": " << e.what() << "\n";
                continue;
            }
        }
        if (scan.assignment.segment_count() < 2) {
            if (!skip_bad) {
                throw InsufficientBatch("scan " + scans[i] +
                                        " has fewer than 2 segments; cannot form positive pairs");
            }
            err << "skipping scan " << scans[i] << ": fewer than 2 segments\n";
            continue;
        }
        loaded.push_back(std::move(scan));
    }
    if (loaded.empty()) throw ConfigError("no usable scans for pre-training");
    return loaded;
}

inline int cmd_pretrain(const RunConfig& rc, const Options& opt, std::ostream& out,
                        std::ostream& err) {
    auto scans = load_scan_list(rc, "pretrain");
    require_key(rc.points_dir, "data.points_dir", "pretrain");
    require_scan_files(scans, rc.points_dir, ".bin");
    if (!rc.segments_dir.empty()) require_scan_files(scans, rc.segments_dir, ".seg");
    if (opt.dry_run) {
        out << "dry run ok: pretrain over " << scans.size() << " scans, " << rc.training.steps
            << " steps\n";
        return 0;
    }
    ensure_output_dir(rc, "pretrain");

    auto loaded = load_pretrain_scans(rc, scans, opt.skip_bad, err);
    EncoderParams params = rc.init_params_path.empty()
                               ? EncoderParams::random_init(derive_seed(rc.rng_seed, 0xE0C0DE))
                               : load_encoder_params(rc.init_params_path);
    std::vector<double> losses =
        run_pretraining(loaded, params, rc.augmentation, rc.training, rc.start_step, opt.skip_bad);

    save_encoder_params(params, (fs::path(rc.output_dir) / "encoder.params").string());
    write_text_file((fs::path(rc.output_dir) / "pretrain_loss.csv").string(),
                    loss_csv(losses, rc.start_step));
    if (!losses.empty()) {
        out << "pretrain: " << losses.size() << " steps, first loss " << losses.front()
            << ", last loss " << losses.back() << "\n";
    }
    out << "wrote " << (fs::path(rc.output_dir) / "encoder.params").string() << "\n";
    return 0;
}

inline int cmd_finetune(const RunConfig& rc, const Options& opt, std::ostream& out,
                        std::ostream& err) {
    auto scans = load_scan_list(rc, "finetune");
    require_key(rc.points_dir, "data.points_dir", "finetune");
    require_key(rc.pseudo_dir, "data.pseudo_dir", "finetune");
    require_key(rc.class_map_path, "data.class_map", "finetune");
    require_scan_files(scans, rc.points_dir, ".bin");
    require_scan_files(scans, rc.pseudo_dir, ".label");
    ClassMap map = ClassMap::load(rc.class_map_path);
    if (map.num_classes() == 0) throw ConfigError("class map declares no classes");
    if (opt.dry_run) {
        out << "dry run ok: finetune over " << scans.size() << " scans, " << rc.training.steps
            << " steps, " << map.num_classes() << " classes\n";
        return 0;
    }
    ensure_output_dir(rc, "finetune");

    std::vector<FinetuneScan> loaded;
    for (const std::string& scan_id : scans) {
        FinetuneScan scan;
        scan.cloud = read_point_cloud((fs::path(rc.points_dir) / (scan_id + ".bin")).string());
        scan.labels = read_labels((fs::path(rc.pseudo_dir) / (scan_id + ".label")).string(),
                                  scan.cloud.size());
        bool any_supervised = false;
        for (std::size_t i = 0; i < scan.labels.size() && !any_supervised; ++i) {
            any_supervised = scan.labels.semantic(i) != map.ignore_id;
        }
        if (!any_supervised) {
            if (!opt.skip_bad) throw AllIgnored("scan " + scan_id + " has no supervised points");
            err << "skipping scan " << scan_id << ": all points ignored\n";
            continue;
        }
        loaded.push_back(std::move(scan));
    }
    if (loaded.empty()) throw ConfigError("no usable scans for fine-tuning");

    EncoderParams params = rc.init_params_path.empty()
                               ? EncoderParams::random_init(derive_seed(rc.rng_seed, 0xE0C0DE))
                               : load_encoder_params(rc.init_params_path);
    ClassifierParams classifier =
        ClassifierParams::random_init(map.num_classes(), derive_seed(rc.rng_seed, 0xC1A55));
    std::vector<double> losses = run_finetuning(loaded, params, classifier, rc.training,
                                                map.ignore_id, rc.start_step, opt.skip_bad);

    save_encoder_params(params, (fs::path(rc.output_dir) / "encoder_finetuned.params").string());
    save_classifier_params(classifier, (fs::path(rc.output_dir) / "classifier.params").string());
    write_text_file((fs::path(rc.output_dir) / "finetune_loss.csv").string(),
                    loss_csv(losses, rc.start_step));
    if (!losses.empty()) {
        out << "finetune: " << losses.size() << " steps, first loss " << losses.front()
            << ", last loss " << losses.back() << "\n";
    }
    return 0;
}

inline int cmd_knn(const RunConfig& rc, const Options& opt, std::ostream& out) {
    auto scans = load_scan_list(rc, "knn");
    require_key(rc.points_dir, "data.points_dir", "knn");
    require_key(rc.knn_input_dir, "data.knn_input_dir", "knn");
    require_scan_files(scans, rc.points_dir, ".bin");
    require_scan_files(scans, rc.knn_input_dir, ".label");
    rc.knn.validate();
    if (opt.dry_run) {
        out << "dry run ok: knn over " << scans.size() << " scans\n";
        return 0;
    }
    ensure_output_dir(rc, "knn");

    const double deg = 3.14159265358979323846 / 180.0;
    parallel_for(scans.size(), rc.workers, [&](std::size_t i) {
        PointCloud cloud = read_point_cloud((fs::path(rc.points_dir) / (scans[i] + ".bin")).string());
        LabelArray labels = read_labels((fs::path(rc.knn_input_dir) / (scans[i] + ".label")).string(),
                                        cloud.size());
        RangeImage image = project_spherical(cloud, rc.range_width, rc.range_height,
                                             rc.range_fov_up_deg * deg, rc.range_fov_down_deg * deg);
        LabelArray filtered = knn_filter(cloud, labels, image, rc.knn);
        write_labels(filtered, (fs::path(rc.output_dir) / (scans[i] + ".label")).string());
    });
    out << "filtered " << scans.size() << " scans\n";
    return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (!args.empty() && (args[0] == "--help" || args[0] == "-h" || args[0] == "help")) {
        out << kUsage;
        return 0;
    }
    try {
        Options opt = detail::parse_args(args);
        RunConfig rc = RunConfig::load(opt.config_path, opt.overrides);
        if (opt.subcommand == "segment") return detail::cmd_segment(rc, opt, out);
        if (opt.subcommand == "vote") return detail::cmd_vote(rc, opt, out);
        if (opt.subcommand == "eval") return detail::cmd_eval(rc, opt, out);
        if (opt.subcommand == "pretrain") return detail::cmd_pretrain(rc, opt, out, err);
        if (opt.subcommand == "finetune") return detail::cmd_finetune(rc, opt, out, err);
        if (opt.subcommand == "knn") return detail::cmd_knn(rc, opt, out);
        err << "error: unknown subcommand '" << opt.subcommand << "'\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace udakit::cli

#endif
