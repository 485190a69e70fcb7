#ifndef UDAKIT_EVALUATION_HPP
#define UDAKIT_EVALUATION_HPP

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "udakit/class_map.hpp"
#include "udakit/cloud_io.hpp"
#include "udakit/errors.hpp"
#include "udakit/types.hpp"

namespace udakit {

/// C x C confusion counts (row = ground truth, column = prediction) with one
/// extra column for predictions that remap to the ignore id. Points whose
/// ground truth remaps to ignore are excluded entirely. 64-bit counters:
/// full-dataset accumulation overflows 32 bits.
class ConfusionMatrix {
  public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t num_classes)
        : num_classes_(num_classes), counts_(num_classes * (num_classes + 1), 0) {}

    std::size_t num_classes() const { return num_classes_; }

    std::uint64_t at(std::size_t truth, std::size_t pred) const {
        return counts_[truth * (num_classes_ + 1) + pred];
    }

    std::uint64_t ignored_predictions(std::size_t truth) const {
        return counts_[truth * (num_classes_ + 1) + num_classes_];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t v : counts_) t += v;
        return t;
    }

    /// Tallies one remapped truth/pred pair of label arrays.
    void accumulate_remapped(const LabelArray& truth, const LabelArray& pred,
                             std::uint16_t ignore_id) {
        if (truth.size() != pred.size()) {
            throw LengthMismatch("accumulate_confusion: truth has " +
                                 std::to_string(truth.size()) + " labels, prediction " +
                                 std::to_string(pred.size()));
        }
        for (std::size_t i = 0; i < truth.size(); ++i) {
            std::uint16_t t = truth.semantic(i);
            if (t == ignore_id) continue;
            if (t >= num_classes_) throw UnmappedClass(t, i);
            std::uint16_t p = pred.semantic(i);
            std::size_t col;
            if (p == ignore_id) {
                col = num_classes_;
            } else if (p >= num_classes_) {
                throw UnmappedClass(p, i);
            } else {
                col = p;
            }
            ++counts_[t * (num_classes_ + 1) + col];
        }
    }

    /// Remaps both sides through their own maps, then tallies.
    void accumulate(const LabelArray& truth, const LabelArray& pred, const ClassMap& truth_map,
                    const ClassMap& pred_map) {
        accumulate_remapped(remap_labels(truth, truth_map), remap_labels(pred, pred_map),
                            truth_map.ignore_id);
    }

    /// Single-map form: both sides share one taxonomy.
    void accumulate(const LabelArray& truth, const LabelArray& pred, const ClassMap& map) {
        accumulate(truth, pred, map, map);
    }

    /// Elementwise addition; commutative and associative.
    void merge(const ConfusionMatrix& o) {
        if (o.num_classes_ != num_classes_) {
            throw LengthMismatch("ConfusionMatrix::merge: class count mismatch");
        }
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    }

    /// TP/(TP+FP+FN); empty when the class has zero union.
    std::optional<double> class_iou(std::size_t c) const {
        std::uint64_t tp = at(c, c);
        std::uint64_t fp = 0, fn = 0;
        for (std::size_t t = 0; t < num_classes_; ++t) {
            if (t != c) fp += at(t, c);
        }
        for (std::size_t p = 0; p <= num_classes_; ++p) {
            if (p != c) fn += counts_[c * (num_classes_ + 1) + p];
        }
        std::uint64_t denom = tp + fp + fn;
        if (denom == 0) return std::nullopt;
        return static_cast<double>(tp) / static_cast<double>(denom);
    }

    /// Mean over classes with defined IoU.
    double mean_iou() const {
        double sum = 0.0;
        std::size_t defined = 0;
        for (std::size_t c = 0; c < num_classes_; ++c) {
            if (auto iou = class_iou(c)) {
                sum += *iou;
                ++defined;
            }
        }
        if (defined == 0) throw NoDefinedClasses("mean_iou: every class has zero union");
        return sum / static_cast<double>(defined);
    }

    /// Pointwise accuracy: trace / total.
    double overall_accuracy() const {
        std::uint64_t t = total();
        if (t == 0) throw EmptyMatrix("overall_accuracy: no accumulated points");
        std::uint64_t diag = 0;
        for (std::size_t c = 0; c < num_classes_; ++c) diag += at(c, c);
        return static_cast<double>(diag) / static_cast<double>(t);
    }

    /// Macro-averaged per-class accuracy (recall), over classes with truth
    /// support. Reported alongside overall accuracy; the two differ.
    double mean_class_accuracy() const {
        double sum = 0.0;
        std::size_t defined = 0;
        for (std::size_t c = 0; c < num_classes_; ++c) {
            std::uint64_t row = 0;
            for (std::size_t p = 0; p <= num_classes_; ++p) {
                row += counts_[c * (num_classes_ + 1) + p];
            }
            if (row == 0) continue;
            sum += static_cast<double>(at(c, c)) / static_cast<double>(row);
            ++defined;
        }
        if (defined == 0) throw EmptyMatrix("mean_class_accuracy: no accumulated points");
        return sum / static_cast<double>(defined);
    }

    std::string to_csv(const ClassMap& map) const {
        std::ostringstream os;
        os << "truth\\pred";
        for (std::size_t p = 0; p < num_classes_; ++p) {
            os << "," << map.class_name(static_cast<std::uint16_t>(p));
        }
        os << ",ignored\n";
        for (std::size_t t = 0; t < num_classes_; ++t) {
            os << map.class_name(static_cast<std::uint16_t>(t));
            for (std::size_t p = 0; p <= num_classes_; ++p) {
                os << "," << counts_[t * (num_classes_ + 1) + p];
            }
            os << "\n";
        }
        return os.str();
    }

  private:
    std::size_t num_classes_ = 0;
    std::vector<std::uint64_t> counts_;
};

struct EvalReport {
    std::vector<std::optional<double>> per_class_iou;
    double iou_avg = 0.0;
    double acc_avg = 0.0;
    double mean_class_acc = 0.0;
    std::size_t scans = 0;
    ConfusionMatrix matrix;
    std::vector<std::string> class_names;
};

inline EvalReport make_report(const ConfusionMatrix& matrix, const ClassMap& map,
                              std::size_t scans) {
    EvalReport report;
    report.matrix = matrix;
    report.scans = scans;
    for (std::size_t c = 0; c < matrix.num_classes(); ++c) {
        report.per_class_iou.push_back(matrix.class_iou(c));
        report.class_names.push_back(map.class_name(static_cast<std::uint16_t>(c)));
    }
    report.iou_avg = matrix.mean_iou();
    report.acc_avg = matrix.overall_accuracy();
    report.mean_class_acc = matrix.mean_class_accuracy();
    return report;
}

/// Accumulates truth/prediction label files over a scan list and computes
/// the metrics. Truth and prediction sides may use different maps (e.g. raw
/// dataset ids vs already-fused target-space labels).
inline EvalReport eval_report(const std::string& truth_dir, const std::string& pred_dir,
                              const std::vector<std::string>& scan_list,
                              const ClassMap& truth_map, const ClassMap& pred_map) {
    namespace fs = std::filesystem;
    ConfusionMatrix matrix(truth_map.num_classes());
    for (const std::string& scan_id : scan_list) {
        fs::path truth_path = fs::path(truth_dir) / (scan_id + ".label");
        fs::path pred_path = fs::path(pred_dir) / (scan_id + ".label");
        if (!fs::exists(truth_path)) throw MissingFile("missing truth file: " + truth_path.string());
        if (!fs::exists(pred_path)) throw MissingFile("missing prediction file: " + pred_path.string());
        LabelArray truth = read_labels(truth_path.string());
        LabelArray pred = read_labels(pred_path.string());
        if (truth.size() != pred.size()) {
            throw LengthMismatch("scan " + scan_id + ": truth has " + std::to_string(truth.size()) +
                                 " labels, prediction " + std::to_string(pred.size()));
        }
        matrix.accumulate(truth, pred, truth_map, pred_map);
    }
    return make_report(matrix, truth_map, scan_list.size());
}

inline EvalReport eval_report(const std::string& truth_dir, const std::string& pred_dir,
                              const std::vector<std::string>& scan_list, const ClassMap& map) {
    return eval_report(truth_dir, pred_dir, scan_list, map, map);
}

/// Aligned text table: class columns first, then the averages.
inline std::string format_report_text(const EvalReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    std::size_t width = 9;
    for (const std::string& name : report.class_names) width = std::max(width, name.size() + 2);
    os << std::setw(12) << "metric";
    for (const std::string& name : report.class_names) {
        os << std::setw(static_cast<int>(width)) << name;
    }
    os << std::setw(static_cast<int>(width)) << "IoU avg"
       << std::setw(static_cast<int>(width)) << "Acc avg" << "\n";
    os << std::setw(12) << "IoU";
    for (const auto& iou : report.per_class_iou) {
        if (iou) {
            os << std::setw(static_cast<int>(width)) << *iou;
        } else {
            os << std::setw(static_cast<int>(width)) << "n/a";
        }
    }
    os << std::setw(static_cast<int>(width)) << report.iou_avg
       << std::setw(static_cast<int>(width)) << report.acc_avg << "\n";
    os << "scans: " << report.scans << "  points: " << report.matrix.total()
       << "  mean class accuracy: " << report.mean_class_acc << "\n";
    return os.str();
}

inline std::string format_report_csv(const EvalReport& report) {
    std::ostringstream os;
    os.precision(10);
    os << "metric";
    for (const std::string& name : report.class_names) os << "," << name;
    os << ",iou_avg,acc_avg,mean_class_acc\n";
    os << "iou";
    for (const auto& iou : report.per_class_iou) {
        os << ",";
        if (iou) os << *iou;
    }
    os << "," << report.iou_avg << "," << report.acc_avg << "," << report.mean_class_acc << "\n";
    return os.str();
}

}  // namespace udakit

#endif
