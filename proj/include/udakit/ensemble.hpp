#ifndef UDAKIT_ENSEMBLE_HPP
#define UDAKIT_ENSEMBLE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "udakit/class_map.hpp"
#include "udakit/cloud_io.hpp"
#include "udakit/errors.hpp"
#include "udakit/types.hpp"

namespace udakit {

/// Vote counts for one point. winner holds the majority label after
/// tie-breaking; tie_flag marks points where more than one label shared the
/// maximum count.
struct VoteTally {
    std::vector<std::pair<std::uint16_t, int>> counts;  // in first-seen order
    std::uint16_t winner = 0;
    bool tie_flag = false;
    int winner_votes = 0;
};

/// Tallies one point's votes. Ties are resolved to the earliest model (by
/// position in `votes`) whose prediction is among the tied labels.
inline VoteTally tally_votes(const std::vector<std::uint16_t>& votes) {
    if (votes.empty()) throw EmptyEnsemble("tally_votes: no votes");
    VoteTally tally;
    for (std::uint16_t v : votes) {
        bool found = false;
        for (auto& [label, count] : tally.counts) {
            if (label == v) {
                ++count;
                found = true;
                break;
            }
        }
        if (!found) tally.counts.emplace_back(v, 1);
    }
    int max_count = 0;
    for (const auto& [label, count] : tally.counts) max_count = std::max(max_count, count);
    int tied = 0;
    for (const auto& [label, count] : tally.counts) {
        if (count == max_count) ++tied;
    }
    tally.tie_flag = tied > 1;
    tally.winner_votes = max_count;
    for (std::uint16_t v : votes) {
        for (const auto& [label, count] : tally.counts) {
            if (label == v && count == max_count) {
                tally.winner = v;
                return tally;
            }
        }
    }
    tally.winner = votes.front();  // unreachable
    return tally;
}

struct VoteResult {
    LabelArray fused;
    std::uint64_t tie_count = 0;
};

/// Per-point hard majority vote across K models. Inputs must already share
/// one label space. Instance bits of the output are zero.
inline VoteResult hard_vote(const PredictionSet& predictions) {
    const std::size_t k = predictions.model_count();
    if (k == 0) throw EmptyEnsemble("hard_vote: no models");
    const std::size_t n = predictions.per_model_labels.front().size();
    for (std::size_t m = 1; m < k; ++m) {
        if (predictions.per_model_labels[m].size() != n) {
            throw LengthMismatch("hard_vote: model " +
                                 (m < predictions.model_names.size()
                                      ? predictions.model_names[m]
                                      : std::to_string(m)) +
                                 " has " + std::to_string(predictions.per_model_labels[m].size()) +
                                 " labels, expected " + std::to_string(n));
        }
    }
    VoteResult result;
    result.fused.values.resize(n);
    std::vector<std::uint16_t> votes(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < k; ++m) votes[m] = predictions.per_model_labels[m].semantic(i);
        VoteTally tally = tally_votes(votes);
        result.fused.values[i] = pack_label(tally.winner);
        if (tally.tie_flag) ++result.tie_count;
    }
    return result;
}

/// Batch pseudo-label fusion summary.
struct VoteSummary {
    std::size_t scans = 0;
    std::uint64_t points = 0;
    std::uint64_t ties = 0;
    // winner class -> histogram over agreement level (index v-1 = v votes).
    std::map<std::uint16_t, std::vector<std::uint64_t>> agreement;

    void merge(const VoteSummary& o) {
        scans += o.scans;
        points += o.points;
        ties += o.ties;
        for (const auto& [cls, hist] : o.agreement) {
            auto& mine = agreement[cls];
            if (mine.size() < hist.size()) mine.resize(hist.size(), 0);
            for (std::size_t i = 0; i < hist.size(); ++i) mine[i] += hist[i];
        }
    }
};

/// Fuses one scan from per-model label files: read, remap, vote, write.
inline VoteSummary fuse_scan(const std::string& scan_id,
                             const std::vector<std::pair<std::string, std::string>>& model_dirs,
                             const ClassMap& map, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (model_dirs.empty()) throw EmptyEnsemble("fuse_scan: no model directories");
    PredictionSet predictions;
    std::size_t expected = 0;
    for (const auto& [name, dir] : model_dirs) {
        fs::path path = fs::path(dir) / (scan_id + ".label");
        if (!fs::exists(path)) throw MissingPrediction(scan_id, name);
        LabelArray raw = read_labels(path.string());
        if (!predictions.per_model_labels.empty() && raw.size() != expected) {
            throw CountMismatch("scan " + scan_id + " model " + name, expected, raw.size());
        }
        expected = raw.size();
        predictions.model_names.push_back(name);
        predictions.per_model_labels.push_back(remap_labels(raw, map));
    }

    const std::size_t k = predictions.model_count();
    VoteSummary summary;
    summary.scans = 1;
    summary.points = expected;
    LabelArray fused;
    fused.values.resize(expected);
    std::vector<std::uint16_t> votes(k);
    for (std::size_t i = 0; i < expected; ++i) {
        for (std::size_t m = 0; m < k; ++m) votes[m] = predictions.per_model_labels[m].semantic(i);
        VoteTally tally = tally_votes(votes);
        fused.values[i] = pack_label(tally.winner);
        if (tally.tie_flag) ++summary.ties;
        auto& hist = summary.agreement[tally.winner];
        if (hist.size() < k) hist.resize(k, 0);
        ++hist[static_cast<std::size_t>(tally.winner_votes - 1)];
    }
    write_labels(fused, (fs::path(out_dir) / (scan_id + ".label")).string());
    return summary;
}

/// Fuses every scan in the list; per-scan work matches hard_vote exactly.
inline VoteSummary generate_pseudo_labels(
    const std::vector<std::string>& scan_list,
    const std::vector<std::pair<std::string, std::string>>& model_dirs, const ClassMap& map,
    const std::string& out_dir) {
    VoteSummary total;
    for (const std::string& scan_id : scan_list) {
        total.merge(fuse_scan(scan_id, model_dirs, map, out_dir));
    }
    return total;
}

}  // namespace udakit

#endif
