#ifndef UDAKIT_ENCODER_HPP
#define UDAKIT_ENCODER_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "udakit/cloud_io.hpp"
#include "udakit/errors.hpp"
#include "udakit/rng.hpp"
#include "udakit/types.hpp"

namespace udakit {

// Per-point MLP 4 -> 32 -> 32 (ReLU), projection head 1 32 -> 32,
// projection head 2 32 -> 16. All math is double precision.
inline constexpr std::size_t kInputDim = 4;
inline constexpr std::size_t kHiddenDim = 32;
inline constexpr std::size_t kFeatureDim = 32;
inline constexpr std::size_t kPoolDim = 32;
inline constexpr std::size_t kEmbedDim = 16;

namespace detail {

struct ParamLayout {
    std::size_t w1 = 0;
    std::size_t b1 = w1 + kHiddenDim * kInputDim;
    std::size_t w2 = b1 + kHiddenDim;
    std::size_t b2 = w2 + kFeatureDim * kHiddenDim;
    std::size_t h1w = b2 + kFeatureDim;
    std::size_t h1b = h1w + kPoolDim * kFeatureDim;
    std::size_t h2w = h1b + kPoolDim;
    std::size_t h2b = h2w + kEmbedDim * kPoolDim;
    std::size_t total = h2b + kEmbedDim;
};

inline constexpr ParamLayout kLayout{};

}  // namespace detail

/// Weights of the toy encoder and both projection heads, stored as one flat
/// double vector so updates, gradients, and serialization share a layout.
struct EncoderParams {
    std::vector<double> data;

    EncoderParams() : data(detail::kLayout.total, 0.0) {}

    static std::size_t parameter_count() { return detail::kLayout.total; }

    // Matrices are row-major [out][in].
    std::span<double> w1() { return {data.data() + detail::kLayout.w1, kHiddenDim * kInputDim}; }
    std::span<double> b1() { return {data.data() + detail::kLayout.b1, kHiddenDim}; }
    std::span<double> w2() { return {data.data() + detail::kLayout.w2, kFeatureDim * kHiddenDim}; }
    std::span<double> b2() { return {data.data() + detail::kLayout.b2, kFeatureDim}; }
    std::span<double> head1_w() { return {data.data() + detail::kLayout.h1w, kPoolDim * kFeatureDim}; }
    std::span<double> head1_b() { return {data.data() + detail::kLayout.h1b, kPoolDim}; }
    std::span<double> head2_w() { return {data.data() + detail::kLayout.h2w, kEmbedDim * kPoolDim}; }
    std::span<double> head2_b() { return {data.data() + detail::kLayout.h2b, kEmbedDim}; }

    std::span<const double> w1() const { return {data.data() + detail::kLayout.w1, kHiddenDim * kInputDim}; }
    std::span<const double> b1() const { return {data.data() + detail::kLayout.b1, kHiddenDim}; }
    std::span<const double> w2() const { return {data.data() + detail::kLayout.w2, kFeatureDim * kHiddenDim}; }
    std::span<const double> b2() const { return {data.data() + detail::kLayout.b2, kFeatureDim}; }
    std::span<const double> head1_w() const { return {data.data() + detail::kLayout.h1w, kPoolDim * kFeatureDim}; }
    std::span<const double> head1_b() const { return {data.data() + detail::kLayout.h1b, kPoolDim}; }
    std::span<const double> head2_w() const { return {data.data() + detail::kLayout.h2w, kEmbedDim * kPoolDim}; }
    std::span<const double> head2_b() const { return {data.data() + detail::kLayout.h2b, kEmbedDim}; }

    static EncoderParams zeros() { return EncoderParams{}; }

    /// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
    static EncoderParams random_init(std::uint64_t seed) {
        EncoderParams p;
        Rng rng(seed);
        auto fill = [&](std::span<double> w, std::size_t fan_in) {
            double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : w) v = rng.uniform(-lim, lim);
        };
        fill(p.w1(), kInputDim);
        fill(p.w2(), kHiddenDim);
        fill(p.head1_w(), kFeatureDim);
        fill(p.head2_w(), kPoolDim);
        return p;
    }
};

/// Linear classifier over per-point features (fine-tuning head).
struct ClassifierParams {
    std::size_t num_classes = 0;
    std::vector<double> data;  // C x kFeatureDim weights, then C biases

    ClassifierParams() = default;
    explicit ClassifierParams(std::size_t num_classes)
        : num_classes(num_classes), data(num_classes * kFeatureDim + num_classes, 0.0) {}

    std::span<double> w() { return {data.data(), num_classes * kFeatureDim}; }
    std::span<double> b() { return {data.data() + num_classes * kFeatureDim, num_classes}; }
    std::span<const double> w() const { return {data.data(), num_classes * kFeatureDim}; }
    std::span<const double> b() const { return {data.data() + num_classes * kFeatureDim, num_classes}; }

    static ClassifierParams random_init(std::size_t num_classes, std::uint64_t seed) {
        ClassifierParams p(num_classes);
        Rng rng(seed);
        double lim = 1.0 / std::sqrt(static_cast<double>(kFeatureDim));
        for (auto& v : p.w()) v = rng.uniform(-lim, lim);
        return p;
    }
};

// ---------------------------------------------------------------------------
// Parameter file format: 16-byte header (magic, version, layer-shape hash)
// followed by the flat parameter vector as little-endian float64.

namespace detail {

inline constexpr std::uint32_t kParamMagic = 0x504B4455u;  // "UDKP"
inline constexpr std::uint32_t kParamVersion = 1;

inline std::uint64_t shape_hash(const std::vector<std::uint64_t>& dims) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint64_t d : dims) {
        h ^= d;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t encoder_shape_hash() {
    return shape_hash({kInputDim, kHiddenDim, kFeatureDim, kPoolDim, kEmbedDim});
}

inline std::uint64_t classifier_shape_hash(std::size_t num_classes) {
    return shape_hash({kFeatureDim, static_cast<std::uint64_t>(num_classes)});
}

inline void save_param_file(const std::string& path, const std::vector<double>& data,
                            std::uint64_t hash) {
    std::vector<unsigned char> bytes(16 + data.size() * 8);
    store_le32(bytes.data(), kParamMagic);
    store_le32(bytes.data() + 4, kParamVersion);
    store_le64(bytes.data() + 8, hash);
    for (std::size_t i = 0; i < data.size(); ++i) {
        store_le64(bytes.data() + 16 + i * 8, std::bit_cast<std::uint64_t>(data[i]));
    }
    write_file_bytes(path, bytes);
}

inline std::vector<double> load_param_file(const std::string& path, std::uint64_t expected_hash,
                                           std::size_t expected_count) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 16) throw FormatError(path + ": truncated parameter file");
    if (load_le32(bytes.data()) != kParamMagic) {
        throw FormatError(path + ": bad magic, not a parameter file");
    }
    if (load_le32(bytes.data() + 4) != kParamVersion) {
        throw FormatError(path + ": unsupported parameter file version");
    }
    if (load_le64(bytes.data() + 8) != expected_hash) {
        throw FormatError(path + ": layer shape hash mismatch");
    }
    if (bytes.size() != 16 + expected_count * 8) {
        throw FormatError(path + ": expected " + std::to_string(expected_count) +
                          " parameters, file holds " + std::to_string((bytes.size() - 16) / 8));
    }
    std::vector<double> data(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        data[i] = std::bit_cast<double>(load_le64(bytes.data() + 16 + i * 8));
    }
    return data;
}

}  // namespace detail

inline void save_encoder_params(const EncoderParams& params, const std::string& path) {
    detail::save_param_file(path, params.data, detail::encoder_shape_hash());
}

inline EncoderParams load_encoder_params(const std::string& path) {
    EncoderParams p;
    p.data = detail::load_param_file(path, detail::encoder_shape_hash(),
                                     EncoderParams::parameter_count());
    return p;
}

inline void save_classifier_params(const ClassifierParams& params, const std::string& path) {
    detail::save_param_file(path, params.data, detail::classifier_shape_hash(params.num_classes));
}

inline ClassifierParams load_classifier_params(const std::string& path, std::size_t num_classes) {
    ClassifierParams p(num_classes);
    p.data = detail::load_param_file(path, detail::classifier_shape_hash(num_classes),
                                     num_classes * kFeatureDim + num_classes);
    return p;
}

// ---------------------------------------------------------------------------
// Forward / backward passes.

/// Intermediate activations of the per-point MLP, kept for backprop.
struct EncodeCache {
    std::size_t count = 0;
    std::vector<double> z1, a1, z2, features;  // each count x 32, row-major
};

inline EncodeCache encode_points_cached(const PointCloud& cloud, const EncoderParams& params) {
    EncodeCache cache;
    const std::size_t n = cloud.size();
    cache.count = n;
    cache.z1.resize(n * kHiddenDim);
    cache.a1.resize(n * kHiddenDim);
    cache.z2.resize(n * kFeatureDim);
    cache.features.resize(n * kFeatureDim);
    auto w1 = params.w1(), b1 = params.b1(), w2 = params.w2(), b2 = params.b2();
    for (std::size_t i = 0; i < n; ++i) {
        const double input[kInputDim] = {cloud[i].x, cloud[i].y, cloud[i].z, cloud[i].remission};
        double* z1 = cache.z1.data() + i * kHiddenDim;
        double* a1 = cache.a1.data() + i * kHiddenDim;
        for (std::size_t o = 0; o < kHiddenDim; ++o) {
            double acc = b1[o];
            for (std::size_t k = 0; k < kInputDim; ++k) acc += w1[o * kInputDim + k] * input[k];
            z1[o] = acc;
            a1[o] = acc > 0.0 ? acc : 0.0;
        }
        double* z2 = cache.z2.data() + i * kFeatureDim;
        double* f = cache.features.data() + i * kFeatureDim;
        for (std::size_t o = 0; o < kFeatureDim; ++o) {
            double acc = b2[o];
            for (std::size_t k = 0; k < kHiddenDim; ++k) acc += w2[o * kHiddenDim + k] * a1[k];
            z2[o] = acc;
            f[o] = acc > 0.0 ? acc : 0.0;
        }
    }
    return cache;
}

/// Per-point feature matrix (count x 32, row-major).
inline std::vector<double> encode_points(const PointCloud& cloud, const EncoderParams& params) {
    return encode_points_cached(cloud, params).features;
}

/// Accumulates parameter gradients given d(loss)/d(features).
inline void encoder_backward(const PointCloud& cloud, const EncodeCache& cache,
                             const EncoderParams& params, std::span<const double> d_features,
                             EncoderParams& grad) {
    auto w2 = params.w2();
    auto gw1 = grad.w1();
    auto gb1 = grad.b1();
    auto gw2 = grad.w2();
    auto gb2 = grad.b2();
    for (std::size_t i = 0; i < cache.count; ++i) {
        const double* df = d_features.data() + i * kFeatureDim;
        const double* z2 = cache.z2.data() + i * kFeatureDim;
        const double* a1 = cache.a1.data() + i * kHiddenDim;
        const double* z1 = cache.z1.data() + i * kHiddenDim;
        const double input[kInputDim] = {cloud[i].x, cloud[i].y, cloud[i].z, cloud[i].remission};
        double dz2[kFeatureDim];
        bool all_zero = true;
        for (std::size_t o = 0; o < kFeatureDim; ++o) {
            dz2[o] = z2[o] > 0.0 ? df[o] : 0.0;
            if (dz2[o] != 0.0) all_zero = false;
        }
        if (all_zero) continue;
        double da1[kHiddenDim] = {};
        for (std::size_t o = 0; o < kFeatureDim; ++o) {
            if (dz2[o] == 0.0) continue;
            gb2[o] += dz2[o];
            for (std::size_t k = 0; k < kHiddenDim; ++k) {
                gw2[o * kHiddenDim + k] += dz2[o] * a1[k];
                da1[k] += w2[o * kHiddenDim + k] * dz2[o];
            }
        }
        for (std::size_t o = 0; o < kHiddenDim; ++o) {
            double dz1 = z1[o] > 0.0 ? da1[o] : 0.0;
            if (dz1 == 0.0) continue;
            gb1[o] += dz1;
            for (std::size_t k = 0; k < kInputDim; ++k) gw1[o * kInputDim + k] += dz1 * input[k];
        }
    }
}

}  // namespace udakit

#endif
