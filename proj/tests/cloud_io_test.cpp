#include "udakit/cloud_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "test_support.hpp"
#include "udakit/class_map.hpp"

using namespace udakit;
using testsupport::TempDir;

namespace {

void write_raw(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> float_bytes(const std::vector<float>& values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        detail::store_le32(bytes.data() + i * 4, std::bit_cast<std::uint32_t>(values[i]));
    }
    return bytes;
}

}  // namespace

TEST(CloudIo, ReadsTwoPointRecord) {
    TempDir dir("cloudio");
    auto path = dir.str("scan.bin");
    write_raw(path, float_bytes({1, 2, 3, 0.5f, 4, 5, 6, 0.1f}));

    PointCloud cloud = read_point_cloud(path);
    ASSERT_EQ(cloud.size(), 2u);
    EXPECT_EQ(cloud[0].x, 1.0);
    EXPECT_EQ(cloud[0].y, 2.0);
    EXPECT_EQ(cloud[0].z, 3.0);
    EXPECT_EQ(cloud[0].remission, 0.5);
    EXPECT_EQ(cloud[1].x, 4.0);
    EXPECT_DOUBLE_EQ(cloud[1].remission, 0.10000000149011612);  // float32 0.1 widened
}

TEST(CloudIo, EmptyFileIsEmptyCloud) {
    TempDir dir("cloudio");
    auto path = dir.str("empty.bin");
    write_raw(path, {});
    EXPECT_EQ(read_point_cloud(path).size(), 0u);
}

TEST(CloudIo, RejectsBadSize) {
    TempDir dir("cloudio");
    auto path = dir.str("bad.bin");
    write_raw(path, std::vector<unsigned char>(17, 0));
    EXPECT_THROW(read_point_cloud(path), FormatError);
}

TEST(CloudIo, RejectsNonFiniteCoordinates) {
    TempDir dir("cloudio");
    auto path = dir.str("nan.bin");
    write_raw(path, float_bytes({1, std::numeric_limits<float>::quiet_NaN(), 3, 0}));
    EXPECT_THROW(read_point_cloud(path), FormatError);

    write_raw(path, float_bytes({1, 2, std::numeric_limits<float>::infinity(), 0}));
    EXPECT_THROW(read_point_cloud(path), FormatError);
}

TEST(CloudIo, MissingFileIsIoError) {
    EXPECT_THROW(read_point_cloud("/nonexistent/scan.bin"), IoError);
    EXPECT_THROW(read_labels("/nonexistent/scan.label"), IoError);
}

TEST(CloudIo, ReadsPackedLabels) {
    TempDir dir("cloudio");
    auto path = dir.str("scan.label");
    write_raw(path, {0x28, 0x00, 0x00, 0x00, 0x28, 0x00, 0x01, 0x00});

    LabelArray labels = read_labels(path);
    ASSERT_EQ(labels.size(), 2u);
    EXPECT_EQ(labels.semantic(0), 40);
    EXPECT_EQ(labels.instance(0), 0);
    EXPECT_EQ(labels.semantic(1), 40);
    EXPECT_EQ(labels.instance(1), 1);
}

TEST(CloudIo, EmptyLabelFile) {
    TempDir dir("cloudio");
    auto path = dir.str("empty.label");
    write_raw(path, {});
    EXPECT_EQ(read_labels(path).size(), 0u);
}

TEST(CloudIo, LabelCountMismatch) {
    TempDir dir("cloudio");
    auto path = dir.str("two.label");
    write_raw(path, std::vector<unsigned char>(8, 0));
    EXPECT_THROW(read_labels(path, 3), CountMismatch);
    EXPECT_NO_THROW(read_labels(path, 2));
}

TEST(CloudIo, LabelSizeNotMultipleOfFour) {
    TempDir dir("cloudio");
    auto path = dir.str("bad.label");
    write_raw(path, std::vector<unsigned char>(6, 0));
    EXPECT_THROW(read_labels(path), FormatError);
}

TEST(CloudIo, LabelRoundTripSmall) {
    TempDir dir("cloudio");
    auto path = dir.str("rt.label");
    LabelArray labels({40, 44, 48});
    write_labels(labels, path);
    EXPECT_EQ(read_labels(path), labels);

    write_labels(LabelArray{}, path);
    EXPECT_EQ(read_labels(path).size(), 0u);
    EXPECT_EQ(std::filesystem::file_size(path), 0u);
}

TEST(CloudIo, LabelRoundTripRandomized) {
    TempDir dir("cloudio");
    Rng rng(7);
    LabelArray labels;
    labels.values.resize(100000);
    for (auto& v : labels.values) v = static_cast<std::uint32_t>(rng.next_u64());
    auto path = dir.str("big.label");
    write_labels(labels, path);
    EXPECT_EQ(read_labels(path), labels);
}

TEST(CloudIo, PointCloudRoundTripRandomized) {
    TempDir dir("cloudio");
    Rng rng(11);
    PointCloud cloud = testsupport::random_cloud(rng, 5000);
    auto path = dir.str("rt.bin");
    write_point_cloud(cloud, path);
    PointCloud back = read_point_cloud(path);
    ASSERT_EQ(back.size(), cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_EQ(back[i].x, cloud[i].x);
        EXPECT_EQ(back[i].y, cloud[i].y);
        EXPECT_EQ(back[i].z, cloud[i].z);
        EXPECT_EQ(back[i].remission, cloud[i].remission);
    }
}

// --- class map -------------------------------------------------------------

TEST(ClassMap, ParsesMappingAndIgnore) {
    std::istringstream in(
        "# taxonomy alignment\n"
        "ignore = 99\n"
        "10 -> 0   # car\n"
        "18 -> 0   # truck\n"
        "20 -> 0\n"
        "40 -> 1   # road\n"
        "0 -> 99\n");
    ClassMap map = ClassMap::parse(in);
    EXPECT_EQ(map.ignore_id, 99);
    EXPECT_EQ(map.num_classes(), 2u);
    EXPECT_EQ(map.entries.at(10), 0);
    EXPECT_EQ(map.entries.at(0), 99);
    EXPECT_EQ(map.class_name(0), "car");
    EXPECT_EQ(map.class_name(1), "road");
}

TEST(ClassMap, RejectsNonContiguousTargets) {
    std::istringstream in("10 -> 0\n20 -> 2\n");
    EXPECT_THROW(ClassMap::parse(in), FormatError);
}

TEST(ClassMap, RejectsDuplicateSource) {
    std::istringstream in("10 -> 0\n10 -> 0\n");
    EXPECT_THROW(ClassMap::parse(in), FormatError);
}

TEST(ClassMap, RejectsGarbageLine) {
    std::istringstream in("10 => 0\n");
    EXPECT_THROW(ClassMap::parse(in), FormatError);
}

TEST(ClassMap, ShippedDefaultMapsParse) {
    ClassMap kitti = ClassMap::load(std::string(UDAKIT_CONFIG_DIR) + "/kitti_to_poss.map");
    EXPECT_EQ(kitti.num_classes(), 9u);
    EXPECT_EQ(kitti.ignore_id, 255);
    // Table-style merge: car, truck, other-vehicle share one target.
    EXPECT_EQ(kitti.entries.at(10), kitti.entries.at(18));
    EXPECT_EQ(kitti.entries.at(10), kitti.entries.at(20));

    ClassMap poss = ClassMap::load(std::string(UDAKIT_CONFIG_DIR) + "/poss_to_poss9.map");
    EXPECT_EQ(poss.num_classes(), 9u);

    ClassMap identity = ClassMap::load(std::string(UDAKIT_CONFIG_DIR) + "/poss9_identity.map");
    EXPECT_EQ(identity.num_classes(), 9u);
    for (std::uint16_t c = 0; c < 9; ++c) EXPECT_EQ(identity.entries.at(c), c);
}

// --- remapping ---------------------------------------------------------------

TEST(RemapLabels, MergesVehicleClasses) {
    std::istringstream in("10 -> 1 # Car/Vehicle\n18 -> 1\n20 -> 1\n50 -> 0 # Building\n");
    ClassMap map = ClassMap::parse(in);
    LabelArray labels({pack_label(10, 3), pack_label(18), pack_label(20, 7), pack_label(50)});
    LabelArray out = remap_labels(labels, map);
    EXPECT_EQ(out.semantic(0), 1);
    EXPECT_EQ(out.semantic(1), 1);
    EXPECT_EQ(out.semantic(2), 1);
    EXPECT_EQ(out.semantic(3), 0);
    // instance bits preserved
    EXPECT_EQ(out.instance(0), 3);
    EXPECT_EQ(out.instance(2), 7);
}

TEST(RemapLabels, IdentityMapIsIdentity) {
    ClassMap map = ClassMap::identity(5, 255);
    LabelArray labels({pack_label(0), pack_label(4, 2), pack_label(255, 9)});
    EXPECT_EQ(remap_labels(labels, map), labels);
}

TEST(RemapLabels, UnmappedClassNamesIdAndIndex) {
    ClassMap map = ClassMap::identity(3, 255);
    LabelArray labels({pack_label(1), pack_label(7)});
    try {
        remap_labels(labels, map);
        FAIL() << "expected UnmappedClass";
    } catch (const UnmappedClass& e) {
        EXPECT_EQ(e.id, 7);
        EXPECT_EQ(e.first_index, 1u);
    }
}

TEST(RemapLabels, IdempotentWhenTargetsAreFixedPoints) {
    std::istringstream in("0 -> 0\n1 -> 1\n5 -> 1\n9 -> 0\n");
    ClassMap map = ClassMap::parse(in);
    LabelArray labels({pack_label(5), pack_label(9), pack_label(0), pack_label(1)});
    LabelArray once = remap_labels(labels, map);
    EXPECT_EQ(remap_labels(once, map), once);
}

TEST(RemapLabels, IgnoreIdPassesThrough) {
    ClassMap map = ClassMap::identity(3, 255);
    LabelArray labels({pack_label(255, 4)});
    LabelArray out = remap_labels(labels, map);
    EXPECT_EQ(out.semantic(0), 255);
    EXPECT_EQ(out.instance(0), 4);
}
