#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "evstar/catalog.hpp"

using namespace evstar;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("evstar_catalog_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Catalog, RoundTripIsExact) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ra(0, 360), dec(-90, 90), mag(-1, 18);
    Catalog c;
    for (int i = 0; i < 500; ++i) c.push_back({1000000000000LL + i, {ra(rng), dec(rng)}, mag(rng)});
    const auto p = temp_file("rt.csv");
    write_catalog(c, p);
    const Catalog back = read_catalog(p);
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(back[i].id, c[i].id);
        EXPECT_EQ(back[i].position.ra_deg, c[i].position.ra_deg);
        EXPECT_EQ(back[i].position.dec_deg, c[i].position.dec_deg);
        EXPECT_EQ(back[i].magnitude, c[i].magnitude);
    }
}

TEST(Catalog, HeaderOptionalAndRaWrapped) {
    const auto p = temp_file("nohdr.csv");
    write_text(p, "7, 361.5, -10, 9.5\n8,-0.5,10,3\n");
    const Catalog c = read_catalog(p);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_DOUBLE_EQ(c[0].position.ra_deg, 1.5);
    EXPECT_DOUBLE_EQ(c[1].position.ra_deg, 359.5);
}

TEST(Catalog, BadRowsReportLine) {
    const auto p = temp_file("bad.csv");
    write_text(p, "id,ra_deg,dec_deg,mag\n1,10,10,5\n2,10,95,5\n");
    try {
        read_catalog(p);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.kind(), FormatError::Kind::Malformed);
        EXPECT_EQ(e.location(), 3u);
    }
    write_text(p, "1,10,10\n");
    EXPECT_THROW(read_catalog(p), FormatError);
    EXPECT_THROW(read_catalog(temp_file("missing.csv")), FormatError);
}

TEST(Catalog, ConeSearchBrightestFirst) {
    const Catalog c{{1, {10.0, 0.0}, 9.0}, {2, {10.05, 0.0}, 7.0}, {3, {10.0, 0.3}, 1.0}, {4, {9.95, 0.0}, 7.0}};
    const Catalog r = cone_search(c, {10.0, 0.0}, 0.1);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].id, 2);
    EXPECT_EQ(r[1].id, 4);
    EXPECT_EQ(r[2].id, 1);
}

TEST(MountTrack, ConstantTrackIsConstant) {
    const MountTrack m({{0, {50.0, 20.0}}, {500000, {50.0, 20.0}}, {1000000, {50.0, 20.0}}});
    for (std::int64_t t : {0, 1, 250000, 999999, 1000000}) {
        EXPECT_DOUBLE_EQ(m.at(t).ra_deg, 50.0);
        EXPECT_DOUBLE_EQ(m.at(t).dec_deg, 20.0);
    }
}

TEST(MountTrack, LinearInterpolationAtMidpoint) {
    const MountTrack m({{0, {50.0, 20.0}}, {500000, {50.2, 20.1}}});
    EXPECT_DOUBLE_EQ(m.at(250000).ra_deg, 50.1);
    EXPECT_DOUBLE_EQ(m.at(250000).dec_deg, 20.05);
    EXPECT_DOUBLE_EQ(m.at(500000).ra_deg, 50.2);
}

TEST(MountTrack, InterpolatesAcrossRaWrap) {
    const MountTrack m({{0, {359.9, 0.0}}, {1000, {0.1, 0.0}}});
    EXPECT_NEAR(m.at(500).ra_deg, 0.0, 1e-9);
    EXPECT_NEAR(m.at(250).ra_deg, 359.95, 1e-9);
}

TEST(MountTrack, RefusesExtrapolation) {
    const MountTrack m({{100, {1.0, 1.0}}, {200, {2.0, 2.0}}});
    EXPECT_THROW(m.at(99), std::out_of_range);
    EXPECT_THROW(m.at(201), std::out_of_range);
    EXPECT_THROW(MountTrack().at(0), std::out_of_range);
}

TEST(MountTrack, RejectsDecreasingTimestamps) {
    EXPECT_THROW(MountTrack({{200, {}}, {100, {}}}), std::invalid_argument);
}

TEST(MountTrack, FileRoundTrip) {
    const MountTrack m({{0, {12.25, -5.5}}, {500000, {12.3, -5.45}}, {1000000, {12.35, -5.4}}});
    const auto p = temp_file("mount.csv");
    write_mount_track(m, p);
    const MountTrack back = read_mount_track(p);
    ASSERT_EQ(back.reports().size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.reports()[i].t_us, m.reports()[i].t_us);
        EXPECT_EQ(back.reports()[i].center.ra_deg, m.reports()[i].center.ra_deg);
        EXPECT_EQ(back.reports()[i].center.dec_deg, m.reports()[i].center.dec_deg);
    }
}
