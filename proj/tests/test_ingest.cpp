#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "stifle_tpa/geometry.hpp"
#include "stifle_tpa/ingest.hpp"

using namespace stifle_tpa;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = STIFLE_TPA_FIXTURES;

DetectionRecord rec(int cls, double cx, double cy, double w = 0.05, double h = 0.05,
                    std::optional<double> conf = std::nullopt) {
  return DetectionRecord{cls, cx, cy, w, h, conf};
}

std::vector<DetectionRecord> six_records() {
  return {rec(0, 0.5, 0.25), rec(1, 0.5, 0.75), rec(2, 0.45, 0.3),
          rec(3, 0.55, 0.275), rec(4, 0.52, 0.2), rec(5, 0.5, 0.8)};
}

const ImageMeta kMeta{1000, 800, "img"};

}  // namespace

TEST(ParseLabelFile, SingleLine) {
  auto recs = parse_label_file("3 0.5 0.5 0.2 0.1");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].class_id, 3);
  EXPECT_DOUBLE_EQ(recs[0].cx, 0.5);
  EXPECT_DOUBLE_EQ(recs[0].cy, 0.5);
  EXPECT_FALSE(recs[0].confidence);
  EXPECT_DOUBLE_EQ(recs[0].score(), 1.0);
}

TEST(ParseLabelFile, EmptyText) { EXPECT_TRUE(parse_label_file("").empty()); }

TEST(ParseLabelFile, TooFewFields) {
  try {
    parse_label_file("3 0.5 0.5 0.2");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

TEST(ParseLabelFile, CommentsBlankLinesCrlfAndConfidence) {
  auto recs = parse_label_file("# header\r\n\r\n  1 0.1 0.2 0.3 0.4 0.75\r\n\t\n0 1 0 1 1\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].class_id, 1);
  EXPECT_DOUBLE_EQ(*recs[0].confidence, 0.75);
  EXPECT_EQ(recs[1].class_id, 0);
  EXPECT_DOUBLE_EQ(recs[1].cx, 1.0);
}

TEST(ParseLabelFile, ErrorsCarryLineNumber) {
  const char* bad[] = {
      "0 0.5 0.5 0.1 0.1\n1 x 0.5 0.1 0.1",          // non-numeric
      "0 0.5 0.5 0.1 0.1\n1 1.5 0.5 0.1 0.1",        // center out of range
      "0 0.5 0.5 0.1 0.1\n1 0.5 0.5 0 0.1",          // zero width
      "0 0.5 0.5 0.1 0.1\n1 0.5 0.5 0.1 0.1 1.2",    // confidence > 1
      "0 0.5 0.5 0.1 0.1\n-1 0.5 0.5 0.1 0.1",       // negative class
      "0 0.5 0.5 0.1 0.1\n1.5 0.5 0.5 0.1 0.1",      // fractional class
      "0 0.5 0.5 0.1 0.1\n1 0.5 0.5 0.1 0.1 0.9 7",  // too many fields
      "0 0.5 0.5 0.1 0.1\n1 nan 0.5 0.1 0.1",        // NaN
  };
  for (const char* text : bad) {
    try {
      parse_label_file(text);
      FAIL() << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), 2u) << text;
    }
  }
}

TEST(ParseLabelFile, SerializeRoundTripProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<DetectionRecord> recs;
    const int n = trial % 9;
    for (int i = 0; i < n; ++i) {
      DetectionRecord r{cls(rng), unit(rng), unit(rng), 1.0 - unit(rng), 1.0 - unit(rng), std::nullopt};
      if (rng() % 2) r.confidence = unit(rng);
      recs.push_back(r);
    }
    EXPECT_EQ(parse_label_file(serialize_labels(recs)), recs);
  }
}

TEST(Centroid, Examples) {
  EXPECT_EQ(centroid(rec(0, 0.5, 0.5), {1000, 800, ""}), (Point2D{500, 400}));
  EXPECT_EQ(centroid(rec(0, 0.0, 0.0), {37, 91, ""}), (Point2D{0, 0}));
  EXPECT_EQ(centroid(rec(0, 0.25, 0.75), {640, 480, ""}), (Point2D{160, 360}));
}

TEST(Centroid, StaysInsideImage) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 5000);
  for (int i = 0; i < 1000; ++i) {
    ImageMeta m{dim(rng), dim(rng), ""};
    auto p = centroid(rec(0, unit(rng), i % 10 == 0 ? 1.0 : unit(rng)), m);
    EXPECT_GE(p.x, 0.0);
    EXPECT_LE(p.x, m.width);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LE(p.y, m.height);
  }
}

TEST(ClassRoleMap, FromJsonAndValidation) {
  auto map = ClassRoleMap::load(kFixtures / "class_map.json");
  EXPECT_EQ(map.role_of(1), LandmarkRole::TalusCenter);
  EXPECT_FALSE(map.role_of(9));
  EXPECT_EQ(map.class_of(LandmarkRole::MtplP2), 3);
  EXPECT_EQ(ClassRoleMap::from_json(map.to_json()).mapping(), map.mapping());

  using nlohmann::json;
  // missing required role
  EXPECT_THROW(ClassRoleMap::from_json(json::parse(R"({"class_roles": {"0": "IntercondylarEminence",
      "1": "TalusCenter", "2": "MtplP1"}})")), Error);
  // same role twice
  EXPECT_THROW(ClassRoleMap::from_json(json::parse(R"({"class_roles": {"0": "IntercondylarEminence",
      "1": "TalusCenter", "2": "MtplP1", "3": "MtplP2", "4": "MtplP2"}})")), Error);
  EXPECT_THROW(ClassRoleMap::from_json(json::parse(R"({"class_roles": {"x": "TalusCenter"}})")), Error);
  EXPECT_THROW(ClassRoleMap::from_json(json::parse(R"({"class_roles": {"0": "Patella"}})")), Error);
  EXPECT_THROW(ClassRoleMap::from_json(json::parse(R"({"roles": {}})")), Error);
}

// Normalized coordinates like 0.275 are inexact, so centroids can sit an ulp off.
#define EXPECT_POINT_NEAR(a, b) \
  do {                          \
    EXPECT_NEAR((a).x, (b).x, 1e-9); \
    EXPECT_NEAR((a).y, (b).y, 1e-9); \
  } while (0)

TEST(ResolveLandmarks, OnePerClass) {
  auto res = resolve_landmarks(six_records(), kMeta, ClassRoleMap::standard());
  EXPECT_EQ(res.ignored, 0u);
  EXPECT_POINT_NEAR(res.landmarks.intercondylar_eminence, (Point2D{500, 200}));
  EXPECT_POINT_NEAR(res.landmarks.talus_center, (Point2D{500, 600}));
  EXPECT_POINT_NEAR(res.landmarks.mtpl_p1, (Point2D{450, 240}));
  EXPECT_POINT_NEAR(res.landmarks.mtpl_p2, (Point2D{550, 220}));
  ASSERT_TRUE(res.landmarks.stifle_joint);
  ASSERT_TRUE(res.landmarks.tarsus_joint);
}

TEST(ResolveLandmarks, MissingTalus) {
  auto recs = six_records();
  recs.erase(recs.begin() + 1);
  try {
    resolve_landmarks(recs, kMeta, ClassRoleMap::standard());
    FAIL();
  } catch (const MissingRoleError& e) {
    ASSERT_EQ(e.roles().size(), 1u);
    EXPECT_EQ(e.roles()[0], LandmarkRole::TalusCenter);
    EXPECT_NE(std::string(e.what()).find("MissingRole(TalusCenter)"), std::string::npos);
  }
}

TEST(ResolveLandmarks, OptionalRolesMayBeAbsent) {
  auto recs = six_records();
  recs.resize(4);
  auto res = resolve_landmarks(recs, kMeta, ClassRoleMap::standard());
  EXPECT_FALSE(res.landmarks.stifle_joint);
  EXPECT_FALSE(res.landmarks.tarsus_joint);
}

TEST(ResolveLandmarks, UnmappedClassesAreCounted) {
  auto recs = six_records();
  recs.push_back(rec(17, 0.1, 0.1));
  recs.push_back(rec(99, 0.2, 0.1));
  EXPECT_EQ(resolve_landmarks(recs, kMeta, ClassRoleMap::standard()).ignored, 2u);
}

TEST(ResolveLandmarks, TieBreakConfidenceThenAreaThenOrder) {
  auto base = six_records();
  auto recs = base;
  recs[0].confidence = 0.6;
  recs.push_back(rec(0, 0.1, 0.1, 0.05, 0.05, 0.9));
  EXPECT_EQ(resolve_landmarks(recs, kMeta, ClassRoleMap::standard()).landmarks.intercondylar_eminence,
            (Point2D{100, 80}));

  recs = base;
  recs[0].confidence = 0.9;
  recs.push_back(rec(0, 0.1, 0.1, 0.2, 0.2, 0.9));  // same score, larger box
  EXPECT_EQ(resolve_landmarks(recs, kMeta, ClassRoleMap::standard()).landmarks.intercondylar_eminence,
            (Point2D{100, 80}));

  recs = base;
  recs.push_back(rec(0, 0.1, 0.1));  // full tie: first occurrence stays
  EXPECT_EQ(resolve_landmarks(recs, kMeta, ClassRoleMap::standard()).landmarks.intercondylar_eminence,
            (Point2D{500, 200}));
}

TEST(ResolveLandmarks, PermutationInvariantWithDistinctConfidences) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DetectionRecord> recs;
    for (int cls = 0; cls < 6; ++cls) {
      for (int k = 0; k < 1 + trial % 3; ++k) recs.push_back(rec(cls, unit(rng), unit(rng), 0.05, 0.05, unit(rng)));
    }
    const auto expected = resolve_landmarks(recs, kMeta, ClassRoleMap::standard()).landmarks;
    for (int p = 0; p < 5; ++p) {
      std::shuffle(recs.begin(), recs.end(), rng);
      EXPECT_EQ(resolve_landmarks(recs, kMeta, ClassRoleMap::standard()).landmarks, expected);
    }
  }
}

TEST(Manifest, ParsesAndResolvesRelativePaths) {
  auto m = load_manifest(kFixtures / "manifest.json");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].image_id, "case01");
  EXPECT_EQ(m.entries[0].labels, kFixtures / "case01.txt");
  EXPECT_EQ(m.entries[0].width, 1000);
}

TEST(Manifest, RejectsDuplicatesAndBadSizes) {
  using nlohmann::json;
  EXPECT_THROW(parse_manifest(json::parse(R"([{"image_id": "a", "labels": "x", "width": 1, "height": 1},
                                              {"image_id": "a", "labels": "y", "width": 1, "height": 1}])")),
               Error);
  EXPECT_THROW(parse_manifest(json::parse(R"([{"image_id": "a", "labels": "x", "width": 0, "height": 1}])")),
               Error);
  EXPECT_THROW(parse_manifest(json::parse(R"([{"image_id": "a", "width": 10, "height": 1}])")), Error);
  EXPECT_THROW(parse_manifest(json::parse(R"({"image_id": "a"})")), Error);
}

TEST(LoadCase, HandComputedFixture) {
  auto res = load_case({"case01", kFixtures / "case01.txt", 1000, 800}, ClassRoleMap::standard());
  // 0.5*1000, 0.25*800 etc.
  EXPECT_POINT_NEAR(res.landmarks.intercondylar_eminence, (Point2D{500, 200}));
  EXPECT_POINT_NEAR(res.landmarks.talus_center, (Point2D{500, 600}));
  EXPECT_POINT_NEAR(res.landmarks.mtpl_p1, (Point2D{450, 240}));
  EXPECT_POINT_NEAR(res.landmarks.mtpl_p2, (Point2D{550, 220}));
  EXPECT_POINT_NEAR(*res.landmarks.stifle_joint, (Point2D{520, 160}));
  EXPECT_POINT_NEAR(*res.landmarks.tarsus_joint, (Point2D{500, 640}));
  // FTL vertical; MTPL along (100, -20) so TPA = atan(0.2).
  EXPECT_NEAR(compute_tpa(res.landmarks).angle_deg, 11.309932474020215, 1e-12);
}

TEST(LoadCase, DuplicateD1HighestConfidenceWins) {
  auto res = load_case({"dup", kFixtures / "case_dup_d1.txt", 1000, 800}, ClassRoleMap::standard());
  EXPECT_POINT_NEAR(res.landmarks.mtpl_p1, (Point2D{450, 240}));
}

TEST(LoadCase, MissingFileIsIoError) {
  try {
    load_case({"ghost", kFixtures / "does_not_exist.txt", 10, 10}, ClassRoleMap::standard());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(LoadCase, MissingRoleKeepsImageContext) {
  try {
    load_case({"mt", kFixtures / "case_missing_talus.txt", 1000, 800}, ClassRoleMap::standard());
    FAIL();
  } catch (const MissingRoleError& e) {
    EXPECT_EQ(e.roles(), std::vector<LandmarkRole>{LandmarkRole::TalusCenter});
    EXPECT_NE(std::string(e.what()).find("image mt"), std::string::npos);
  }
}

TEST(Records, LandmarksRoundTripThroughLabels) {
  CaseLandmarks lm;
  lm.intercondylar_eminence = {123.25, 456.5};
  lm.talus_center = {321.125, 654.0};
  lm.mtpl_p1 = {1.0, 2.0};
  lm.mtpl_p2 = {998.0, 799.0};
  lm.tarsus_joint = Point2D{500, 500};
  const auto map = ClassRoleMap::standard();
  auto text = serialize_labels(landmarks_to_records(lm, kMeta, map));
  auto back = resolve_landmarks(parse_label_file(text), kMeta, map).landmarks;
  for (auto role : kAllRoles) {
    auto a = lm.get(role), b = back.get(role);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_NEAR(a->x, b->x, 1e-9);
      EXPECT_NEAR(a->y, b->y, 1e-9);
    }
  }
}
