#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "sforge/errors.hpp"
#include "sforge/scenario_gen.hpp"
#include "sforge/scenario_io.hpp"
#include "test_helpers.hpp"

using namespace sforge;

namespace {

void check_identical(const Scenario& a, const Scenario& b) {
  CHECK(a.dt == b.dt);
  CHECK(a.t_hist == b.t_hist);
  CHECK(a.t_future == b.t_future);
  CHECK(a.map.origin_x == b.map.origin_x);
  CHECK(a.map.origin_y == b.map.origin_y);
  CHECK(a.map.resolution == b.map.resolution);
  CHECK(a.map.rows == b.map.rows);
  CHECK(a.map.cols == b.map.cols);
  CHECK(a.map.sdf == b.map.sdf);
  REQUIRE(a.map.centerlines.size() == b.map.centerlines.size());
  for (size_t l = 0; l < a.map.centerlines.size(); ++l) {
    const Polyline& pa = a.map.centerlines[l];
    const Polyline& pb = b.map.centerlines[l];
    REQUIRE(pa.size() == pb.size());
    for (int i = 0; i < pa.size(); ++i) {
      CHECK(pa.x(i) == pb.x(i));
      CHECK(pa.y(i) == pb.y(i));
    }
  }
  REQUIRE(a.agents.size() == b.agents.size());
  for (size_t i = 0; i < a.agents.size(); ++i) {
    const Agent& x = a.agents[i];
    const Agent& y = b.agents[i];
    CHECK(x.id == y.id);
    CHECK(x.role == y.role);
    CHECK(x.footprint.length == y.footprint.length);
    CHECK(x.footprint.width == y.footprint.width);
    REQUIRE(x.past.size() == y.past.size());
    for (size_t t = 0; t < x.past.size(); ++t) {
      CHECK(x.past[t].x == y.past[t].x);
      CHECK(x.past[t].y == y.past[t].y);
      CHECK(x.past[t].heading == y.past[t].heading);
      CHECK(x.past[t].speed == y.past[t].speed);
    }
    REQUIRE(x.future.has_value() == y.future.has_value());
    if (x.future) {
      REQUIRE(x.future->size() == y.future->size());
      for (size_t t = 0; t < x.future->size(); ++t) {
        CHECK((*x.future)[t].x == (*y.future)[t].x);
        CHECK((*x.future)[t].y == (*y.future)[t].y);
        CHECK((*x.future)[t].heading == (*y.future)[t].heading);
        CHECK((*x.future)[t].speed == (*y.future)[t].speed);
      }
    }
  }
}

std::string temp_path(const char* name) {
  return std::string("/tmp/sforge_io_test_") + name + ".json";
}

}  // namespace

TEST_CASE("json round-trip is exact for every layout") {
  for (RoadLayout layout :
       {RoadLayout::kStraight, RoadLayout::kCurve, RoadLayout::kIntersection}) {
    GeneratorConfig cfg;
    cfg.layout = layout;
    const Scenario sc = generate_synthetic_scenario(cfg, 17);
    check_identical(sc, scenario_from_json(scenario_to_json(sc)));
  }
}

TEST_CASE("file round-trip is exact and atomic") {
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 4);
  const std::string path = temp_path("roundtrip");
  write_scenario_file(sc, path);
  check_identical(sc, read_scenario_file(path));
  // Overwrite in place with different content works.
  const Scenario other = generate_synthetic_scenario(GeneratorConfig{}, 5);
  write_scenario_file(other, path);
  check_identical(other, read_scenario_file(path));
  std::remove(path.c_str());
}

TEST_CASE("optional futures and roles survive the round-trip") {
  Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 9);
  select_adversary(sc);
  sc.agents[3].future.reset();
  const Scenario back = scenario_from_json(scenario_to_json(sc));
  check_identical(sc, back);
  CHECK(back.adversary_index() == sc.adversary_index());
  CHECK_FALSE(back.agents[3].future.has_value());
  CHECK(back.agents[1].future.has_value());
}

TEST_CASE("malformed json is a parse error") {
  CHECK_THROWS_AS(scenario_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(scenario_from_json(""), ParseError);
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 4);
  const std::string text = scenario_to_json(sc);
  CHECK_THROWS_AS(scenario_from_json(text.substr(0, text.size() / 2)), ParseError);
}

TEST_CASE("schema violations are parse errors") {
  const Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 4);
  const std::string text = scenario_to_json(sc);

  auto mutate = [&](const char* from, const char* to) {
    std::string copy = text;
    const size_t pos = copy.find(from);
    REQUIRE(pos != std::string::npos);
    copy.replace(pos, std::string(from).size(), to);
    return copy;
  };

  CHECK_THROWS_AS(scenario_from_json(mutate("\"dt\"", "\"delta\"")), ParseError);
  CHECK_THROWS_AS(scenario_from_json(mutate("\"agents\"", "\"actors\"")), ParseError);
  CHECK_THROWS_AS(scenario_from_json(mutate("\"role\":\"ego\"", "\"role\":\"pedestrian\"")),
                  ParseError);
  // Demoting the ego leaves no ego agent, which fails validation on read.
  CHECK_THROWS_AS(scenario_from_json(mutate("\"role\":\"ego\"", "\"role\":\"other\"")),
                  ParseError);
  CHECK_THROWS_AS(scenario_from_json(mutate("\"rows\"", "\"height\"")), ParseError);
}

TEST_CASE("missing files are not-found errors") {
  CHECK_THROWS_AS(read_scenario_file("/tmp/sforge_io_test_does_not_exist.json"),
                  NotFoundError);
}

TEST_CASE("error messages carry the source name") {
  try {
    scenario_from_json("{not json", "corpus/scene_000.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("corpus/scene_000.json") != std::string::npos);
  }
}
