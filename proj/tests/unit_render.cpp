#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "sforge/errors.hpp"
#include "sforge/render.hpp"
#include "sforge/scenario_gen.hpp"
#include "test_helpers.hpp"

using namespace sforge;
using testing::make_scenario;

namespace {

std::vector<AgentState> current_states(const Scenario& sc) {
  std::vector<AgentState> states;
  for (const Agent& a : sc.agents) states.push_back(a.past.back());
  return states;
}

size_t count_occurrences(const std::string& text, const std::string& needle) {
  size_t count = 0;
  for (size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string fresh_dir(const char* name) {
  const std::string dir = std::string("/tmp/sforge_render_test_") + name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("frame contains map, centerlines, and one rectangle per agent") {
  Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  select_adversary(sc);
  const std::string svg = render_frame(sc, current_states(sc), {});

  CHECK(svg.rfind("<?xml version=\"1.0\" encoding=\"UTF-8\"?>", 0) == 0);
  CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("class=\"drivable\"") != std::string::npos);
  CHECK(count_occurrences(svg, "<polyline") == sc.map.centerlines.size());
  CHECK(count_occurrences(svg, "class=\"agent ") == sc.agents.size());
  CHECK(count_occurrences(svg, "class=\"agent ego\"") == 1);
  CHECK(count_occurrences(svg, "class=\"agent adversary\"") == 1);
  CHECK(count_occurrences(svg, "class=\"agent other\"") == sc.agents.size() - 2);
  // No events were passed, so no markers appear.
  CHECK(svg.find("collision-marker") == std::string::npos);
  CHECK(svg.find("offroad-marker") == std::string::npos);
}

TEST_CASE("agent rectangles scale with the footprint and rotate with heading") {
  Scenario sc = make_scenario({{0, Role::kEgo, {0.0, 0.0, 0.0, 3.0}, {}},
                               {1, Role::kOther, {5.0, 0.0, M_PI / 2.0, 3.0}, {}}},
                              20.0, false);
  const std::string svg = render_frame(sc, current_states(sc), {});
  // Default footprint 4.2 x 1.8 m at 6 px/m.
  CHECK(svg.find("width=\"25.20\" height=\"10.80\"") != std::string::npos);
  // World heading pi/2 becomes a -90 degree screen rotation (y axis flips).
  CHECK(svg.find("rotate(-90.00)") != std::string::npos);
  CHECK(svg.find("rotate(0.00)") != std::string::npos);
}

TEST_CASE("viewport maps world coordinates at fixed precision") {
  // flat_map(20) spans [-20, 20]^2 at 0.5 m cells; margin 4 m and 6 px/m put
  // the upper-left corner at world (-24, 24) and make the page 288 px square.
  Scenario sc = make_scenario({{0, Role::kEgo, {0.0, 0.0, 0.0, 3.0}, {}},
                               {1, Role::kOther, {5.0, 0.0, 0.0, 3.0}, {}}},
                              20.0, false);
  std::vector<SimEvent> events{{EventKind::kCollision, 0, 0, 1}};
  const std::string svg = render_frame(sc, current_states(sc), events);
  CHECK(svg.find("width=\"288.00\" height=\"288.00\"") != std::string::npos);
  // Collision marker at the pair midpoint (2.5, 0).
  const size_t marker = svg.find("class=\"collision-marker\"");
  REQUIRE(marker != std::string::npos);
  CHECK(svg.find("translate(159.00,144.00)", marker) != std::string::npos);
}

TEST_CASE("rendering is byte-deterministic") {
  const Scenario a = generate_synthetic_scenario(GeneratorConfig{}, 7);
  const Scenario b = generate_synthetic_scenario(GeneratorConfig{}, 7);
  CHECK(render_frame(a, current_states(a), {}) == render_frame(b, current_states(b), {}));

  const std::string dir_a = fresh_dir("det_a");
  const std::string dir_b = fresh_dir("det_b");
  REQUIRE(render_scenario_frames(a, dir_a) == render_scenario_frames(b, dir_b));
  CHECK(slurp(dir_a + "/frame_000.svg") == slurp(dir_b + "/frame_000.svg"));
  CHECK(slurp(dir_a + "/frame_016.svg") == slurp(dir_b + "/frame_016.svg"));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("scenario rendering emits one frame per timestep") {
  Scenario sc = generate_synthetic_scenario(GeneratorConfig{}, 23);
  const std::string dir = fresh_dir("scenario");
  const int frames = render_scenario_frames(sc, dir);
  CHECK(frames == sc.t_hist + 1 + sc.t_future);
  for (int k = 0; k < frames; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%03d.svg", k);
    CHECK(std::filesystem::exists(dir + name));
  }
  CHECK_FALSE(std::filesystem::exists(dir + "/frame_017.svg"));
  std::filesystem::remove_all(dir);

  // Without futures only the past timesteps are rendered.
  sc.agents[1].future.reset();
  const std::string dir2 = fresh_dir("scenario_past");
  CHECK(render_scenario_frames(sc, dir2) == sc.t_hist + 1);
  CHECK_FALSE(std::filesystem::exists(dir2 + "/frame_005.svg"));
  std::filesystem::remove_all(dir2);
}

TEST_CASE("result rendering draws events on their frame only") {
  Scenario sc = make_scenario({{0, Role::kEgo, {0.0, 0.0, 0.0, 3.0}, {}},
                               {1, Role::kAdversary, {6.0, 0.0, 0.0, 3.0}, {}},
                               {2, Role::kOther, {12.0, 0.0, 0.0, 3.0}, {}}},
                              20.0, false);
  SimulationResult result;
  result.states.assign(3, current_states(sc));
  result.events.push_back({EventKind::kCollision, 1, 0, 1});
  result.events.push_back({EventKind::kOffRoad, 2, 2, -1});

  const std::string dir = fresh_dir("result");
  CHECK(render_result_frames(sc, result, dir) == 3);
  const std::string f0 = slurp(dir + "/frame_000.svg");
  const std::string f1 = slurp(dir + "/frame_001.svg");
  const std::string f2 = slurp(dir + "/frame_002.svg");
  CHECK(f0.find("collision-marker") == std::string::npos);
  CHECK(count_occurrences(f1, "class=\"collision-marker\"") == 1);
  CHECK(f1.find("offroad-marker") == std::string::npos);
  CHECK(count_occurrences(f2, "class=\"offroad-marker\"") == 1);
  CHECK(f2.find("collision-marker") == std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("render validation") {
  Scenario sc = make_scenario({{0, Role::kEgo, {0.0, 0.0, 0.0, 3.0}, {}},
                               {1, Role::kOther, {6.0, 0.0, 0.0, 3.0}, {}}},
                              20.0, false);
  std::vector<AgentState> states = current_states(sc);
  states.pop_back();
  CHECK_THROWS_AS(render_frame(sc, states, {}), ValidationError);

  const std::vector<AgentState> good = current_states(sc);
  CHECK_THROWS_AS(render_frame(sc, good, {{EventKind::kCollision, 0, 0, 5}}), ValidationError);
  CHECK_THROWS_AS(render_frame(sc, good, {{EventKind::kCollision, 0, 0, -1}}), ValidationError);
  CHECK_THROWS_AS(render_frame(sc, good, {{EventKind::kOffRoad, 0, 9, -1}}), ValidationError);

  RenderOptions bad_scale;
  bad_scale.scale = 0.0;
  CHECK_THROWS_AS(render_frame(sc, good, {}, bad_scale), ConfigError);
  RenderOptions bad_margin;
  bad_margin.margin = -1.0;
  CHECK_THROWS_AS(render_frame(sc, good, {}, bad_margin), ConfigError);
}
