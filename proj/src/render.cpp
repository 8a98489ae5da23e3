#include "sforge/render.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "sforge/errors.hpp"
#include "sforge/util.hpp"

namespace sforge {
namespace {

constexpr const char* kRoadFill = "#d9d9d9";
constexpr const char* kBackgroundFill = "#f2efe6";
constexpr const char* kCenterlineStroke = "#ffffff";
constexpr const char* kEgoFill = "#2e9e4f";
constexpr const char* kAdversaryFill = "#d23b3b";
constexpr const char* kOtherFill = "#4a7bc8";
constexpr const char* kOutlineStroke = "#1f1f1f";
constexpr const char* kCollisionStroke = "#e01010";
constexpr const char* kOffroadStroke = "#e08a10";

const char* role_fill(Role role) {
  switch (role) {
    case Role::kEgo: return kEgoFill;
    case Role::kAdversary: return kAdversaryFill;
    default: return kOtherFill;
  }
}

// Fixed two-decimal formatting keeps the output byte-deterministic; "-0.00"
// is folded into "0.00" so equal coordinates always print identically.
void append_num(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  if (std::strcmp(buf, "-0.00") == 0) {
    out += "0.00";
  } else {
    out += buf;
  }
}

void append_attr(std::string& out, const char* name, double v) {
  out += ' ';
  out += name;
  out += "=\"";
  append_num(out, v);
  out += '"';
}

struct Viewport {
  double min_x, max_y, scale, width, height;
  double px(double x) const { return (x - min_x) * scale; }
  double py(double y) const { return (max_y - y) * scale; }
};

Viewport make_viewport(const SceneMap& map, const RenderOptions& options) {
  Viewport v;
  v.scale = options.scale;
  v.min_x = map.origin_x - options.margin;
  v.max_y = map.origin_y + map.rows * map.resolution + options.margin;
  v.width = (map.cols * map.resolution + 2.0 * options.margin) * options.scale;
  v.height = (map.rows * map.resolution + 2.0 * options.margin) * options.scale;
  return v;
}

// Drivable cells merged into per-row runs to keep the file compact.
void append_drivable_area(std::string& out, const SceneMap& map, const Viewport& v) {
  out += "<g class=\"drivable\">";
  for (int r = 0; r < map.rows; ++r) {
    int c = 0;
    while (c < map.cols) {
      if (map.sdf_at(r, c) <= 0.0) {
        ++c;
        continue;
      }
      int run_end = c;
      while (run_end + 1 < map.cols && map.sdf_at(r, run_end + 1) > 0.0) ++run_end;
      const double x0 = map.origin_x + c * map.resolution;
      const double y1 = map.origin_y + (r + 1) * map.resolution;
      out += "<rect";
      append_attr(out, "x", v.px(x0));
      append_attr(out, "y", v.py(y1));
      append_attr(out, "width", (run_end - c + 1) * map.resolution * v.scale);
      append_attr(out, "height", map.resolution * v.scale);
      out += " fill=\"";
      out += kRoadFill;
      out += "\"/>";
      c = run_end + 1;
    }
  }
  out += "</g>";
}

void append_centerlines(std::string& out, const SceneMap& map, const Viewport& v) {
  out += "<g class=\"centerlines\">";
  for (const Polyline& line : map.centerlines) {
    out += "<polyline points=\"";
    for (int i = 0; i < line.size(); ++i) {
      if (i > 0) out += ' ';
      append_num(out, v.px(line.x(i)));
      out += ',';
      append_num(out, v.py(line.y(i)));
    }
    out += "\" fill=\"none\" stroke=\"";
    out += kCenterlineStroke;
    out += "\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>";
  }
  out += "</g>";
}

void append_agent(std::string& out, const Agent& agent, const AgentState& state,
                  const Viewport& v) {
  const double half_len = 0.5 * agent.footprint.length * v.scale;
  const double half_wid = 0.5 * agent.footprint.width * v.scale;
  // World heading is counterclockwise; the svg y axis points down, so the
  // screen rotation is the negated angle.
  const double deg = -state.heading * 180.0 / M_PI;
  out += "<g class=\"agent ";
  out += role_name(agent.role);
  out += "\" transform=\"translate(";
  append_num(out, v.px(state.x));
  out += ',';
  append_num(out, v.py(state.y));
  out += ") rotate(";
  append_num(out, deg);
  out += ")\"><rect";
  append_attr(out, "x", -half_len);
  append_attr(out, "y", -half_wid);
  append_attr(out, "width", 2.0 * half_len);
  append_attr(out, "height", 2.0 * half_wid);
  out += " fill=\"";
  out += role_fill(agent.role);
  out += "\" stroke=\"";
  out += kOutlineStroke;
  out += "\" stroke-width=\"1\"/><line x1=\"0\" y1=\"0\"";
  append_attr(out, "x2", half_len);
  out += " y2=\"0\" stroke=\"";
  out += kOutlineStroke;
  out += "\" stroke-width=\"1\"/></g>";
}

void append_marker(std::string& out, const char* css_class, const char* stroke, double px,
                   double py) {
  out += "<g class=\"";
  out += css_class;
  out += "\" transform=\"translate(";
  append_num(out, px);
  out += ',';
  append_num(out, py);
  out += ")\"><circle r=\"9\" fill=\"none\" stroke=\"";
  out += stroke;
  out += "\" stroke-width=\"2\"/><path d=\"M-6,-6 L6,6 M-6,6 L6,-6\" stroke=\"";
  out += stroke;
  out += "\" stroke-width=\"2\" fill=\"none\"/></g>";
}

void append_events(std::string& out, const Scenario& scenario,
                   const std::vector<AgentState>& states, const std::vector<SimEvent>& events,
                   const Viewport& v) {
  const int n = static_cast<int>(states.size());
  for (const SimEvent& e : events) {
    if (e.agent_a < 0 || e.agent_a >= n) {
      throw ValidationError("render_frame: event agent index out of range");
    }
    const AgentState& a = states[static_cast<size_t>(e.agent_a)];
    if (e.kind == EventKind::kCollision) {
      if (e.agent_b < 0 || e.agent_b >= n) {
        throw ValidationError("render_frame: collision event needs two agents");
      }
      const AgentState& b = states[static_cast<size_t>(e.agent_b)];
      append_marker(out, "collision-marker", kCollisionStroke, v.px(0.5 * (a.x + b.x)),
                    v.py(0.5 * (a.y + b.y)));
    } else {
      append_marker(out, "offroad-marker", kOffroadStroke, v.px(a.x), v.py(a.y));
    }
  }
  (void)scenario;
}

std::string frame_path(const std::string& out_dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%03d.svg", index);
  std::string path = out_dir;
  if (!path.empty() && path.back() != '/') path += '/';
  path += name;
  return path;
}

}  // namespace

void RenderOptions::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("render: scale must be positive");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ConfigError("render: margin must be non-negative");
  }
}

std::string render_frame(const Scenario& scenario, const std::vector<AgentState>& states,
                         const std::vector<SimEvent>& events, const RenderOptions& options) {
  options.validate();
  if (states.size() != scenario.agents.size()) {
    throw ValidationError("render_frame: one state per agent required");
  }
  const Viewport v = make_viewport(scenario.map, options);

  std::string out;
  out.reserve(1 << 15);
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\"";
  append_attr(out, "width", v.width);
  append_attr(out, "height", v.height);
  out += " viewBox=\"0 0 ";
  append_num(out, v.width);
  out += ' ';
  append_num(out, v.height);
  out += "\"><rect width=\"100%\" height=\"100%\" fill=\"";
  out += kBackgroundFill;
  out += "\"/>";
  append_drivable_area(out, scenario.map, v);
  append_centerlines(out, scenario.map, v);
  out += "<g class=\"agents\">";
  for (size_t i = 0; i < scenario.agents.size(); ++i) {
    append_agent(out, scenario.agents[i], states[i], v);
  }
  out += "</g>";
  append_events(out, scenario, states, events, v);
  out += "</svg>\n";
  return out;
}

int render_scenario_frames(const Scenario& scenario, const std::string& out_dir,
                           const RenderOptions& options) {
  options.validate();
  bool all_futures = true;
  for (const Agent& agent : scenario.agents) {
    if (!agent.future) all_futures = false;
  }
  const int frames = scenario.t_hist + 1 + (all_futures ? scenario.t_future : 0);
  for (int k = 0; k < frames; ++k) {
    std::vector<AgentState> states;
    states.reserve(scenario.agents.size());
    for (const Agent& agent : scenario.agents) {
      if (k <= scenario.t_hist) {
        states.push_back(agent.past[static_cast<size_t>(k)]);
      } else {
        states.push_back((*agent.future)[static_cast<size_t>(k - scenario.t_hist - 1)]);
      }
    }
    atomic_write_file(frame_path(out_dir, k), render_frame(scenario, states, {}, options));
  }
  return frames;
}

int render_result_frames(const Scenario& scenario, const SimulationResult& result,
                         const std::string& out_dir, const RenderOptions& options) {
  options.validate();
  const int frames = static_cast<int>(result.states.size());
  for (int k = 0; k < frames; ++k) {
    std::vector<SimEvent> here;
    for (const SimEvent& e : result.events) {
      if (e.step == k) here.push_back(e);
    }
    atomic_write_file(frame_path(out_dir, k),
                      render_frame(scenario, result.states[static_cast<size_t>(k)], here,
                                   options));
  }
  return frames;
}

}  // namespace sforge
