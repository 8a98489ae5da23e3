#include "sforge/scenario_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "sforge/errors.hpp"
#include "sforge/util.hpp"

namespace sforge {
namespace {

using nlohmann::json;

json track_to_json(const AgentTrack& track) {
  json out = json::array();
  for (const AgentState& s : track) out.push_back({s.x, s.y, s.heading, s.speed});
  return out;
}

AgentTrack track_from_json(const json& j) {
  AgentTrack track;
  for (const json& row : j) {
    if (!row.is_array() || row.size() != 4) {
      throw ValidationError("track rows must be [x, y, heading, speed]");
    }
    AgentState s;
    s.x = row[0].get<double>();
    s.y = row[1].get<double>();
    s.heading = row[2].get<double>();
    s.speed = row[3].get<double>();
    track.push_back(s);
  }
  return track;
}

Scenario scenario_from_parsed(const json& j) {
  Scenario sc;
  sc.dt = j.at("dt").get<double>();
  sc.t_hist = j.at("t_hist").get<int>();
  sc.t_future = j.at("t_future").get<int>();

  const json& jm = j.at("map");
  const json& origin = jm.at("origin");
  if (!origin.is_array() || origin.size() != 2) {
    throw ValidationError("map.origin must be [x, y]");
  }
  sc.map.origin_x = origin[0].get<double>();
  sc.map.origin_y = origin[1].get<double>();
  sc.map.resolution = jm.at("resolution").get<double>();
  sc.map.rows = jm.at("rows").get<int>();
  sc.map.cols = jm.at("cols").get<int>();
  sc.map.sdf = jm.at("sdf").get<std::vector<double>>();
  for (const json& jline : jm.at("centerlines")) {
    std::vector<double> xs, ys;
    for (const json& pt : jline) {
      if (!pt.is_array() || pt.size() != 2) {
        throw ValidationError("centerline points must be [x, y]");
      }
      xs.push_back(pt[0].get<double>());
      ys.push_back(pt[1].get<double>());
    }
    sc.map.centerlines.emplace_back(std::move(xs), std::move(ys));
  }

  for (const json& ja : j.at("agents")) {
    Agent agent;
    agent.id = ja.at("id").get<int>();
    agent.role = role_from_name(ja.at("role").get<std::string>());
    agent.footprint.length = ja.at("length").get<double>();
    agent.footprint.width = ja.at("width").get<double>();
    agent.past = track_from_json(ja.at("past"));
    if (ja.contains("future")) agent.future = track_from_json(ja.at("future"));
    sc.agents.push_back(std::move(agent));
  }
  sc.validate_and_normalize();
  return sc;
}

}  // namespace

std::string scenario_to_json(const Scenario& scenario) {
  json jm;
  jm["origin"] = {scenario.map.origin_x, scenario.map.origin_y};
  jm["resolution"] = scenario.map.resolution;
  jm["rows"] = scenario.map.rows;
  jm["cols"] = scenario.map.cols;
  jm["sdf"] = scenario.map.sdf;
  json jlines = json::array();
  for (const Polyline& line : scenario.map.centerlines) {
    json jline = json::array();
    for (int i = 0; i < line.size(); ++i) jline.push_back({line.x(i), line.y(i)});
    jlines.push_back(std::move(jline));
  }
  jm["centerlines"] = std::move(jlines);

  json jagents = json::array();
  for (const Agent& agent : scenario.agents) {
    json ja;
    ja["id"] = agent.id;
    ja["role"] = role_name(agent.role);
    ja["length"] = agent.footprint.length;
    ja["width"] = agent.footprint.width;
    ja["past"] = track_to_json(agent.past);
    if (agent.future) ja["future"] = track_to_json(*agent.future);
    jagents.push_back(std::move(ja));
  }

  json j;
  j["dt"] = scenario.dt;
  j["t_hist"] = scenario.t_hist;
  j["t_future"] = scenario.t_future;
  j["map"] = std::move(jm);
  j["agents"] = std::move(jagents);
  return j.dump();
}

Scenario scenario_from_json(const std::string& text, const std::string& source) {
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(source, e.what());
  }
  try {
    return scenario_from_parsed(parsed);
  } catch (const json::exception& e) {
    throw ParseError(source, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(source, e.what());
  }
}

void write_scenario_file(const Scenario& scenario, const std::string& path) {
  atomic_write_file(path, scenario_to_json(scenario));
}

Scenario read_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("scenario file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str(), path);
}

}  // namespace sforge
