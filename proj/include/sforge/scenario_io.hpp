#pragma once

#include <string>

#include "sforge/scene.hpp"

namespace sforge {

// Serializes a scenario to a compact JSON document. Doubles are written in
// shortest round-trip form, so read_scenario(write) reproduces every value
// bit for bit.
std::string scenario_to_json(const Scenario& scenario);

// Parses a scenario from a JSON document produced by scenario_to_json.
// Throws ParseError on malformed JSON, schema violations, or content that
// fails scenario validation; `source` names the origin in error messages.
Scenario scenario_from_json(const std::string& text, const std::string& source = "<string>");

// File wrappers: atomic write; NotFoundError when the file is absent.
void write_scenario_file(const Scenario& scenario, const std::string& path);
Scenario read_scenario_file(const std::string& path);

}  // namespace sforge
