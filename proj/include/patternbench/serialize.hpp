#pragma once

/**
 * \file serialize.hpp
 *
 * JSON documents: models, pattern instances (wire form), flat graphs and
 * region files.
 */

#include "patternbench/graph.hpp"
#include "patternbench/model.hpp"
#include "patternbench/patterns.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace patternbench {

/// Malformed document. `location` is "line:column" for syntax errors and a
/// JSON pointer for schema errors.
class ParseError : public Error {
public:
    ParseError(std::string location, const std::string& detail)
        : Error(location.empty() ? detail : location + ": " + detail), location_(std::move(location)) {}
    const std::string& location() const { return location_; }

private:
    std::string location_;
};

using json = nlohmann::ordered_json;

json model_to_json(const ProcessModel& model);
/// Throws ParseError on schema errors and InvariantViolation when the tree
/// breaks a structural rule. A non-sequence root is wrapped in a sequence.
ProcessModel model_from_json(const json& doc);

std::string serialize(const ProcessModel& model);
ProcessModel deserialize(const std::string& text);

json path_to_json(const NodePath& path);
NodePath path_from_json(const json& doc, const std::string& where = "");

json pattern_to_json(const PatternInstance& p);
PatternInstance pattern_from_json(const json& doc);

json graph_to_json(const FlatGraph& graph);
json primitive_to_json(const Primitive& p);
json report_to_json(const SoundnessReport& report);

/// Region id -> fragment path into the solution model.
using RegionMap = std::map<std::string, NodePath>;

json regions_to_json(const RegionMap& regions);
RegionMap regions_from_json(const json& doc);

/// Parses text, mapping syntax errors to ParseError("line:column").
json parse_json(const std::string& text);

std::string read_file(const std::string& path);

}  // namespace patternbench
