#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "mreg/geometry.hpp"

namespace mreg {

// Shortest round-trip decimal form; identical bytes on every run.
std::string format_double(double v);

// ASCII PLY with vertex properties x y z [nx ny nz] [curvature]; lengths in mm.
// The frame tag travels as a "comment frame <Name>" header line (default Bed).
PointCloud read_ply(const std::filesystem::path& path);
PointCloud read_ply(std::istream& in);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
void write_ply(std::ostream& out, const PointCloud& cloud);

// {"source", "target", "rotation": [9 row-major], "translation": [3]}
nlohmann::json to_json(const RigidTransform& t);
RigidTransform transform_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mreg
