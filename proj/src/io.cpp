#include "mreg/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace mreg {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error(ErrorCode::Io, "cannot format number");
  return std::string(buf.data(), end);
}

namespace {

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;
};

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

PointCloud read_ply(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_ply(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

PointCloud read_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw Error(ErrorCode::Parse, "missing 'ply' magic");
  }
  PointCloud cloud;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw Error(ErrorCode::Parse, "only ASCII PLY is supported, got " + fmt);
    } else if (word == "comment") {
      std::string key, value;
      ls >> key >> value;
      if (key == "frame") cloud.frame = frame_from_string(value);
    } else if (word == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw Error(ErrorCode::Parse, "property before element");
      std::string type, name;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type;
      }
      ls >> name;
      elements.back().properties.push_back(name);
    } else if (word == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw Error(ErrorCode::Parse, "unterminated PLY header");

  for (const PlyElement& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) std::getline(in, line);
      continue;
    }
    auto column = [&](const char* name) -> int {
      for (std::size_t c = 0; c < e.properties.size(); ++c) {
        if (e.properties[c] == name) return static_cast<int>(c);
      }
      return -1;
    };
    const std::array<int, 3> xyz{column("x"), column("y"), column("z")};
    const std::array<int, 3> nxyz{column("nx"), column("ny"), column("nz")};
    const int curv = column("curvature");
    if (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0) throw Error(ErrorCode::Parse, "vertex lacks x/y/z");
    const bool has_normals = nxyz[0] >= 0 && nxyz[1] >= 0 && nxyz[2] >= 0;

    cloud.points.reserve(e.count);
    if (has_normals) cloud.normals.emplace().reserve(e.count);
    if (curv >= 0) cloud.curvatures.emplace().reserve(e.count);
    std::vector<double> values(e.properties.size());
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!std::getline(in, line)) throw Error(ErrorCode::Parse, "truncated vertex list");
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (double& v : values) {
        while (p < end && (*p == ' ' || *p == '\t')) ++p;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{}) throw Error(ErrorCode::Parse, "bad number in vertex " + std::to_string(i));
        p = next;
      }
      cloud.points.emplace_back(values[xyz[0]], values[xyz[1]], values[xyz[2]]);
      if (has_normals) {
        Vec3 n(values[nxyz[0]], values[nxyz[1]], values[nxyz[2]]);
        const double len = n.norm();
        // Unit normals are kept bit-exact; others are rescaled.
        if (!(len > 0.0)) n = Vec3::UnitZ();
        else if (std::abs(len - 1.0) > 1e-12) n /= len;
        cloud.normals->push_back(n);
      }
      if (curv >= 0) cloud.curvatures->push_back(values[curv]);
    }
  }
  cloud.validate();
  return cloud;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_ply(out, cloud);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
  cloud.validate();
  out << "ply\nformat ascii 1.0\ncomment units mm\ncomment frame " << to_string(cloud.frame) << "\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (cloud.curvatures) out << "property double curvature\n";
  out << "end_header\n";
  std::string row;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    row = format_double(p.x()) + ' ' + format_double(p.y()) + ' ' + format_double(p.z());
    if (cloud.normals) {
      const Vec3& n = (*cloud.normals)[i];
      row += ' ' + format_double(n.x()) + ' ' + format_double(n.y()) + ' ' + format_double(n.z());
    }
    if (cloud.curvatures) row += ' ' + format_double((*cloud.curvatures)[i]);
    row += '\n';
    out << row;
  }
}

nlohmann::json to_json(const RigidTransform& t) {
  nlohmann::json j;
  j["source"] = to_string(t.source());
  j["target"] = to_string(t.target());
  std::vector<double> r;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r.push_back(t.rotation()(row, col));
  }
  j["rotation"] = r;
  j["translation"] = {t.translation().x(), t.translation().y(), t.translation().z()};
  return j;
}

RigidTransform transform_from_json(const nlohmann::json& j) {
  try {
    const auto r = j.at("rotation").get<std::vector<double>>();
    const auto t = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) {
      throw Error(ErrorCode::Parse, "transform needs 9 rotation and 3 translation numbers");
    }
    Mat3 rot;
    rot << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
    return RigidTransform(rot, Vec3(t[0], t[1], t[2]),
                          frame_from_string(j.at("source").get<std::string>()),
                          frame_from_string(j.at("target").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed transform JSON: ") + e.what());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

}  // namespace mreg
