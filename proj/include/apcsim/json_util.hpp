#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "apcsim/geometry.hpp"

namespace apcsim {

using Json = nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write file: " + path);
  out << content;
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline Json load_json_file(const std::string& path) { return parse_json(read_file(path), path); }

inline Eigen::Vector3d vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json vec3_to_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

/// Pose as {"xyz": [...], "quat_wxyz": [...]}; identity quaternion if omitted.
inline Pose pose_from_json(const Json& j) {
  Pose p;
  if (j.contains("xyz")) p.position = vec3_from_json(j.at("xyz"));
  if (j.contains("quat_wxyz")) {
    const Json& q = j.at("quat_wxyz");
    if (!q.is_array() || q.size() != 4) throw ParseError("quat_wxyz must have 4 entries");
    p.orientation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
    p.orientation.normalize();
  }
  if (j.contains("rpy")) {
    Eigen::Vector3d rpy = vec3_from_json(j.at("rpy"));
    p.orientation = Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                    Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                    Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX());
  }
  return p;
}

inline Json pose_to_json(const Pose& p) {
  Eigen::Quaterniond q = p.orientation;
  if (q.w() < 0) q.coeffs() *= -1.0;  // canonical hemisphere
  return Json{{"xyz", vec3_to_json(p.position)}, {"quat_wxyz", Json::array({q.w(), q.x(), q.y(), q.z()})}};
}

}  // namespace apcsim
