#include <fstream>
#include <sstream>

#include "json.hpp"

#include "pickorder/errors.hpp"
#include "pickorder/scene.hpp"

namespace pickorder {

namespace {

using json = nlohmann::ordered_json;

json vec_json(const auto& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

const json& field(const json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name))
    throw ParseError(where + ": missing field '" + name + "'");
  return j.at(name);
}

template <int N>
Eigen::Matrix<double, N, 1> read_vec(const json& j, const char* name, const std::string& where) {
  const json& a = field(j, name, where);
  if (!a.is_array() || a.size() != N)
    throw ParseError(where + ": field '" + name + "' must be an array of " + std::to_string(N) +
                     " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!a[i].is_number())
      throw ParseError(where + ": field '" + name + "' has a non-numeric entry");
    v[i] = a[i].get<double>();
  }
  return v;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json j;
  j["seed"] = scene.seed;
  j["difficulty"] = std::string(to_string(scene.difficulty));
  j["workspace"] = {{"min", vec_json(scene.workspace.min)}, {"max", vec_json(scene.workspace.max)}};
  j["effector_home"] = vec_json(scene.effector_home);
  json objs = json::array();
  for (const auto& o : scene.objects) {
    json jo;
    jo["id"] = o.id;
    jo["category"] = std::string(to_string(o.category));
    jo["extent"] = vec_json(o.extent);
    jo["center"] = vec_json(o.pose.center);
    jo["rpy"] = vec_json(o.pose.rpy);
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  return j.dump(2) + "\n";
}

Scene scene_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  Scene s;
  try {
    const json& seed = field(j, "seed", "scene");
    if (!seed.is_number_integer()) throw ParseError("scene: field 'seed' must be an integer");
    s.seed = seed.get<std::uint64_t>();
    s.difficulty = difficulty_from_string(field(j, "difficulty", "scene").get<std::string>());
    const json& ws = field(j, "workspace", "scene");
    s.workspace.min = read_vec<2>(ws, "min", "scene.workspace");
    s.workspace.max = read_vec<2>(ws, "max", "scene.workspace");
    s.effector_home = read_vec<3>(j, "effector_home", "scene");
    const json& objs = field(j, "objects", "scene");
    if (!objs.is_array()) throw ParseError("scene: field 'objects' must be an array");
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const std::string where = "scene.objects[" + std::to_string(i) + "]";
      const json& jo = objs[i];
      ObjectState o;
      const json& id = field(jo, "id", where);
      if (!id.is_number_integer()) throw ParseError(where + ": field 'id' must be an integer");
      o.id = id.get<int>();
      o.category = category_from_string(field(jo, "category", where).get<std::string>());
      o.extent = read_vec<3>(jo, "extent", where);
      if (!(o.extent.minCoeff() > 0.0)) throw ParseError(where + ": field 'extent' must be positive");
      o.pose = Pose(read_vec<3>(jo, "center", where), read_vec<3>(jo, "rpy", where));
      if (s.find(o.id)) throw ParseError(where + ": duplicate id " + std::to_string(o.id));
      s.objects.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  return s;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return scene_from_json(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << scene_to_json(scene);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace pickorder
