#include <fstream>
#include <sstream>

#include "json.hpp"

#include "pickorder/errors.hpp"
#include "pickorder/model.hpp"

namespace pickorder {

std::string checkpoint_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["layout"] = kCheckpointLayout;
  j["d"] = c.params.dim;
  j["k"] = c.config.k;
  j["tau"] = c.config.tau;
  j["params"] = std::vector<double>(c.params.values.data(),
                                    c.params.values.data() + c.params.values.size());
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const char* key : {"layout", "d", "k", "tau", "params"})
      if (!j.contains(key)) throw ParseError(std::string("checkpoint: missing field '") + key + "'");
    if (j.at("layout").get<std::string>() != kCheckpointLayout)
      throw ParseError("checkpoint: unsupported layout '" + j.at("layout").get<std::string>() + "'");
    c.config.dim = j.at("d").get<int>();
    c.config.k = j.at("k").get<int>();
    c.config.tau = j.at("tau").get<double>();
    const auto values = j.at("params").get<std::vector<double>>();
    c.params = ScorerParams(c.config.dim,
                            Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(c);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace pickorder
