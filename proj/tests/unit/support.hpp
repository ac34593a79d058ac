#pragma once

#include "pickorder/scene.hpp"

namespace pickorder::testing {

inline ObjectState box(ObjectId id, const Vec3& center, const Vec3& extent, double yaw = 0.0,
                       Category cat = Category::SmallBox) {
  ObjectState o;
  o.id = id;
  o.category = cat;
  o.extent = extent;
  o.pose = Pose(center, {0, 0, yaw});
  return o;
}

inline ObjectState cube(ObjectId id, double x, double y, double z, double side = 0.1) {
  return box(id, {x, y, z}, {side, side, side});
}

inline Scene scene_of(std::vector<ObjectState> objects) {
  Scene s;
  s.objects = std::move(objects);
  return s;
}

}  // namespace pickorder::testing
