#include "tsdf_mcl/geometry.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace tsdf_mcl {

Trajectory read_trajectory(std::istream& in) {
  Trajectory trajectory;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    StampedPose sample;
    double x, y, z, roll, pitch, yaw;
    if (!(fields >> sample.stamp)) continue;
    if (!(fields >> x >> y >> z >> roll >> pitch >> yaw)) {
      throw std::runtime_error("trajectory line " + std::to_string(line_no) +
                               ": expected `t x y z roll pitch yaw`");
    }
    sample.pose = Pose6D(x, y, z, roll, pitch, yaw);
    trajectory.push_back(sample);
  }
  return trajectory;
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path);
  return read_trajectory(in);
}

void write_trajectory(std::ostream& out, const Trajectory& trajectory) {
  out << std::setprecision(17);
  for (const auto& s : trajectory) {
    const auto& p = s.pose;
    out << s.stamp << ' ' << p.x << ' ' << p.y << ' ' << p.z << ' '
        << p.roll << ' ' << p.pitch << ' ' << p.yaw << '\n';
  }
}

}  // namespace tsdf_mcl
