#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "implan/collision.hpp"
#include "implan/kinematics.hpp"
#include "implan/motion_repr.hpp"
#include "implan/planner.hpp"
#include "implan/types.hpp"

namespace implan {

/// Formats a double so it parses back bit-exactly ("%.17g").
std::string fmt_double(double v);

/// Robot motion file: CSV rows `step,q1..qd`, one row per waypoint.
void write_motion_csv(const std::filesystem::path& path, const std::vector<VecX>& states);
std::vector<VecX> read_motion_csv(const std::filesystem::path& path);

/// Demonstrator interchange file: CSV header `t,sx,sy,sz,ex,ey,ez,hx,hy,hz`,
/// rows in time order, meters and seconds.
void write_demo_csv(const std::filesystem::path& path, const MarkerPath& frames, double dt);
struct DemoRecording {
  MarkerPath frames;
  std::vector<double> times;
  double dt() const;  // median frame period
};
DemoRecording read_demo_csv(const std::filesystem::path& path);

KinematicChain chain_from_json(const nlohmann::json& j);
nlohmann::json chain_to_json(const KinematicChain& chain);
KinematicChain load_chain(const std::filesystem::path& path);
void save_chain(const std::filesystem::path& path, const KinematicChain& chain);

Scene scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const Scene& scene);

PlannerParams planner_params_from_json(const nlohmann::json& j);
nlohmann::json planner_params_to_json(const PlannerParams& p);

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);

nlohmann::json cost_report_to_json(const CostReport& r);

nlohmann::json vecx_to_json(const VecX& v);
VecX vecx_from_json(const nlohmann::json& j);

nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Writes text with a trailing newline; parent directories are created.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace implan
