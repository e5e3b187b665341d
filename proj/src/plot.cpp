#include "implan/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <vector>

#include "implan/collision.hpp"
#include "implan/experiment.hpp"
#include "implan/io.hpp"
#include "implan/kinematics.hpp"

namespace implan {

namespace fs = std::filesystem;

namespace {

constexpr double kWorldHalf = 0.62;  // plotted world: [-kWorldHalf, kWorldHalf]^2
constexpr int kCanvas = 640;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double px(double world_x) { return (world_x + kWorldHalf) / (2 * kWorldHalf) * kCanvas; }
double py(double world_y) { return (kWorldHalf - world_y) / (2 * kWorldHalf) * kCanvas; }

struct PlottedMotion {
  int id = 0;
  std::vector<VecX> states;
  bool collides = false;
};

}  // namespace

void cmd_export_plot(const fs::path& run_dir, int iteration, const std::string& kind,
                     const fs::path& svg_path, const fs::path& csv_path) {
  if (kind != "endpoints" && kind != "paths")
    throw ConfigError("plot kind must be 'endpoints' or 'paths'");
  const auto run = load_json(run_dir / "run.json");
  const ExperimentConfig cfg = experiment_config_from_json(run.at("config"), run_dir);
  const fs::path iter_dir = run_dir / ("iter_" + std::to_string(iteration));
  if (!fs::exists(iter_dir))
    throw ConfigError("run has no iteration " + std::to_string(iteration));

  std::vector<fs::path> files;
  const fs::path motions_dir = iter_dir / "motions";
  if (fs::exists(motions_dir))
    for (const auto& e : fs::directory_iterator(motions_dir))
      if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<PlottedMotion> motions;
  for (std::size_t i = 0; i < files.size(); ++i) {
    PlottedMotion m;
    m.id = static_cast<int>(i);
    m.states = read_motion_csv(files[i]);
    m.collides = !cfg.scene.empty() &&
                 motion_in_collision(cfg.chain, m.states, cfg.scene,
                                     cfg.planner.collision_resolution);
    motions.push_back(std::move(m));
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\""
      << kCanvas << "\" viewBox=\"0 0 " << kCanvas << " " << kCanvas << "\">\n";
  svg << "  <rect width=\"" << kCanvas << "\" height=\"" << kCanvas
      << "\" fill=\"white\"/>\n";
  svg << "  <circle cx=\"" << num(px(0)) << "\" cy=\"" << num(py(0))
      << "\" r=\"3\" fill=\"black\"/>\n";  // chain base
  for (const auto& s : cfg.scene.spheres) {
    svg << "  <circle cx=\"" << num(px(s.center.x())) << "\" cy=\"" << num(py(s.center.y()))
        << "\" r=\"" << num(s.radius / (2 * kWorldHalf) * kCanvas)
        << "\" fill=\"none\" stroke=\"green\" stroke-width=\"2\"/>\n";
  }

  std::ostringstream csv;
  if (kind == "endpoints") {
    csv << "motion,collides,shoulder_x,shoulder_y,elbow_x,elbow_y,hand_x,hand_y\n";
    for (const auto& m : motions) {
      const Markers mk = forward_kinematics(cfg.chain, m.states.back());
      const char* color = m.collides ? "red" : "steelblue";
      svg << "  <polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"" << num(px(mk.shoulder.x())) << ","
          << num(py(mk.shoulder.y())) << " " << num(px(mk.elbow.x())) << ","
          << num(py(mk.elbow.y())) << " " << num(px(mk.hand.x())) << ","
          << num(py(mk.hand.y())) << "\"/>\n";
      svg << "  <circle cx=\"" << num(px(mk.hand.x())) << "\" cy=\"" << num(py(mk.hand.y()))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      csv << m.id << ',' << (m.collides ? 1 : 0);
      for (const Vec3* p : {&mk.shoulder, &mk.elbow, &mk.hand})
        csv << ',' << fmt_double(p->x()) << ',' << fmt_double(p->y());
      csv << "\n";
    }
  } else {
    csv << "motion,collides,step,hand_x,hand_y\n";
    for (const auto& m : motions) {
      const char* color = m.collides ? "red" : "steelblue";
      svg << "  <polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1\" opacity=\"0.7\" points=\"";
      for (std::size_t s = 0; s < m.states.size(); ++s) {
        const Markers mk = forward_kinematics(cfg.chain, m.states[s]);
        if (s > 0) svg << ' ';
        svg << num(px(mk.hand.x())) << ',' << num(py(mk.hand.y()));
        csv << m.id << ',' << (m.collides ? 1 : 0) << ',' << s << ','
            << fmt_double(mk.hand.x()) << ',' << fmt_double(mk.hand.y()) << "\n";
      }
      svg << "\"/>\n";
    }
  }
  svg << "</svg>";

  write_text(svg_path, svg.str());
  write_text(csv_path, csv.str());
}

}  // namespace implan
