#include "implan/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace implan {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("malformed number '" + s + "' in " + path.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_motion_csv(const fs::path& path, const std::vector<VecX>& states) {
  if (states.size() < 2) throw ContractError("motion needs at least two states");
  auto out = open_out(path);
  out << "step";
  for (Eigen::Index j = 0; j < states.front().size(); ++j) out << ",q" << (j + 1);
  out << "\n";
  for (std::size_t i = 0; i < states.size(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < states[i].size(); ++j)
      out << ',' << fmt_double(states[i][j]);
    out << "\n";
  }
}

std::vector<VecX> read_motion_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read motion file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,", 0) != 0)
    throw ConfigError("missing motion CSV header in " + path.string());
  std::vector<VecX> states;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) throw ConfigError("short motion row in " + path.string());
    VecX q(static_cast<Eigen::Index>(fields.size()) - 1);
    for (std::size_t j = 1; j < fields.size(); ++j)
      q[static_cast<Eigen::Index>(j - 1)] = parse_double(fields[j], path);
    states.push_back(std::move(q));
  }
  if (states.size() < 2) throw ConfigError("motion file too short: " + path.string());
  return states;
}

void write_demo_csv(const fs::path& path, const MarkerPath& frames, double dt) {
  if (frames.size() < 2) throw ContractError("motion needs at least two states");
  auto out = open_out(path);
  out << "t,sx,sy,sz,ex,ey,ez,hx,hy,hz\n";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out << fmt_double(static_cast<double>(i) * dt);
    const auto& m = frames[i];
    for (const Vec3* p : {&m.shoulder, &m.elbow, &m.hand})
      for (int c = 0; c < 3; ++c) out << ',' << fmt_double((*p)[c]);
    out << "\n";
  }
}

DemoRecording read_demo_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read demo file " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("empty demo file " + path.string());
  if (split_csv_line(line) != std::vector<std::string>{"t", "sx", "sy", "sz", "ex", "ey",
                                                       "ez", "hx", "hy", "hz"})
    throw ConfigError("bad demo CSV header in " + path.string());
  DemoRecording rec;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 10) throw ConfigError("bad demo row in " + path.string());
    rec.times.push_back(parse_double(fields[0], path));
    Markers m;
    for (int c = 0; c < 3; ++c) {
      m.shoulder[c] = parse_double(fields[1 + c], path);
      m.elbow[c] = parse_double(fields[4 + c], path);
      m.hand[c] = parse_double(fields[7 + c], path);
    }
    rec.frames.push_back(m);
  }
  if (rec.frames.size() < 2) throw ConfigError("demo file too short: " + path.string());
  return rec;
}

double DemoRecording::dt() const {
  std::vector<double> deltas;
  for (std::size_t i = 1; i < times.size(); ++i) deltas.push_back(times[i] - times[i - 1]);
  if (deltas.empty()) return 0.0;
  std::sort(deltas.begin(), deltas.end());
  return deltas[deltas.size() / 2];
}

KinematicChain chain_from_json(const nlohmann::json& j) {
  std::vector<JointDescriptor> joints;
  for (const auto& je : j.at("joints")) {
    JointDescriptor d;
    d.axis = Vec3(je.at("axis").at(0), je.at("axis").at(1), je.at("axis").at(2));
    d.lo = je.at("limits").at(0);
    d.hi = je.at("limits").at(1);
    joints.push_back(d);
  }
  std::vector<Vec3> links;
  for (const auto& le : j.at("links"))
    links.emplace_back(le.at(0), le.at(1), le.at(2));
  const auto& mk = j.at("markers");
  return KinematicChain(std::move(joints), std::move(links),
                        {mk.at(0).get<int>(), mk.at(1).get<int>(), mk.at(2).get<int>()});
}

nlohmann::json chain_to_json(const KinematicChain& chain) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& jd : chain.joints())
    joints.push_back({{"axis", {jd.axis.x(), jd.axis.y(), jd.axis.z()}},
                      {"limits", {jd.lo, jd.hi}}});
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : chain.links()) links.push_back({l.x(), l.y(), l.z()});
  return {{"joints", joints},
          {"links", links},
          {"markers", {chain.marker_indices()[0], chain.marker_indices()[1],
                       chain.marker_indices()[2]}}};
}

KinematicChain load_chain(const fs::path& path) { return chain_from_json(load_json(path)); }

void save_chain(const fs::path& path, const KinematicChain& chain) {
  save_json(path, chain_to_json(chain));
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  for (const auto& s : j.value("spheres", nlohmann::json::array())) {
    Sphere sp;
    sp.center = Vec3(s.at("center").at(0), s.at("center").at(1), s.at("center").at(2));
    sp.radius = s.at("radius");
    scene.spheres.push_back(sp);
  }
  scene.link_radius = j.value("link_radius", 0.03);
  scene.validate();
  return scene;
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json spheres = nlohmann::json::array();
  for (const auto& s : scene.spheres)
    spheres.push_back(
        {{"center", {s.center.x(), s.center.y(), s.center.z()}}, {"radius", s.radius}});
  return {{"spheres", spheres}, {"link_radius", scene.link_radius}};
}

PlannerParams planner_params_from_json(const nlohmann::json& j) {
  PlannerParams p;
  p.step_max = j.value("step_max", p.step_max);
  p.goal_bias = j.value("goal_bias", p.goal_bias);
  p.collision_resolution = j.value("collision_resolution", p.collision_resolution);
  p.max_nodes = j.value("max_nodes", p.max_nodes);
  p.eval_budget = j.value("eval_budget", p.eval_budget);
  p.rewire_factor = j.value("rewire_factor", p.rewire_factor);
  const std::string mode = j.value("rewire_mode", "full");
  if (mode == "full")
    p.rewire_mode = RewireMode::full;
  else if (mode == "frozen")
    p.rewire_mode = RewireMode::frozen;
  else
    throw ConfigError("unknown rewire_mode: " + mode);
  return p;
}

nlohmann::json planner_params_to_json(const PlannerParams& p) {
  return {{"step_max", p.step_max},
          {"goal_bias", p.goal_bias},
          {"collision_resolution", p.collision_resolution},
          {"max_nodes", p.max_nodes},
          {"eval_budget", p.eval_budget},
          {"rewire_factor", p.rewire_factor},
          {"rewire_mode", p.rewire_mode == RewireMode::full ? "full" : "frozen"}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.clamp_eps = j.value("clamp_eps", c.clamp_eps);
  const std::string mode = j.value("loss_mode", "bce");
  if (mode == "bce")
    c.loss_mode = LossMode::bce;
  else if (mode == "paper_eq1")
    c.loss_mode = LossMode::paper_eq1;
  else
    throw ConfigError("unknown loss_mode: " + mode);
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"clamp_eps", c.clamp_eps},
          {"loss_mode", c.loss_mode == LossMode::bce ? "bce" : "paper_eq1"}};
}

nlohmann::json cost_report_to_json(const CostReport& r) {
  nlohmann::json j = {{"cost", r.cost},
                      {"length", r.length},
                      {"tree_nodes", r.tree_nodes},
                      {"discriminator_evals", r.discriminator_evals},
                      {"seed", r.seed}};
  j["final_score"] = r.final_score ? nlohmann::json(*r.final_score) : nlohmann::json();
  return j;
}

nlohmann::json vecx_to_json(const VecX& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VecX vecx_from_json(const nlohmann::json& j) {
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i);
  return v;
}

nlohmann::json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void save_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2));
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text << "\n";
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace implan
