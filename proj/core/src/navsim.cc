/* Copyright 2026 The ulrseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "ulrseg/navsim.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ulrseg/datakit.h"
#include "ulrseg/image_io.h"

namespace ulrseg::navsim {

namespace {

using Json = nlohmann::ordered_json;

uint64_t Mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Cell Forward(Heading h) {
  switch (h) {
    case Heading::kNorth: return {-1, 0};
    case Heading::kEast: return {0, 1};
    case Heading::kSouth: return {1, 0};
    case Heading::kWest: return {0, -1};
  }
  return {0, 0};
}

Cell RightOf(Heading h) {
  return Forward(static_cast<Heading>((static_cast<int>(h) + 1) % 4));
}

Heading TurnRight(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 1) % 4);
}

constexpr Cell kSteps[4] = {{-1, 0}, {0, 1}, {1, 0}, {0, -1}};

int Index(const World& w, Cell p) { return p.r * w.cols + p.c; }

// Breadth-first search over floor cells from `from`; parent index per cell
// (-1 when unreached, self for the source).
std::vector<int> Bfs(const World& w, Cell from, std::vector<int>* dist = nullptr) {
  std::vector<int> parent(w.cells.size(), -1);
  std::vector<int> d(w.cells.size(), -1);
  if (!w.IsFloor(from)) return parent;
  std::deque<Cell> q{from};
  parent[Index(w, from)] = Index(w, from);
  d[Index(w, from)] = 0;
  while (!q.empty()) {
    const Cell p = q.front();
    q.pop_front();
    for (const Cell& s : kSteps) {
      const Cell n{p.r + s.r, p.c + s.c};
      if (!w.IsFloor(n) || parent[Index(w, n)] >= 0) continue;
      parent[Index(w, n)] = Index(w, p);
      d[Index(w, n)] = d[Index(w, p)] + 1;
      q.push_back(n);
    }
  }
  if (dist) *dist = std::move(d);
  return parent;
}

// First move on a shortest floor path from `from` to `goal`.
std::optional<Cell> NextStep(const World& w, Cell from, Cell goal) {
  if (!w.IsFloor(goal) || from == goal) return std::nullopt;
  const auto parent = Bfs(w, from);
  int cur = Index(w, goal);
  if (parent[cur] < 0) return std::nullopt;
  const int src = Index(w, from);
  while (parent[cur] != src) cur = parent[cur];
  return Cell{cur / w.cols, cur % w.cols};
}

Heading HeadingOf(Cell delta) {
  if (std::abs(delta.r) >= std::abs(delta.c)) {
    return delta.r < 0 ? Heading::kNorth : Heading::kSouth;
  }
  return delta.c > 0 ? Heading::kEast : Heading::kWest;
}

void MoveTo(NavState& s, Cell next) {
  s.pose.heading = HeadingOf({next.r - s.pose.cell.r, next.c - s.pose.cell.c});
  s.pose.cell = next;
  s.visited.insert(next);
}

std::vector<std::string> Tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

int ToInt(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("world: bad integer '" + s + "' in " + what);
  }
}

}  // namespace

char HeadingChar(Heading h) { return "NESW"[static_cast<int>(h)]; }

Heading ParseHeading(char c) {
  switch (c) {
    case 'N': return Heading::kNorth;
    case 'E': return Heading::kEast;
    case 'S': return Heading::kSouth;
    case 'W': return Heading::kWest;
  }
  throw InvalidArgument(std::string("unknown heading '") + c + "'");
}

int32_t World::At(Cell p) const {
  return Inside(p) ? cells[static_cast<size_t>(p.r * cols + p.c)] : wall_class;
}

std::string World::ClassName(int32_t cls) const {
  const auto it = class_names.find(cls);
  return it != class_names.end() ? it->second : "class " + std::to_string(cls);
}

void World::Validate() const {
  if (rows <= 0 || cols <= 0 || cells.size() != static_cast<size_t>(rows * cols)) {
    throw InvalidArgument("world " + name + ": bad grid size");
  }
  std::optional<Cell> first;
  int floor_cells = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (IsFloor({r, c})) {
        if (!first) first = Cell{r, c};
        ++floor_cells;
      }
  if (!first) throw InvalidArgument("world " + name + ": no floor");
  std::vector<int> dist;
  Bfs(*this, *first, &dist);
  const auto reached = std::count_if(dist.begin(), dist.end(), [](int d) { return d >= 0; });
  if (reached != floor_cells) {
    throw InvalidArgument("world " + name + ": floor is not connected");
  }
  if (starts.empty()) throw InvalidArgument("world " + name + ": no start pose");
  for (const auto& s : starts) {
    if (!IsFloor(s.cell)) {
      throw InvalidArgument("world " + name + ": start pose not on floor");
    }
  }
  if (targets.empty()) throw InvalidArgument("world " + name + ": no targets");
  for (int32_t t : targets) {
    if (t == floor_class || t == wall_class ||
        std::find(cells.begin(), cells.end(), t) == cells.end()) {
      throw InvalidArgument("world " + name + ": target class " +
                            std::to_string(t) + " has no cells");
    }
  }
}

World ParseWorld(const std::string& text) {
  World w;
  std::map<char, int32_t> legend;
  std::istringstream in(text);
  std::string line;
  bool grid = false;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (grid) {
      if (line.empty()) continue;
      rows.push_back(line);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto t = Tokens(line);
    const std::string& key = t[0];
    if (key == "grid") {
      grid = true;
    } else if (key == "name" && t.size() == 2) {
      w.name = t[1];
    } else if (key == "size" && t.size() == 3) {
      w.rows = ToInt(t[1], "size");
      w.cols = ToInt(t[2], "size");
    } else if (key == "seed" && t.size() == 2) {
      w.seed = static_cast<uint64_t>(std::stoull(t[1]));
    } else if (key == "legend" && t.size() >= 3 && t[1].size() == 1) {
      const int32_t cls = ToInt(t[2], "legend");
      legend[t[1][0]] = cls;
      if (t.size() >= 4) w.class_names[cls] = t[3];
      if (t.size() >= 4 && t[3] == "floor") w.floor_class = cls;
      if (t.size() >= 4 && t[3] == "wall") w.wall_class = cls;
    } else if (key == "start" && t.size() == 4 && t[3].size() == 1) {
      w.starts.push_back({{ToInt(t[1], "start"), ToInt(t[2], "start")},
                          ParseHeading(t[3][0])});
    } else if (key == "targets" && t.size() >= 2) {
      for (size_t i = 1; i < t.size(); ++i) w.targets.push_back(ToInt(t[i], "targets"));
    } else {
      throw InvalidArgument("world: unrecognized header line '" + line + "'");
    }
  }
  if (!grid) throw InvalidArgument("world: missing grid section");
  if (static_cast<int>(rows.size()) != w.rows) {
    throw InvalidArgument("world " + w.name + ": expected " +
                          std::to_string(w.rows) + " grid rows, found " +
                          std::to_string(rows.size()));
  }
  w.cells.reserve(static_cast<size_t>(w.rows * w.cols));
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != w.cols) {
      throw InvalidArgument("world " + w.name + ": grid row has wrong width");
    }
    for (char ch : row) {
      const auto it = legend.find(ch);
      if (it == legend.end()) {
        throw InvalidArgument(std::string("world: character '") + ch +
                              "' not in legend");
      }
      w.cells.push_back(it->second);
    }
  }
  w.Validate();
  return w;
}

World LoadWorld(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read world " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  World w = ParseWorld(ss.str());
  if (w.name.empty()) w.name = path.stem().string();
  return w;
}

std::string FormatWorld(const World& w) {
  // Fixed glyphs for the first classes, letters after that.
  static const std::string kGlyphs = "#.SCTPabcdefghijklmnopqrstuvwxyz";
  std::map<int32_t, char> glyph;
  for (int32_t v : w.cells) {
    if (glyph.count(v)) continue;
    if (v < 0 || v >= static_cast<int32_t>(kGlyphs.size())) {
      throw InvalidArgument("world: class " + std::to_string(v) + " has no glyph");
    }
    glyph[v] = kGlyphs[static_cast<size_t>(v)];
  }
  std::ostringstream out;
  out << "name " << (w.name.empty() ? "world" : w.name) << "\n";
  out << "size " << w.rows << " " << w.cols << "\n";
  out << "seed " << w.seed << "\n";
  for (const auto& [cls, ch] : glyph) {
    out << "legend " << ch << " " << cls;
    if (cls == w.floor_class) {
      out << " floor";
    } else if (cls == w.wall_class) {
      out << " wall";
    } else if (w.class_names.count(cls)) {
      out << " " << w.class_names.at(cls);
    }
    out << "\n";
  }
  for (const auto& s : w.starts) {
    out << "start " << s.cell.r << " " << s.cell.c << " " << HeadingChar(s.heading) << "\n";
  }
  out << "targets";
  for (int32_t t : w.targets) out << " " << t;
  out << "\ngrid\n";
  for (int r = 0; r < w.rows; ++r) {
    for (int c = 0; c < w.cols; ++c) out << glyph[w.At({r, c})];
    out << "\n";
  }
  return out.str();
}

std::vector<World> LoadWorldDir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<World> out;
  for (const auto& f : files) out.push_back(LoadWorld(f));
  return out;
}

int64_t NavConfig::IntervalPixels() const {
  return interval > 0 ? interval : std::max<int64_t>(1, image_size / 8);
}

double NavConfig::DevThresholdPixels() const {
  return dev_threshold_cells * static_cast<double>(image_size) / view_width;
}

void NavConfig::Validate() const {
  if (view_depth < 1 || view_width < 1) throw InvalidArgument("nav view must be non-empty");
  if (image_size < view_depth || image_size < view_width) {
    throw InvalidArgument("nav image_size smaller than the view grid");
  }
  if (interval < 0) throw InvalidArgument("nav interval must be >= 0");
  if (dev_threshold_cells < 0) throw InvalidArgument("nav dev_threshold must be >= 0");
  if (max_steps < 1) throw InvalidArgument("nav max_steps must be >= 1");
}

Cell PixelToCell(const Pose& pose, const Pixel& px, const NavConfig& cfg) {
  const int row = static_cast<int>(px.y * cfg.view_depth / cfg.image_size);
  const int col = static_cast<int>(px.x * cfg.view_width / cfg.image_size);
  const int depth = cfg.view_depth - row;
  const int lateral = col - cfg.view_width / 2;
  const Cell f = Forward(pose.heading);
  const Cell r = RightOf(pose.heading);
  return {pose.cell.r + depth * f.r + lateral * r.r,
          pose.cell.c + depth * f.c + lateral * r.c};
}

std::vector<Cell> FrustumCells(const Pose& pose, const NavConfig& cfg) {
  const Cell f = Forward(pose.heading);
  const Cell r = RightOf(pose.heading);
  std::vector<Cell> out;
  for (int d = 1; d <= cfg.view_depth; ++d)
    for (int l = -(cfg.view_width / 2); l < cfg.view_width - cfg.view_width / 2; ++l)
      out.push_back({pose.cell.r + d * f.r + l * r.r, pose.cell.c + d * f.c + l * r.c});
  return out;
}

View RenderView(const World& world, const Pose& pose, const NavConfig& cfg) {
  cfg.Validate();
  const int64_t s = cfg.image_size;
  View v{Tensor({3, s, s}), LabelMap(s, s)};
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      const Cell cell = PixelToCell(pose, {y, x}, cfg);
      const int32_t cls = world.At(cell);
      v.label.at(y, x) = cls;
      // Per-cell brightness variation so regions are not perfectly flat.
      const uint64_t h = Mix(world.seed ^ Mix(static_cast<uint64_t>(cell.r) * 1000003ULL +
                                              static_cast<uint64_t>(cell.c)));
      const double gain = 1.0 + 0.08 * (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5);
      const auto color = datakit::RegionColor(cls);
      for (int64_t c = 0; c < 3; ++c) {
        v.hr[(c * s + y) * s + x] =
            QuantizeToByte(color[static_cast<size_t>(c)] * gain) / 255.0;
      }
    }
  return v;
}

std::vector<Pixel> PlanFloorWaypoints(const LabelMap& seg, int32_t floor_class,
                                      int64_t interval) {
  if (interval < 1) throw InvalidArgument("waypoint interval must be >= 1");
  std::vector<Pixel> out;
  const int64_t w = seg.width();
  const int64_t center = w / 2;
  for (int64_t y = seg.height() - 1; y >= 0; y -= interval) {
    int64_t best_l = -1, best_r = -1, best_d = std::numeric_limits<int64_t>::max();
    for (int64_t x = 0; x < w;) {
      if (seg.at(y, x) != floor_class) {
        ++x;
        continue;
      }
      const int64_t l = x;
      while (x < w && seg.at(y, x) == floor_class) ++x;
      const int64_t r = x - 1;
      const int64_t d = center < l ? l - center : (center > r ? center - r : 0);
      if (d < best_d) {
        best_d = d;
        best_l = l;
        best_r = r;
      }
    }
    if (best_l >= 0) out.push_back({y, (best_l + best_r) / 2});
  }
  return out;
}

std::vector<Pixel> DetectBranchPoints(const LabelMap& seg, int32_t floor_class,
                                      double dev_threshold) {
  const int64_t h = seg.height(), w = seg.width();
  std::vector<double> ys, lefts, rights;
  for (int64_t y = 0; y < h; ++y) {
    int64_t l = -1, r = -1;
    for (int64_t x = 0; x < w; ++x)
      if (seg.at(y, x) == floor_class) {
        if (l < 0) l = x;
        r = x;
      }
    if (l < 0) continue;
    ys.push_back(static_cast<double>(y));
    lefts.push_back(static_cast<double>(l));
    rights.push_back(static_cast<double>(r));
  }
  if (ys.size() < 2) return {};
  // x = a + b y by ordinary least squares.
  auto fit = [&](const std::vector<double>& xs) {
    const double n = static_cast<double>(ys.size());
    double my = 0, mx = 0;
    for (size_t i = 0; i < ys.size(); ++i) {
      my += ys[i];
      mx += xs[i];
    }
    my /= n;
    mx /= n;
    double syy = 0, sxy = 0;
    for (size_t i = 0; i < ys.size(); ++i) {
      syy += (ys[i] - my) * (ys[i] - my);
      sxy += (ys[i] - my) * (xs[i] - mx);
    }
    const double b = syy > 0 ? sxy / syy : 0.0;
    return std::pair<double, double>{mx - b * my, b};
  };
  const auto [la, lb] = fit(lefts);
  const auto [ra, rb] = fit(rights);
  std::vector<char> flag(static_cast<size_t>(h * w), 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      if (seg.at(y, x) != floor_class) continue;
      const double yd = static_cast<double>(y), xd = static_cast<double>(x);
      if (xd < la + lb * yd - dev_threshold || xd > ra + rb * yd + dev_threshold) {
        flag[static_cast<size_t>(y * w + x)] = 1;
      }
    }
  std::vector<Pixel> out;
  std::vector<char> seen(flag.size(), 0);
  for (int64_t i = 0; i < h * w; ++i) {
    if (!flag[static_cast<size_t>(i)] || seen[static_cast<size_t>(i)]) continue;
    std::vector<int64_t> members;
    std::deque<int64_t> q{i};
    seen[static_cast<size_t>(i)] = 1;
    while (!q.empty()) {
      const int64_t p = q.front();
      q.pop_front();
      members.push_back(p);
      const int64_t y = p / w, x = p % w;
      const int64_t nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int64_t k = n[0] * w + n[1];
        if (flag[static_cast<size_t>(k)] && !seen[static_cast<size_t>(k)]) {
          seen[static_cast<size_t>(k)] = 1;
          q.push_back(k);
        }
      }
    }
    double cy = 0, cx = 0;
    for (int64_t p : members) {
      cy += static_cast<double>(p / w);
      cx += static_cast<double>(p % w);
    }
    cy /= static_cast<double>(members.size());
    cx /= static_cast<double>(members.size());
    std::sort(members.begin(), members.end());
    int64_t best = members[0];
    double best_d = std::numeric_limits<double>::infinity();
    for (int64_t p : members) {
      const double d = std::hypot(static_cast<double>(p / w) - cy,
                                  static_cast<double>(p % w) - cx);
      if (d < best_d) {
        best_d = d;
        best = p;
      }
    }
    out.push_back({best / w, best % w});
  }
  return out;
}

double TargetFraction(const LabelMap& seg, int32_t target_class) {
  if (seg.size() == 0) throw InvalidArgument("empty segmentation");
  const auto n = std::count(seg.data().begin(), seg.data().end(), target_class);
  return static_cast<double>(n) / static_cast<double>(seg.size());
}

bool CheckSuccess(const LabelMap& seg, int32_t target_class) {
  return TargetFraction(seg, target_class) > 0.40;
}

std::string ModeName(Mode m) {
  switch (m) {
    case Mode::kCoverage: return "coverage";
    case Mode::kFloorNav: return "floor_nav";
    case Mode::kObjectGoal: return "object_goal";
    case Mode::kDoneSuccess: return "done_success";
    case Mode::kDoneFailure: return "done_failure";
  }
  return "unknown";
}

NavState InitialState(const Pose& start, int32_t target, const NavConfig& cfg) {
  NavState s;
  s.pose = start;
  s.target = target;
  s.max_steps = cfg.max_steps;
  s.visited.insert(start.cell);
  return s;
}

namespace {

void PushBranch(NavState& s, Cell c) {
  if (s.visited.count(c)) return;
  if (std::find(s.branches.begin(), s.branches.end(), c) != s.branches.end()) return;
  s.branches.push_back(c);
}

// Waypoints and branch cells seen in the current view during a scan.
void Harvest(NavState& s, const LabelMap& seg, const World& world, const NavConfig& cfg) {
  std::vector<Cell> wps;
  for (const Pixel& p : PlanFloorWaypoints(seg, world.floor_class, cfg.IntervalPixels())) {
    const Cell c = PixelToCell(s.pose, p, cfg);
    if (s.visited.count(c) || std::find(wps.begin(), wps.end(), c) != wps.end()) continue;
    wps.push_back(c);
  }
  s.scan_waypoints.push_back(std::move(wps));
  for (const Pixel& p : DetectBranchPoints(seg, world.floor_class, cfg.DevThresholdPixels())) {
    s.scan_branches.push_back(PixelToCell(s.pose, p, cfg));
  }
}

// The heading that showed the most new floor becomes the waypoint queue;
// everything else seen is kept as unexplored branches.
void FinishScan(NavState& s) {
  size_t best = 0;
  for (size_t i = 1; i < s.scan_waypoints.size(); ++i)
    if (s.scan_waypoints[i].size() > s.scan_waypoints[best].size()) best = i;
  for (size_t i = s.scan_waypoints.size(); i-- > 0;) {
    if (i == best) continue;
    const auto& w = s.scan_waypoints[i];
    for (auto it = w.rbegin(); it != w.rend(); ++it) PushBranch(s, *it);
  }
  for (const Cell& c : s.scan_branches) PushBranch(s, c);
  if (!s.scan_waypoints.empty()) {
    s.waypoints.assign(s.scan_waypoints[best].begin(), s.scan_waypoints[best].end());
  }
  s.scan_waypoints.clear();
  s.scan_branches.clear();
  s.scan_turns = 0;
}

// Plurality label of each view cell's pixels.
std::vector<std::pair<Cell, int32_t>> CellLabels(const LabelMap& seg, const Pose& pose,
                                                 const NavConfig& cfg) {
  std::map<Cell, std::map<int32_t, int>> votes;
  for (int64_t y = 0; y < seg.height(); ++y)
    for (int64_t x = 0; x < seg.width(); ++x)
      ++votes[PixelToCell(pose, {y, x}, cfg)][seg.at(y, x)];
  std::vector<std::pair<Cell, int32_t>> out;
  for (const auto& [cell, v] : votes) {
    auto best = v.begin();
    for (auto it = v.begin(); it != v.end(); ++it)
      if (it->second > best->second) best = it;
    out.emplace_back(cell, best->first);
  }
  return out;
}

// Moves towards the pose whose view would hold the most target: cells
// believed to be target count fully, unseen cells next to them by half.
void ObjectGoal(NavState& s, const World& world, const NavConfig& cfg) {
  const auto cells = static_cast<size_t>(world.rows * world.cols);
  std::vector<double> weight(cells, 0.0);
  for (const auto& [cell, cls] : s.belief) {
    if (cls != s.target) continue;
    if (world.Inside(cell)) weight[static_cast<size_t>(Index(world, cell))] = 1.0;
    for (int dr = -2; dr <= 2; ++dr)
      for (int dc = -2; dc <= 2; ++dc) {
        const Cell n{cell.r + dr, cell.c + dc};
        if (world.Inside(n) && !s.seen.count(n)) weight[static_cast<size_t>(Index(world, n))] = 0.5;
      }
  }
  std::vector<int> dist;
  Bfs(world, s.pose.cell, &dist);
  Pose goal = s.pose;
  double best_score = -1.0;
  int best_steps = 0;
  for (int r = 0; r < world.rows; ++r)
    for (int c = 0; c < world.cols; ++c) {
      const int d = dist[static_cast<size_t>(r * world.cols + c)];
      if (d < 0) continue;
      for (int h = 0; h < 4; ++h) {
        const Pose p{{r, c}, static_cast<Heading>(h)};
        double score = 0.0;
        for (const Cell& v : FrustumCells(p, cfg))
          if (world.Inside(v)) score += weight[static_cast<size_t>(Index(world, v))];
        const int steps = d + (p.heading != s.pose.heading);
        if (score > best_score + 1e-9 ||
            (std::abs(score - best_score) <= 1e-9 && steps < best_steps)) {
          best_score = score;
          best_steps = steps;
          goal = p;
        }
      }
    }
  if (goal.cell == s.pose.cell) {
    if (goal.heading != s.pose.heading) {
      s.pose.heading = goal.heading;
    } else {
      ++s.stuck_steps;
    }
    return;
  }
  s.stuck_steps = 0;
  MoveTo(s, *NextStep(world, s.pose.cell, goal.cell));
}

// Worth going to: something within two cells has never been in view.
bool NearUnseen(const NavState& s, Cell c) {
  for (int dr = -2; dr <= 2; ++dr)
    for (int dc = -2; dc <= 2; ++dc)
      if (!s.seen.count({c.r + dr, c.c + dc})) return true;
  return false;
}

bool HasUnseen(const NavState& s, const Pose& pose, const NavConfig& cfg) {
  for (const Cell& c : FrustumCells(pose, cfg))
    if (!s.seen.count(c)) return true;
  return false;
}

// Nearest believed-floor cell at the edge of what has been seen.
std::optional<Cell> Frontier(const NavState& s, const World& world) {
  std::vector<int> dist;
  Bfs(world, s.pose.cell, &dist);
  std::optional<Cell> best;
  int best_d = std::numeric_limits<int>::max();
  for (const auto& [cell, cls] : s.belief) {
    if (cls != world.floor_class || !world.Inside(cell) || s.visited.count(cell)) continue;
    const int d = dist[static_cast<size_t>(Index(world, cell))];
    if (d < 0 || d >= best_d || !NearUnseen(s, cell)) continue;
    best_d = d;
    best = cell;
  }
  return best;
}

void FloorNav(NavState& s, const World& world) {
  auto usable = [&](Cell c) {
    return !s.visited.count(c) && NearUnseen(s, c) &&
           NextStep(world, s.pose.cell, c).has_value();
  };
  while (!s.waypoints.empty() && !usable(s.waypoints.front())) s.waypoints.pop_front();
  if (s.waypoints.empty()) {
    while (!s.branches.empty() && !usable(s.branches.back())) s.branches.pop_back();
    if (!s.branches.empty()) {
      s.waypoints.push_back(s.branches.back());
      s.branches.pop_back();
    } else if (const auto f = Frontier(s, world)) {
      s.waypoints.push_back(*f);
    } else {
      s.mode = Mode::kDoneFailure;
      return;
    }
  }
  const Cell goal = s.waypoints.front();
  MoveTo(s, *NextStep(world, s.pose.cell, goal));
  if (s.pose.cell == goal) s.waypoints.pop_front();
  // Look around again once the current plan is used up.
  if (s.waypoints.empty()) {
    s.mode = Mode::kCoverage;
    s.scan_turns = 0;
  }
}

}  // namespace

void FsmStep(NavState& s, const LabelMap& seg, const World& world, const NavConfig& cfg) {
  if (s.terminal()) throw InvalidArgument("navigation episode already finished");
  ++s.step_count;
  for (const auto& [cell, cls] : CellLabels(seg, s.pose, cfg)) {
    s.seen.insert(cell);
    s.belief[cell] = cls;
  }
  // The target stays known once seen, until a later view contradicts it.
  const bool visible = std::any_of(s.belief.begin(), s.belief.end(),
                                   [&](const auto& kv) { return kv.second == s.target; });
  if (CheckSuccess(seg, s.target)) {
    s.mode = Mode::kDoneSuccess;
    return;
  }
  if (visible) {
    s.mode = Mode::kObjectGoal;
    ObjectGoal(s, world, cfg);
  } else {
    if (s.mode == Mode::kObjectGoal) {
      s.mode = Mode::kCoverage;
      s.scan_turns = 0;
      s.scan_waypoints.clear();
      s.scan_branches.clear();
    }
    if (s.mode == Mode::kCoverage) {
      Harvest(s, seg, world, cfg);
      // Turn to the next heading that still shows something new.
      bool turned = false;
      Heading h = s.pose.heading;
      for (int k = s.scan_turns + 1; k <= 3 && !turned; ++k) {
        h = TurnRight(h);
        if (HasUnseen(s, {s.pose.cell, h}, cfg)) {
          s.pose.heading = h;
          s.scan_turns = k;
          turned = true;
        }
      }
      if (!turned) {
        FinishScan(s);
        s.mode = Mode::kFloorNav;
        FloorNav(s, world);
      }
    } else {
      FloorNav(s, world);
    }
  }
  if (!s.terminal() && s.step_count >= s.max_steps) s.mode = Mode::kDoneFailure;
}

Perception OraclePerception() {
  return [](const View& v, int) { return v.label; };
}

Perception NoisyPerception(double p, int num_classes, uint64_t seed) {
  if (p < 0 || p > 1) throw InvalidArgument("noise probability must be in [0, 1]");
  if (num_classes < 1) throw InvalidArgument("num_classes must be positive");
  return [=](const View& v, int step) {
    std::mt19937_64 rng(Mix(seed ^ Mix(static_cast<uint64_t>(step))));
    std::bernoulli_distribution flip(p);
    std::uniform_int_distribution<int32_t> cls(0, num_classes - 1);
    LabelMap out = v.label;
    for (auto& l : out.data())
      if (flip(rng)) l = cls(rng);
    return out;
  };
}

Perception ConstantPerception(int32_t class_id) {
  return [=](const View& v, int) {
    return LabelMap(v.label.height(), v.label.width(), class_id);
  };
}

Episode RunEpisode(const World& world, int start_index, int32_t target,
                   const Perception& perception, const NavConfig& cfg, int repeat) {
  cfg.Validate();
  if (start_index < 0 || start_index >= static_cast<int>(world.starts.size())) {
    throw InvalidArgument("start index out of range for world " + world.name);
  }
  Episode ep;
  ep.world = world.name;
  ep.target = target;
  ep.start_index = start_index;
  ep.repeat = repeat;
  NavState s = InitialState(world.starts[static_cast<size_t>(start_index)], target, cfg);
  while (!s.terminal()) {
    const View view = RenderView(world, s.pose, cfg);
    LabelMap seg = perception(view, s.step_count);
    if (!seg.SameShape(view.label)) {
      throw InvalidArgument("perception returned a map of the wrong size");
    }
    ep.trajectory.push_back(s.pose);
    FsmStep(s, seg, world, cfg);
    StepLog log;
    log.step = s.step_count;
    log.pose = s.pose;
    log.mode = s.mode;
    log.waypoints.assign(s.waypoints.begin(), s.waypoints.end());
    log.success = s.mode == Mode::kDoneSuccess;
    log.target_fraction = TargetFraction(seg, target);
    ep.steps.push_back(std::move(log));
    ep.segmentations.push_back(std::move(seg));
  }
  ep.trajectory.push_back(s.pose);
  ep.final_mode = s.mode;
  return ep;
}

std::string ReplayJsonl(const Episode& ep) {
  std::string out;
  for (const auto& st : ep.steps) {
    Json wps = Json::array();
    for (const Cell& c : st.waypoints) wps.push_back({c.r, c.c});
    Json line;
    line["step"] = st.step;
    line["pose"] = {{"r", st.pose.cell.r},
                    {"c", st.pose.cell.c},
                    {"heading", std::string(1, HeadingChar(st.pose.heading))}};
    line["mode"] = ModeName(st.mode);
    line["waypoints"] = wps;
    line["success"] = st.success;
    out += line.dump() + "\n";
  }
  return out;
}

ProtocolSummary RunProtocol(const World& world,
                            const std::function<Perception(int repeat)>& make_perception,
                            const NavConfig& cfg, int repeats, int max_trials,
                            int threads) {
  if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
  struct Trial {
    int32_t target;
    int start;
    int repeat;
  };
  std::vector<Trial> trials;
  for (int32_t target : world.targets)
    for (int start = 0; start < static_cast<int>(world.starts.size()); ++start)
      for (int rep = 0; rep < repeats; ++rep) trials.push_back({target, start, rep});
  if (max_trials >= 0 && static_cast<size_t>(max_trials) < trials.size()) {
    trials.resize(static_cast<size_t>(max_trials));
  }
  std::vector<Perception> perceptions;
  for (int rep = 0; rep < repeats; ++rep) perceptions.push_back(make_perception(rep));

  ProtocolSummary sum;
  sum.episodes.resize(trials.size());
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (size_t i = next++; i < trials.size(); i = next++) {
      try {
        const Trial& t = trials[i];
        sum.episodes[i] = RunEpisode(world, t.start, t.target,
                                     perceptions[static_cast<size_t>(t.repeat)], cfg, t.repeat);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(trials.size())));
  {
    std::vector<std::jthread> pool;
    for (int k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  for (const Episode& ep : sum.episodes) {
    if (sum.cells.empty() || sum.cells.back().target != ep.target ||
        sum.cells.back().start_index != ep.start_index) {
      sum.cells.push_back({ep.target, ep.start_index, 0, 0});
    }
    ++sum.cells.back().trials;
    ++sum.trials;
    if (ep.success()) {
      ++sum.cells.back().successes;
      ++sum.successes;
    }
  }
  return sum;
}

}  // namespace ulrseg::navsim
