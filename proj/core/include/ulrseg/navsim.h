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
#ifndef ULRSEG_NAVSIM_H_
#define ULRSEG_NAVSIM_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ulrseg/label_map.h"
#include "ulrseg/tensor.h"

// Object-goal navigation on segmentation maps of a simulated grid world.
namespace ulrseg::navsim {

enum class Heading { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
char HeadingChar(Heading h);
Heading ParseHeading(char c);

struct Cell {
  int r = 0;
  int c = 0;
  auto operator<=>(const Cell&) const = default;
};

struct Pose {
  Cell cell;
  Heading heading = Heading::kNorth;
  bool operator==(const Pose&) const = default;
};

// Image coordinates in a rendered view.
struct Pixel {
  int64_t y = 0;
  int64_t x = 0;
  bool operator==(const Pixel&) const = default;
};

struct World {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<int32_t> cells;  // true class per cell, row-major
  std::vector<Pose> starts;
  std::vector<int32_t> targets;
  uint64_t seed = 0;
  int32_t floor_class = 1;
  int32_t wall_class = 0;
  std::map<int32_t, std::string> class_names;  // from legend labels

  // Legend label of `cls`, or "class <cls>".
  std::string ClassName(int32_t cls) const;

  bool Inside(Cell p) const {
    return p.r >= 0 && p.r < rows && p.c >= 0 && p.c < cols;
  }
  // Cells outside the grid read as wall.
  int32_t At(Cell p) const;
  bool IsFloor(Cell p) const { return At(p) == floor_class; }
  // Throws InvalidArgument unless floor is 4-connected, every start is on
  // floor and every target class occupies at least one cell.
  void Validate() const;
};

// Text format: header lines ("name", "size R C", "seed S", "legend <char>
// <class> [label]", "start R C <N|E|S|W>", "targets <class>...") followed by
// "grid" and R rows of C characters. '#' comments are skipped in the header.
World ParseWorld(const std::string& text);
World LoadWorld(const std::filesystem::path& path);
std::string FormatWorld(const World& world);
// Every *.txt world in `dir`, sorted by file name.
std::vector<World> LoadWorldDir(const std::filesystem::path& dir);

struct NavConfig {
  // View frustum: cells 1..view_depth ahead, view_width cells across.
  int view_depth = 6;
  int view_width = 7;
  int64_t image_size = 32;
  // Waypoint row interval in pixels; 0 selects image_size / 8.
  int64_t interval = 0;
  // Branch deviation threshold in cells.
  double dev_threshold_cells = 2.0;
  int max_steps = 200;

  int64_t IntervalPixels() const;
  double DevThresholdPixels() const;
  void Validate() const;
};

struct View {
  Tensor hr;       // (3, image_size, image_size)
  LabelMap label;  // ground truth of the same pixels
};

// Front view from `pose`: far cells at the top, nearest row at the bottom,
// the robot's column in the middle.
View RenderView(const World& world, const Pose& pose, const NavConfig& cfg);
// World cell seen at a view pixel.
Cell PixelToCell(const Pose& pose, const Pixel& px, const NavConfig& cfg);
// Every cell inside the view from `pose`.
std::vector<Cell> FrustumCells(const Pose& pose, const NavConfig& cfg);

// Midpoints of the floor run nearest the centre column, every `interval`
// rows from the bottom row upwards (near to far).
std::vector<Pixel> PlanFloorWaypoints(const LabelMap& seg, int32_t floor_class,
                                      int64_t interval);
// Least-squares lines through the per-row leftmost and rightmost floor
// pixels; floor pixels further than `dev_threshold` pixels outside either
// line are clustered (4-connectivity) and each cluster yields the member
// nearest its centroid.
std::vector<Pixel> DetectBranchPoints(const LabelMap& seg, int32_t floor_class,
                                      double dev_threshold);
// Target pixels strictly above 40% of the image.
bool CheckSuccess(const LabelMap& seg, int32_t target_class);
double TargetFraction(const LabelMap& seg, int32_t target_class);

enum class Mode { kCoverage, kFloorNav, kObjectGoal, kDoneSuccess, kDoneFailure };
std::string ModeName(Mode m);

struct NavState {
  Mode mode = Mode::kCoverage;
  Pose pose;
  int32_t target = 0;
  std::deque<Cell> waypoints;
  std::vector<Cell> branches;  // stack of unexplored cells
  int step_count = 0;
  int max_steps = 200;
  std::set<Cell> visited;
  std::set<Cell> seen;  // every cell that has appeared in a view
  std::map<Cell, int32_t> belief;  // latest perceived class per cell
  // Coverage scan: headings inspected so far and what they showed.
  int scan_turns = 0;
  std::vector<std::vector<Cell>> scan_waypoints;
  std::vector<Cell> scan_branches;
  int stuck_steps = 0;

  bool terminal() const {
    return mode == Mode::kDoneSuccess || mode == Mode::kDoneFailure;
  }
};

NavState InitialState(const Pose& start, int32_t target, const NavConfig& cfg);

// One decision and at most one action (turn or move). Throws
// InvalidArgument on a terminal state.
void FsmStep(NavState& state, const LabelMap& seg, const World& world,
             const NavConfig& cfg);

// Segmentation of the current view; `step` lets stochastic adapters vary
// deterministically over an episode.
using Perception = std::function<LabelMap(const View& view, int step)>;
Perception OraclePerception();
// Each pixel independently replaced by a uniform class with probability p.
Perception NoisyPerception(double p, int num_classes, uint64_t seed);
Perception ConstantPerception(int32_t class_id);

struct StepLog {
  int step = 0;
  Pose pose;
  Mode mode = Mode::kCoverage;
  std::vector<Cell> waypoints;
  bool success = false;
  double target_fraction = 0.0;
};

struct Episode {
  std::string world;
  int32_t target = 0;
  int start_index = 0;
  int repeat = 0;
  std::vector<StepLog> steps;
  std::vector<LabelMap> segmentations;
  std::vector<Pose> trajectory;  // pose before every step, then the final one
  Mode final_mode = Mode::kCoverage;
  bool success() const { return final_mode == Mode::kDoneSuccess; }
};

Episode RunEpisode(const World& world, int start_index, int32_t target,
                   const Perception& perception, const NavConfig& cfg,
                   int repeat = 0);

// JSON-lines replay: one {step, pose, mode, waypoints, success} per step.
std::string ReplayJsonl(const Episode& ep);

struct ProtocolCell {
  int32_t target = 0;
  int start_index = 0;
  int trials = 0;
  int successes = 0;
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

struct ProtocolSummary {
  std::vector<Episode> episodes;
  std::vector<ProtocolCell> cells;  // target-major, then start
  int trials = 0;
  int successes = 0;
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

// targets x starts x repeats trials, target-major. `make_perception` is
// called once per repeat index and the adapter must be safe to call from
// several threads. With max_trials >= 0 only that many trials of the
// enumeration are run. Results do not depend on `threads`.
ProtocolSummary RunProtocol(const World& world,
                            const std::function<Perception(int repeat)>& make_perception,
                            const NavConfig& cfg, int repeats = 5,
                            int max_trials = -1, int threads = 1);

}  // namespace ulrseg::navsim

#endif  // ULRSEG_NAVSIM_H_
