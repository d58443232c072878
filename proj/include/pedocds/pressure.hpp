#pragma once

// Plantar pressure recordings and the offloading metrics computed from them:
// peak plantar pressure (PPP), pressure-time integral (PTI) and contact area.
// Grids are row-major with the heel at row 0; pressures in kPa, time in s.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace pedocds::pressure {

using Grid = Eigen::MatrixXd;
using Cells = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class Side { left, right };
enum class Condition { barefoot_static, barefoot_dynamic, in_shoe };

struct Frame {
  double t = 0.0;
  Grid grid;
  double cell_area = 0.0;  // cm^2
};

struct Recording {
  std::vector<Frame> frames;
  Side side = Side::left;
  Condition condition = Condition::in_shoe;
  std::string label;

  Eigen::Index rows() const { return frames.empty() ? 0 : frames.front().grid.rows(); }
  Eigen::Index cols() const { return frames.empty() ? 0 : frames.front().grid.cols(); }
  double cell_area() const { return frames.empty() ? 0.0 : frames.front().cell_area; }
};

struct RecordingMeta {
  Side side = Side::left;
  Condition condition = Condition::in_shoe;
  std::string label;
  std::optional<double> cell_area;  // used only when the header omits it
};

/// Throws ValidationError unless the recording has at least one frame, constant
/// grid dimensions, strictly increasing time, nonnegative pressures and a
/// positive cell area.
void check_recording(const Recording& rec);

/// Header `t,<r>x<c>,cell_area_cm2=<a>`, then one line per frame:
/// `t,v11,v12,...,v_rc` in row-major order.
Recording parse_recording(std::string_view csv, const RecordingMeta& meta = {});
std::string write_recording(const Recording& rec);

struct ZoneMask {
  std::string name;
  Cells cells;

  Eigen::Index count() const { return cells.count(); }
};

/// Custom region of interest from explicit (row, col) cells.
ZoneMask make_mask(std::string name, Eigen::Index rows, Eigen::Index cols,
                   const std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells);
ZoneMask full_mask(Eigen::Index rows, Eigen::Index cols);

/// Zone boundaries as integer percentages of the grid rows. Row ranges are
/// half-open and computed with floor division.
struct Zoning {
  int heel_end_pct = 30;
  int midfoot_end_pct = 60;
  int mth_end_pct = 75;
};

/// heel, midfoot and forefoot partition the grid; mth1, mth2_5 and hallux are
/// disjoint sub-zones of the forefoot. The medial half is the low columns of a
/// right foot and the high columns of a left foot.
std::vector<ZoneMask> anatomical_masks(Eigen::Index rows, Eigen::Index cols, Side side = Side::right,
                                       const Zoning& zoning = {});

/// Per-frame maximum over the masked cells.
std::vector<double> masked_peaks(const Recording& rec, const ZoneMask& mask);

double peak_pressure(const Recording& rec, const ZoneMask& mask);
double pressure_time_integral(const Recording& rec, const ZoneMask& mask);
double contact_area(const Frame& frame, double threshold = 5.0);
/// Largest masked contact area over the frames of a recording.
double contact_area(const Recording& rec, const ZoneMask& mask, double threshold = 5.0);

struct OffloadTarget {
  std::optional<double> ppp_max = 200.0;            // kPa
  std::optional<double> reduction_min_pct = 30.0;
  std::set<std::string> zones{"forefoot"};

  bool met(double ppp_intervention, std::optional<double> reduction_pct) const;
};

/// "reduction>=30", "ppp<=200", or both joined by '|'. Optional "@zone,zone".
OffloadTarget parse_target(const std::string& spec);
std::string to_string(const OffloadTarget& target);

struct ZoneReport {
  std::string zone;
  double ppp_baseline = 0.0;
  double ppp_intervention = 0.0;
  std::optional<double> ppp_reduction_pct;  // undefined when the baseline PPP is 0
  std::optional<double> pti_baseline;        // undefined for single-frame recordings
  std::optional<double> pti_intervention;
  double contact_area_baseline = 0.0;
  double contact_area_intervention = 0.0;
  bool met = false;
  bool targeted = false;
};

struct OffloadReport {
  std::vector<ZoneReport> zones;
  OffloadTarget target;
  double contact_threshold = 5.0;

  /// Every targeted zone met its target.
  bool met() const;
  const ZoneReport* find(const std::string& zone) const;
};

OffloadReport compare(const Recording& baseline, const Recording& intervention, const std::vector<ZoneMask>& masks,
                      const OffloadTarget& target, double contact_threshold = 5.0);

/// compare() over the anatomical masks of the baseline geometry.
OffloadReport compare(const Recording& baseline, const Recording& intervention, const OffloadTarget& target,
                      const Zoning& zoning = {}, double contact_threshold = 5.0);

std::string to_string(Side side);
std::string to_string(Condition condition);
Side parse_side(const std::string& s);
Condition parse_condition(const std::string& s);

nlohmann::json recording_summary(const Recording& rec);
nlohmann::json report_to_json(const OffloadReport& report);
OffloadReport report_from_json(const nlohmann::json& j);
nlohmann::json target_to_json(const OffloadTarget& target);
OffloadTarget target_from_json(const nlohmann::json& j);

}  // namespace pedocds::pressure
