#include "pedocds/pressure.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "pedocds/error.hpp"

namespace pedocds::pressure {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_number(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError("line " + std::to_string(line) + ": not a number '" + std::string(s) + "'");
  }
  return v;
}

Eigen::Index to_index(std::string_view s) {
  Eigen::Index v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v <= 0) {
    throw ValidationError("malformed grid dimensions in header");
  }
  return v;
}

void check_mask(const Recording& rec, const ZoneMask& mask) {
  if (mask.cells.rows() != rec.rows() || mask.cells.cols() != rec.cols()) {
    throw ValidationError("mask " + mask.name + " does not match the grid dimensions");
  }
  if (mask.count() == 0) throw ValidationError("empty mask " + mask.name);
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json("n/a"); }

std::optional<double> number_or_na(const json& j) {
  if (j.is_number()) return j.get<double>();
  return std::nullopt;
}

}  // namespace

void check_recording(const Recording& rec) {
  if (rec.frames.empty()) throw ValidationError("recording has no frames");
  const Eigen::Index rows = rec.rows();
  const Eigen::Index cols = rec.cols();
  if (rows == 0 || cols == 0) throw ValidationError("empty grid");
  for (std::size_t k = 0; k < rec.frames.size(); ++k) {
    const Frame& f = rec.frames[k];
    if (f.grid.rows() != rows || f.grid.cols() != cols) throw ValidationError("ragged rows");
    if (!(f.cell_area > 0) || f.cell_area != rec.frames.front().cell_area) {
      throw ValidationError("cell area must be positive and constant");
    }
    if (!f.grid.allFinite()) throw ValidationError("non-finite pressure");
    if ((f.grid.array() < 0).any()) throw ValidationError("negative pressure");
    if (k > 0 && !(f.t > rec.frames[k - 1].t)) throw ValidationError("non-monotone time");
  }
}

Recording parse_recording(std::string_view csv, const RecordingMeta& meta) {
  std::vector<std::string_view> lines;
  for (auto line : split(csv, '\n')) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ValidationError("empty pressure CSV");

  const auto header = split(lines.front(), ',');
  if (header.size() < 2 || header[0] != "t") throw ValidationError("header must start with t,<rows>x<cols>");
  const auto dims = split(header[1], 'x');
  if (dims.size() != 2) throw ValidationError("malformed grid dimensions in header");
  const Eigen::Index rows = to_index(dims[0]);
  const Eigen::Index cols = to_index(dims[1]);
  std::optional<double> cell_area = meta.cell_area;
  if (header.size() >= 3) {
    constexpr std::string_view key = "cell_area_cm2=";
    if (header[2].substr(0, key.size()) != key) throw ValidationError("expected cell_area_cm2=<a> in header");
    cell_area = to_number(header[2].substr(key.size()), 1);
  }
  if (header.size() > 3) throw ValidationError("unexpected header fields");
  if (!cell_area) throw ValidationError("cell area missing");
  if (!(*cell_area > 0)) throw ValidationError("cell area must be positive");

  Recording rec;
  rec.side = meta.side;
  rec.condition = meta.condition;
  rec.label = meta.label;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (static_cast<Eigen::Index>(fields.size()) != rows * cols + 1) throw ValidationError("ragged rows");
    Frame f;
    f.t = to_number(fields[0], i + 1);
    f.cell_area = *cell_area;
    f.grid.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double v = to_number(fields[static_cast<std::size_t>(1 + r * cols + c)], i + 1);
        if (v < 0) throw ValidationError("negative pressure");
        f.grid(r, c) = v;
      }
    }
    if (!rec.frames.empty() && !(f.t > rec.frames.back().t)) throw ValidationError("non-monotone time");
    rec.frames.push_back(std::move(f));
  }
  check_recording(rec);
  return rec;
}

std::string write_recording(const Recording& rec) {
  check_recording(rec);
  std::ostringstream out;
  out << "t," << rec.rows() << "x" << rec.cols() << ",cell_area_cm2=" << format_number(rec.cell_area()) << "\n";
  for (const Frame& f : rec.frames) {
    out << format_number(f.t);
    for (Eigen::Index r = 0; r < f.grid.rows(); ++r) {
      for (Eigen::Index c = 0; c < f.grid.cols(); ++c) out << "," << format_number(f.grid(r, c));
    }
    out << "\n";
  }
  return out.str();
}

ZoneMask make_mask(std::string name, Eigen::Index rows, Eigen::Index cols,
                   const std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells) {
  ZoneMask mask{std::move(name), Cells::Constant(rows, cols, false)};
  for (auto [r, c] : cells) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw ValidationError("cell (" + std::to_string(r) + ", " + std::to_string(c) + ") outside the grid");
    }
    mask.cells(r, c) = true;
  }
  return mask;
}

ZoneMask full_mask(Eigen::Index rows, Eigen::Index cols) {
  return ZoneMask{"all", Cells::Constant(rows, cols, true)};
}

std::vector<ZoneMask> anatomical_masks(Eigen::Index rows, Eigen::Index cols, Side side, const Zoning& zoning) {
  if (rows < 10) throw ValidationError("grid too small: need at least 10 rows");
  if (cols < 2) throw ValidationError("grid too small: need at least 2 columns");
  if (!(0 < zoning.heel_end_pct && zoning.heel_end_pct < zoning.midfoot_end_pct &&
        zoning.midfoot_end_pct < zoning.mth_end_pct && zoning.mth_end_pct < 100)) {
    throw ValidationError("zoning percentages must increase strictly within (0, 100)");
  }
  const Eigen::Index heel_end = rows * zoning.heel_end_pct / 100;
  const Eigen::Index mid_end = rows * zoning.midfoot_end_pct / 100;
  const Eigen::Index mth_end = rows * zoning.mth_end_pct / 100;
  const Eigen::Index half = cols / 2;

  auto band = [&](const std::string& name, Eigen::Index r0, Eigen::Index r1, Eigen::Index c0, Eigen::Index c1) {
    ZoneMask m{name, Cells::Constant(rows, cols, false)};
    if (r1 > r0 && c1 > c0) m.cells.block(r0, c0, r1 - r0, c1 - c0).setConstant(true);
    return m;
  };
  const Eigen::Index medial0 = side == Side::right ? 0 : cols - half;
  const Eigen::Index medial1 = side == Side::right ? half : cols;
  const Eigen::Index lateral0 = side == Side::right ? half : 0;
  const Eigen::Index lateral1 = side == Side::right ? cols : cols - half;

  return {band("heel", 0, heel_end, 0, cols),
          band("midfoot", heel_end, mid_end, 0, cols),
          band("forefoot", mid_end, rows, 0, cols),
          band("mth1", mid_end, mth_end, medial0, medial1),
          band("mth2_5", mid_end, mth_end, lateral0, lateral1),
          band("hallux", mth_end, rows, medial0, medial1)};
}

std::vector<double> masked_peaks(const Recording& rec, const ZoneMask& mask) {
  check_mask(rec, mask);
  std::vector<double> peaks;
  peaks.reserve(rec.frames.size());
  const double floor = -std::numeric_limits<double>::infinity();
  for (const Frame& f : rec.frames) {
    peaks.push_back(mask.cells.select(f.grid.array(), floor).maxCoeff());
  }
  return peaks;
}

double peak_pressure(const Recording& rec, const ZoneMask& mask) {
  const auto peaks = masked_peaks(rec, mask);
  return *std::max_element(peaks.begin(), peaks.end());
}

double pressure_time_integral(const Recording& rec, const ZoneMask& mask) {
  if (rec.frames.size() < 2) throw ValidationError("pressure-time integral needs at least 2 frames");
  const auto peaks = masked_peaks(rec, mask);
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < peaks.size(); ++k) {
    sum += 0.5 * (peaks[k] + peaks[k + 1]) * (rec.frames[k + 1].t - rec.frames[k].t);
  }
  return sum;
}

double contact_area(const Frame& frame, double threshold) {
  return static_cast<double>((frame.grid.array() > threshold).count()) * frame.cell_area;
}

double contact_area(const Recording& rec, const ZoneMask& mask, double threshold) {
  check_mask(rec, mask);
  Eigen::Index best = 0;
  for (const Frame& f : rec.frames) best = std::max(best, (mask.cells && (f.grid.array() > threshold)).count());
  return static_cast<double>(best) * rec.cell_area();
}

bool OffloadTarget::met(double ppp_intervention, std::optional<double> reduction_pct) const {
  if (ppp_max && ppp_intervention <= *ppp_max) return true;
  return reduction_min_pct && reduction_pct && *reduction_pct >= *reduction_min_pct;
}

OffloadTarget parse_target(const std::string& spec) {
  OffloadTarget target;
  target.ppp_max.reset();
  target.reduction_min_pct.reset();
  std::string_view body = trim(spec);
  if (const auto at = body.find('@'); at != std::string_view::npos) {
    target.zones.clear();
    for (auto z : split(body.substr(at + 1), ',')) {
      if (z.empty()) throw ValidationError("empty zone in target '" + spec + "'");
      target.zones.insert(std::string(z));
    }
    body = trim(body.substr(0, at));
  }
  for (auto part : split(body, '|')) {
    if (part.substr(0, 10) == "reduction>") {
      const auto v = part.substr(part.size() > 10 && part[10] == '=' ? 11 : 10);
      target.reduction_min_pct = to_number(trim(v), 1);
    } else if (part.substr(0, 4) == "ppp<") {
      const auto v = part.substr(part.size() > 4 && part[4] == '=' ? 5 : 4);
      target.ppp_max = to_number(trim(v), 1);
    } else {
      throw ValidationError("unrecognised target clause '" + std::string(part) + "'");
    }
  }
  if (!target.ppp_max && !target.reduction_min_pct) throw ValidationError("target has no clause");
  return target;
}

std::string to_string(const OffloadTarget& target) {
  std::string out;
  if (target.reduction_min_pct) out += "reduction>=" + format_number(*target.reduction_min_pct);
  if (target.ppp_max) out += (out.empty() ? "" : "|") + std::string("ppp<=") + format_number(*target.ppp_max);
  std::string zones;
  for (const auto& z : target.zones) zones += (zones.empty() ? "" : ",") + z;
  return out + "@" + zones;
}

bool OffloadReport::met() const {
  bool any = false;
  for (const auto& z : zones) {
    if (!z.targeted) continue;
    any = true;
    if (!z.met) return false;
  }
  return any;
}

const ZoneReport* OffloadReport::find(const std::string& zone) const {
  for (const auto& z : zones) {
    if (z.zone == zone) return &z;
  }
  return nullptr;
}

OffloadReport compare(const Recording& baseline, const Recording& intervention, const std::vector<ZoneMask>& masks,
                      const OffloadTarget& target, double contact_threshold) {
  check_recording(baseline);
  check_recording(intervention);
  if (baseline.rows() != intervention.rows() || baseline.cols() != intervention.cols() ||
      baseline.cell_area() != intervention.cell_area()) {
    throw ValidationError("geometry mismatch between baseline and intervention");
  }
  for (const auto& zone : target.zones) {
    bool found = false;
    for (const auto& m : masks) found = found || m.name == zone;
    if (!found) throw ValidationError("target zone " + zone + " has no mask");
  }
  OffloadReport report;
  report.target = target;
  report.contact_threshold = contact_threshold;
  for (const ZoneMask& mask : masks) {
    ZoneReport z;
    z.zone = mask.name;
    z.ppp_baseline = peak_pressure(baseline, mask);
    z.ppp_intervention = peak_pressure(intervention, mask);
    if (z.ppp_baseline > 0) z.ppp_reduction_pct = 100.0 * (z.ppp_baseline - z.ppp_intervention) / z.ppp_baseline;
    if (baseline.frames.size() >= 2) z.pti_baseline = pressure_time_integral(baseline, mask);
    if (intervention.frames.size() >= 2) z.pti_intervention = pressure_time_integral(intervention, mask);
    z.contact_area_baseline = contact_area(baseline, mask, contact_threshold);
    z.contact_area_intervention = contact_area(intervention, mask, contact_threshold);
    z.met = target.met(z.ppp_intervention, z.ppp_reduction_pct);
    z.targeted = target.zones.count(mask.name) > 0;
    report.zones.push_back(std::move(z));
  }
  return report;
}

OffloadReport compare(const Recording& baseline, const Recording& intervention, const OffloadTarget& target,
                      const Zoning& zoning, double contact_threshold) {
  check_recording(baseline);
  return compare(baseline, intervention, anatomical_masks(baseline.rows(), baseline.cols(), baseline.side, zoning),
                 target, contact_threshold);
}

std::string to_string(Side side) { return side == Side::left ? "left" : "right"; }

std::string to_string(Condition condition) {
  switch (condition) {
    case Condition::barefoot_static: return "barefoot_static";
    case Condition::barefoot_dynamic: return "barefoot_dynamic";
    case Condition::in_shoe: return "in_shoe";
  }
  return "in_shoe";
}

Side parse_side(const std::string& s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw ValidationError("unknown side '" + s + "'");
}

Condition parse_condition(const std::string& s) {
  if (s == "barefoot_static") return Condition::barefoot_static;
  if (s == "barefoot_dynamic") return Condition::barefoot_dynamic;
  if (s == "in_shoe") return Condition::in_shoe;
  throw ValidationError("unknown condition '" + s + "'");
}

json recording_summary(const Recording& rec) {
  return {{"label", rec.label},
          {"side", to_string(rec.side)},
          {"condition", to_string(rec.condition)},
          {"frames", rec.frames.size()},
          {"rows", rec.rows()},
          {"cols", rec.cols()},
          {"cell_area_cm2", rec.cell_area()},
          {"duration_s", rec.frames.empty() ? 0.0 : rec.frames.back().t - rec.frames.front().t}};
}

json target_to_json(const OffloadTarget& target) {
  json j{{"zones", target.zones}};
  j["ppp_max"] = target.ppp_max ? json(*target.ppp_max) : json(nullptr);
  j["reduction_min_pct"] = target.reduction_min_pct ? json(*target.reduction_min_pct) : json(nullptr);
  return j;
}

OffloadTarget target_from_json(const json& j) {
  if (j.is_string()) return parse_target(j.get<std::string>());
  OffloadTarget t;
  try {
    if (j.contains("ppp_max")) t.ppp_max = number_or_na(j.at("ppp_max"));
    if (j.contains("reduction_min_pct")) t.reduction_min_pct = number_or_na(j.at("reduction_min_pct"));
    if (j.contains("zones")) t.zones = j.at("zones").get<std::set<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed target: ") + e.what());
  }
  if (!t.ppp_max && !t.reduction_min_pct) throw ValidationError("target has no clause");
  return t;
}

json report_to_json(const OffloadReport& report) {
  json zones = json::array();
  for (const auto& z : report.zones) {
    zones.push_back({{"zone", z.zone},
                     {"ppp_baseline", z.ppp_baseline},
                     {"ppp_intervention", z.ppp_intervention},
                     {"ppp_reduction_pct", optional_number(z.ppp_reduction_pct)},
                     {"pti_baseline", optional_number(z.pti_baseline)},
                     {"pti_intervention", optional_number(z.pti_intervention)},
                     {"contact_area_baseline", z.contact_area_baseline},
                     {"contact_area_intervention", z.contact_area_intervention},
                     {"targeted", z.targeted},
                     {"met", z.met}});
  }
  return {{"zones", zones},
          {"target", target_to_json(report.target)},
          {"contact_threshold_kpa", report.contact_threshold},
          {"met", report.met()}};
}

OffloadReport report_from_json(const json& j) {
  OffloadReport r;
  try {
    r.target = target_from_json(j.at("target"));
    r.contact_threshold = j.value("contact_threshold_kpa", 5.0);
    for (const auto& z : j.at("zones")) {
      ZoneReport zr;
      zr.zone = z.at("zone").get<std::string>();
      zr.ppp_baseline = z.at("ppp_baseline").get<double>();
      zr.ppp_intervention = z.at("ppp_intervention").get<double>();
      zr.ppp_reduction_pct = number_or_na(z.at("ppp_reduction_pct"));
      zr.pti_baseline = number_or_na(z.value("pti_baseline", json("n/a")));
      zr.pti_intervention = number_or_na(z.value("pti_intervention", json("n/a")));
      zr.contact_area_baseline = z.value("contact_area_baseline", 0.0);
      zr.contact_area_intervention = z.value("contact_area_intervention", 0.0);
      zr.targeted = z.value("targeted", r.target.zones.count(zr.zone) > 0);
      zr.met = z.at("met").get<bool>();
      r.zones.push_back(std::move(zr));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed offload report: ") + e.what());
  }
  return r;
}

}  // namespace pedocds::pressure
