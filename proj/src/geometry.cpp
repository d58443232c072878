#include "pedocds/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pedocds/error.hpp"

namespace pedocds::geometry {

using nlohmann::json;

namespace {

std::string num(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

template <class Q>
std::string num(Q q) {
  return num(q.value());
}

template <class B>
std::string range(const B& b) {
  return num(b.lo()) + "-" + num(b.hi());
}

int code_index(const std::string& code, const std::string& feature, int count) {
  if (code.rfind(feature, 0) == 0 && code.size() > feature.size()) {
    const std::string digits = code.substr(feature.size());
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.front() != '0') {
      const int n = std::stoi(digits);
      if (n >= 1 && n <= count) return n;
    }
  }
  throw ValidationError("unknown code '" + code + "' for " + feature);
}

template <class B>
json band_json(const B& b) {
  return {{"lo", b.lo().value()}, {"hi", b.hi().value()}, {"default", b.midpoint().value()},
          {"unit", B::quantity::unit::symbol}};
}

template <class B>
B band_from(const json& j, const B& fallback) {
  if (j.is_array()) return B(j.at(0).get<double>(), j.at(1).get<double>());
  if (j.is_object()) return B(j.value("lo", fallback.lo().value()), j.value("hi", fallback.hi().value()));
  throw ValidationError("band must be [lo, hi] or {lo, hi}");
}

template <class B>
void read_band(const json& j, const char* key, B& target) {
  if (j.contains(key)) target = band_from(j.at(key), target);
}

template <class Q>
void read_quantity(const json& j, const char* key, Q& target) {
  if (j.contains(key)) target = Q(j.at(key).get<double>());
}

void read_fraction(const json& j, const char* key, FractionBand& target) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  target = FractionBand{v.at(0).get<double>(), v.at(1).get<double>()};
  if (target.lo > target.hi) throw ValidationError(std::string(key) + ": lower bound exceeds upper bound");
}

json layer_json(const LayerSpec& l) {
  return {{"role", to_string(l.role)},
          {"thickness_mm", l.thickness.value()},
          {"hardness_shore_a", l.hardness.value()},
          {"material", l.material_note}};
}

}  // namespace

void check_measurements(const FootMeasurements& m) {
  if (m.foot_length.value() <= 0) throw ValidationError("foot length must be positive");
  if (m.foot_width.value() < 0) throw ValidationError("foot width must not be negative");
  for (const auto* p : {&m.mth1_from_heel, &m.mth2_from_heel, &m.mth_line_from_heel}) {
    if (!p->has_value()) continue;
    if ((*p)->value() <= 0) throw ValidationError("MTH position must be positive");
    if (**p >= m.foot_length) throw ValidationError("MTH position must lie within the foot length");
  }
}

const DegBand& DesignConstants::rocker_band(const std::string& code) const {
  auto it = rocker_bands.find(code);
  if (it == rocker_bands.end()) throw ValidationError("unknown code '" + code + "' for FWRANG");
  return it->second;
}

DesignConstants DesignConstants::from_json(const json& j) {
  DesignConstants k;
  try {
    read_fraction(j, "apex_fraction", k.apex_fraction);
    read_fraction(j, "apex_plausible_fraction", k.apex_plausible_fraction);
    read_band(j, "apex_behind_mth", k.apex_behind_mth);
    read_quantity(j, "apex_position_shift", k.apex_position_shift);
    read_band(j, "rocker_angle_default", k.rocker_angle_default);
    read_band(j, "rocker_angle_sanity", k.rocker_angle_sanity);
    if (j.contains("rocker_bands")) {
      k.rocker_bands.clear();
      for (const auto& [code, band] : j.at("rocker_bands").items()) {
        const double lo = band.at("lo").get<double>();
        const double hi = band.contains("hi") && !band.at("hi").is_null() ? band.at("hi").get<double>()
                                                                          : k.rocker_angle_sanity.hi().value();
        k.rocker_bands.emplace(code, DegBand(lo, hi));
      }
    }
    read_quantity(j, "apex_angle_default", k.apex_angle_default);
    read_band(j, "apex_angle_sanity", k.apex_angle_sanity);
    read_quantity(j, "apex_rotation", k.apex_rotation);
    read_quantity(j, "toe_allowance_min", k.toe_allowance_min);
    read_band(j, "heel_height_male", k.heel_height_male);
    read_band(j, "heel_height_female", k.heel_height_female);
    read_band(j, "heel_height_lowered", k.heel_height_lowered);
    read_quantity(j, "prefab_heel_lift_max", k.prefab_heel_lift_max);
    read_quantity(j, "heel_lift_default", k.heel_lift_default);
    read_band(j, "met_addition_thickness", k.met_addition_thickness);
    read_band(j, "met_addition_hardness", k.met_addition_hardness);
    read_band(j, "met_addition_proximal", k.met_addition_proximal);
    read_quantity(j, "met_addition_early_shift", k.met_addition_early_shift);
    k.top_cover_shift_factor = j.value("top_cover_shift_factor", k.top_cover_shift_factor);
    read_band(j, "mla_addition", k.mla_addition);
    read_quantity(j, "cutout_depth", k.cutout_depth);
    read_quantity(j, "cutout_pad_thickness", k.cutout_pad_thickness);
    read_quantity(j, "cutout_pad_hardness_max", k.cutout_pad_hardness_max);
    read_quantity(j, "cutout_margin_default", k.cutout_margin_default);
    read_quantity(j, "oedema_volume_layer", k.oedema_volume_layer);
    if (j.contains("top_cover_replace_months")) {
      k.top_cover_replace_months = {j.at("top_cover_replace_months").at(0).get<int>(),
                                    j.at("top_cover_replace_months").at(1).get<int>()};
    }
    read_band(j, "base_custom_hardness", k.base_custom_hardness);
    read_quantity(j, "base_custom_thickness", k.base_custom_thickness);
    read_band(j, "base_printed_hardness", k.base_printed_hardness);
    read_band(j, "base_upper_hardness", k.base_upper_hardness);
    read_quantity(j, "base_upper_thickness", k.base_upper_thickness);
    read_band(j, "base_prefab_hardness", k.base_prefab_hardness);
    read_quantity(j, "base_prefab_thickness", k.base_prefab_thickness);
    read_band(j, "mid_hardness", k.mid_hardness);
    read_band(j, "mid_thickness", k.mid_thickness);
    read_band(j, "top_hardness", k.top_hardness);
    read_band(j, "top_thickness", k.top_thickness);
    read_band(j, "layer_hardness_sanity", k.layer_hardness_sanity);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed design constants: ") + e.what());
  }
  for (double v : {k.apex_fraction.lo, k.apex_position_shift.value(), k.apex_angle_default.value(),
                   k.toe_allowance_min.value(), k.prefab_heel_lift_max.value(), k.cutout_depth.value(),
                   k.cutout_pad_thickness.value(), k.cutout_pad_hardness_max.value(),
                   k.oedema_volume_layer.value(), k.top_cover_shift_factor}) {
    if (!(v > 0)) throw ValidationError("design constants must be strictly positive");
  }
  return k;
}

json DesignConstants::to_json() const {
  json bands = json::object();
  for (const auto& [code, band] : rocker_bands) bands[code] = {{"lo", band.lo().value()}, {"hi", band.hi().value()}};
  auto b = [](const auto& band) { return json::array({band.lo().value(), band.hi().value()}); };
  return {{"apex_fraction", {apex_fraction.lo, apex_fraction.hi}},
          {"apex_plausible_fraction", {apex_plausible_fraction.lo, apex_plausible_fraction.hi}},
          {"apex_behind_mth", b(apex_behind_mth)},
          {"apex_position_shift", apex_position_shift.value()},
          {"rocker_angle_default", b(rocker_angle_default)},
          {"rocker_angle_sanity", b(rocker_angle_sanity)},
          {"rocker_bands", bands},
          {"apex_angle_default", apex_angle_default.value()},
          {"apex_angle_sanity", b(apex_angle_sanity)},
          {"apex_rotation", apex_rotation.value()},
          {"toe_allowance_min", toe_allowance_min.value()},
          {"heel_height_male", b(heel_height_male)},
          {"heel_height_female", b(heel_height_female)},
          {"heel_height_lowered", b(heel_height_lowered)},
          {"prefab_heel_lift_max", prefab_heel_lift_max.value()},
          {"heel_lift_default", heel_lift_default.value()},
          {"met_addition_thickness", b(met_addition_thickness)},
          {"met_addition_hardness", b(met_addition_hardness)},
          {"met_addition_proximal", b(met_addition_proximal)},
          {"met_addition_early_shift", met_addition_early_shift.value()},
          {"top_cover_shift_factor", top_cover_shift_factor},
          {"mla_addition", b(mla_addition)},
          {"cutout_depth", cutout_depth.value()},
          {"cutout_pad_thickness", cutout_pad_thickness.value()},
          {"cutout_pad_hardness_max", cutout_pad_hardness_max.value()},
          {"cutout_margin_default", cutout_margin_default.value()},
          {"oedema_volume_layer", oedema_volume_layer.value()},
          {"top_cover_replace_months", {top_cover_replace_months.first, top_cover_replace_months.second}},
          {"base_custom_hardness", b(base_custom_hardness)},
          {"base_custom_thickness", base_custom_thickness.value()},
          {"base_printed_hardness", b(base_printed_hardness)},
          {"base_upper_hardness", b(base_upper_hardness)},
          {"base_upper_thickness", base_upper_thickness.value()},
          {"base_prefab_hardness", b(base_prefab_hardness)},
          {"base_prefab_thickness", base_prefab_thickness.value()},
          {"mid_hardness", b(mid_hardness)},
          {"mid_thickness", b(mid_thickness)},
          {"top_hardness", b(top_hardness)},
          {"top_thickness", b(top_thickness)},
          {"layer_hardness_sanity", b(layer_hardness_sanity)}};
}

DesignConstants load_constants_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open design constants file " + path);
  try {
    return DesignConstants::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed design constants: ") + e.what());
  }
}

// ---------------------------------------------------------------- rocker

MmBand expected_apex_band(const RockerSpec& spec, const DesignConstants& k) {
  MmBand base = spec.method == ApexMethod::mth_offset && spec.mth_line_from_heel
                    ? MmBand(*spec.mth_line_from_heel - k.apex_behind_mth.hi(),
                             *spec.mth_line_from_heel - k.apex_behind_mth.lo())
                    : k.apex_fraction.of(spec.shoe_length);
  const int position = code_index(spec.codes.apex_position, "FWRAP", 3);
  if (position == 2) return base.shifted(-k.apex_position_shift);
  if (position == 3) return base.shifted(k.apex_position_shift);
  return base;
}

RockerSpec rocker_spec(const FootMeasurements& m, Millimetres shoe_interior_length, const RockerCodes& codes,
                       const DesignConstants& k) {
  check_measurements(m);
  if (shoe_interior_length < m.foot_length + k.toe_allowance_min) {
    throw ValidationError("insufficient interior length: " + num(shoe_interior_length) + " mm for a " +
                          num(m.foot_length) + " mm foot needs at least " +
                          num(m.foot_length + k.toe_allowance_min) + " mm");
  }
  const int type = code_index(codes.footwear_type, "FWT", 3);
  code_index(codes.apex_position, "FWRAP", 3);
  const int direction = code_index(codes.apex_direction, "FWRAA", 3);

  RockerSpec spec;
  spec.codes = codes;
  spec.shoe_length = shoe_interior_length;
  if (m.mth_line_from_heel) {
    spec.method = ApexMethod::mth_offset;
    spec.mth_line_from_heel = m.mth_line_from_heel;
  }
  spec.apex_from_heel = expected_apex_band(spec, k);
  spec.apex_point = spec.apex_from_heel.midpoint();
  spec.rocker_angle = k.rocker_band(codes.severity);
  spec.rocker_angle_point = spec.rocker_angle.midpoint();
  spec.apex_angle = k.apex_angle_default;
  spec.rotation = direction == 2 ? Rotation::medial : direction == 3 ? Rotation::lateral : Rotation::none;
  spec.rotation_magnitude = direction == 1 ? Degrees(0) : k.apex_rotation;
  spec.placement = type == 1 ? RockerPlacement::insole : RockerPlacement::outsole;

  ValidationReport report = validate_rocker(spec, k);
  if (!report.ok()) {
    for (const auto& f : report.findings()) {
      if (f.severity == Severity::error) throw ValidationError(f.message);
    }
  }
  return spec;
}

ValidationReport validate_rocker(const RockerSpec& spec, const DesignConstants& k) {
  ValidationReport report;
  if (!k.rocker_angle_sanity.contains(spec.rocker_angle)) {
    report.error("rocker_angle", "rocker angle band " + units::format(spec.rocker_angle) + " outside " +
                                     units::format(k.rocker_angle_sanity));
  }
  const Degrees p = spec.rocker_angle_point;
  const bool in_default = k.rocker_angle_default.contains(p);
  auto code_band = k.rocker_bands.find(spec.codes.severity);
  const bool in_code = code_band != k.rocker_bands.end() && code_band->second.contains(p);
  const std::string code_desc = code_band != k.rocker_bands.end()
                                    ? spec.codes.severity + " band " + units::format(code_band->second)
                                    : "unknown severity code " + spec.codes.severity;
  if (!in_default && in_code) {
    report.warning("rocker_angle",
                   "rocker angle " + num(p) + " deg is inside the " + code_desc +
                       " but outside the general rocker angle evidence " + units::format(k.rocker_angle_default),
                   "source conflict");
  } else if (!in_default && !in_code) {
    report.warning("rocker_angle",
                   "rocker angle " + num(p) + " deg is outside both the " + code_desc +
                       " and the general rocker angle evidence " + units::format(k.rocker_angle_default),
                   "source conflict");
  }

  if (spec.shoe_length.value() <= 0) {
    report.error("shoe_length", "shoe length must be positive");
    return report;
  }
  const MmBand plausible = k.apex_plausible_fraction.of(spec.shoe_length);
  if (!plausible.contains(spec.apex_from_heel)) {
    report.error("apex_from_heel", "apex " + units::format(spec.apex_from_heel) + " outside " +
                                       num(k.apex_plausible_fraction.lo) + "-" + num(k.apex_plausible_fraction.hi) +
                                       " x shoe length " + units::format(plausible));
  }
  if (!spec.apex_from_heel.contains(spec.apex_point)) {
    report.error("apex_point", "apex point " + num(spec.apex_point) + " mm outside its band " +
                                   units::format(spec.apex_from_heel));
  }
  try {
    const MmBand expected = expected_apex_band(spec, k);
    if (!expected.contains(spec.apex_from_heel)) {
      report.warning("apex_from_heel", "apex " + units::format(spec.apex_from_heel) +
                                           " deviates from the coded evidence band " + units::format(expected));
    }
  } catch (const ValidationError& e) {
    report.error("apex_position", e.what());
  }
  if (!k.apex_angle_sanity.contains(spec.apex_angle)) {
    report.error("apex_angle", "apex angle " + num(spec.apex_angle) + " deg outside " +
                                   units::format(k.apex_angle_sanity));
  }
  return report;
}

ValidationReport validate_axis_offsets(Millimetres behind_mth1, Millimetres behind_mth2, const DesignConstants& k) {
  ValidationReport report;
  if (behind_mth1.value() <= 0 || behind_mth2.value() <= 0) {
    report.error("rocker_axis", "rocker axis must lie proximal to both MTH1 and MTH2");
  }
  if (!k.apex_behind_mth.contains(behind_mth1)) {
    report.error("rocker_axis", "axis " + num(behind_mth1) + " mm behind MTH1 outside " +
                                    units::format(k.apex_behind_mth));
  }
  if (behind_mth2 < behind_mth1) {
    report.error("rocker_axis", "axis closer to MTH2 (" + num(behind_mth2) + " mm) than to MTH1 (" +
                                    num(behind_mth1) + " mm)");
  }
  return report;
}

// ---------------------------------------------------------------- fit

ValidationReport fit_check(const FootMeasurements& m, Millimetres shoe_interior_length, bool oedema_present,
                           const DesignConstants& k) {
  ValidationReport report;
  const Millimetres allowance = shoe_interior_length - m.foot_length;
  if (allowance < k.toe_allowance_min) {
    report.error("toe_allowance", "toe allowance " + num(allowance) + "mm < " + num(k.toe_allowance_min) + "mm");
  }
  if (oedema_present) {
    report.advisory("volume_layer", "add " + num(k.oedema_volume_layer) +
                                        "mm flat volume layer below the insole to follow changing oedema");
    report.advisory("upper_height", "prefer a low-cut upper; if high-cut is indicated, pad the inner and keep "
                                    "the top edge above the vulnerable area");
  }
  return report;
}

// ---------------------------------------------------------------- heel

HeelHeightSpec heel_height_spec(Sex sex, const std::string& heel_code, const std::string& footwear_type,
                                const DesignConstants& k, std::optional<Millimetres> requested_lift) {
  const int heel = code_index(heel_code, "FWHH", 3);
  const int type = code_index(footwear_type, "FWT", 3);
  HeelHeightSpec spec;
  MmBand sex_band = sex == Sex::male     ? k.heel_height_male
                    : sex == Sex::female ? k.heel_height_female
                                         : k.heel_height_male.hull(k.heel_height_female);
  if (sex == Sex::unspecified && heel != 2) {
    spec.findings.warning("heel_height", "sex unspecified: using the hull " + units::format(sex_band) +
                                             " of the male and female norms");
  }
  switch (heel) {
    case 1:
      spec.height = sex_band;
      break;
    case 2:
      spec.height = k.heel_height_lowered;
      spec.findings.warning("heel_height",
                            "lowered heel band " + units::format(k.heel_height_lowered) +
                                " for forefoot offloading sits below the regular footwear norm " +
                                units::format(sex_band),
                            "source conflict");
      break;
    default: {
      const Millimetres lift = requested_lift.value_or(k.heel_lift_default);
      if (lift.value() <= 0) throw ValidationError("heel lift must be positive");
      if (type != 1 && lift > k.prefab_heel_lift_max) {
        throw ValidationError("prefab insole lift exceeds " + num(k.prefab_heel_lift_max) + "mm");
      }
      spec.lift = lift;
      spec.height = sex_band.shifted(lift);
      spec.findings.advisory("heel_lift", type == 1 ? "lift built into the custom shoe"
                                                    : "lift placed in the insole of the prefabricated shoe");
      break;
    }
  }
  return spec;
}

// ---------------------------------------------------------------- insole

InsoleStack insole_stack_spec(const std::string& footwear_type, const std::string& base_material,
                              const std::string& mid_material, const std::string& top_material,
                              const DesignConstants& k, const InsoleOptions& options) {
  const int type = code_index(footwear_type, "FWT", 3);
  const int base = code_index(base_material, "INSBLM", 3);
  const int mid = code_index(mid_material, "INSMLM", 2);
  const int top = code_index(top_material, "INSTLM", 3);

  // Position within each hardness band: 1 = top of band (firmest), 0 = bottom.
  const double base_pos = base == 1 ? 1.0 : base == 2 ? 0.5 : 0.0;
  const double mid_pos = mid == 1 ? 1.0 : 0.0;
  const double top_pos = top == 2 ? 1.0 : top == 1 ? 0.5 : 0.0;

  InsoleStack stack;
  stack.footwear_type = footwear_type;
  if (type == 1) {
    if (options.printed_base) {
      stack.layers.push_back({LayerRole::base, k.base_custom_thickness, k.base_printed_hardness.at(base_pos),
                              "3D printed TPU"});
    } else {
      stack.layers.push_back({LayerRole::base, k.base_custom_thickness, k.base_custom_hardness.at(base_pos),
                              "micro cork"});
    }
    if (options.dual_density_base) {
      stack.layers.push_back({LayerRole::base_upper, k.base_upper_thickness, k.base_upper_hardness.midpoint(), "EVA"});
    }
  } else {
    // Prefabricated footwear takes a stock EVA base.
    stack.layers.push_back({LayerRole::base, k.base_prefab_thickness, k.base_prefab_hardness.midpoint(), "EVA"});
  }
  stack.layers.push_back({LayerRole::mid, k.mid_thickness.midpoint(), k.mid_hardness.at(mid_pos), "Poron/PPT"});
  stack.layers.push_back({LayerRole::top, k.top_thickness.midpoint(), k.top_hardness.at(top_pos), "Plastazote"});
  return stack;
}

ValidationReport validate_insole_stack(const InsoleStack& stack, const DesignConstants& k,
                                       const InsoleOptions& options) {
  ValidationReport report;
  const int type = code_index(stack.footwear_type, "FWT", 3);
  static const std::vector<LayerRole> order{LayerRole::base, LayerRole::base_upper, LayerRole::mid, LayerRole::top};
  int bases = 0;
  std::size_t last_rank = 0;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const LayerSpec& l = stack.layers[i];
    const std::string role = to_string(l.role);
    if (l.role == LayerRole::base) ++bases;
    auto rank = static_cast<std::size_t>(std::find(order.begin(), order.end(), l.role) - order.begin());
    if (rank == order.size()) {
      report.error(role, role + " layer does not belong in the insole stack");
    } else {
      if (i > 0 && rank <= last_rank) report.error(role, "layer order must be base, base_upper, mid, top");
      last_rank = rank;
    }
    if (l.thickness.value() <= 0) report.error(role, role + " layer thickness must be positive");
    if (!k.layer_hardness_sanity.contains(l.hardness)) {
      report.error(role, role + " layer hardness " + num(l.hardness) + " outside " +
                             units::format(k.layer_hardness_sanity));
    }
    auto check_hardness = [&](const ShoreBand& band) {
      if (!band.contains(l.hardness)) {
        report.error(role, role + " layer hardness " + num(l.hardness) + " outside " + range(band) + "° Shore A");
      }
    };
    auto check_thickness = [&](const MmBand& band) {
      if (!band.contains(l.thickness)) {
        report.error(role, role + " layer thickness " + num(l.thickness) + " outside " + range(band) + "mm");
      }
    };
    switch (l.role) {
      case LayerRole::base:
        if (type != 1) {
          check_hardness(k.base_prefab_hardness);
        } else if (options.printed_base) {
          check_hardness(k.base_printed_hardness);
        } else if (l.hardness < k.base_custom_hardness.lo()) {
          report.error(role, "base layer hardness " + num(l.hardness) + " below " + num(k.base_custom_hardness.lo()) +
                                 "° Shore A");
        }
        break;
      case LayerRole::base_upper:
        check_hardness(k.base_upper_hardness);
        break;
      case LayerRole::mid:
        check_hardness(k.mid_hardness);
        check_thickness(k.mid_thickness);
        break;
      case LayerRole::top:
        check_hardness(k.top_hardness);
        check_thickness(k.top_thickness);
        break;
      default:
        break;
    }
  }
  if (bases != 1) report.error("base", "stack must contain exactly one base layer");
  if (stack.layers.empty() || stack.layers.back().role != LayerRole::top) {
    report.error("top", "stack must end with a top cover");
  }
  return report;
}

// ---------------------------------------------------------------- metatarsal addition

MetAdditionSpec met_addition_placement(const MetAdditionRequest& request, const DesignConstants& k) {
  const int addition = code_index(request.addition, "INSMA", 6);
  const int position = code_index(request.position, "INSMAP", 4);
  if (addition == 1) throw ValidationError("INSMA1 prescribes no metatarsal addition");
  if (request.mth_line_from_heel.value() <= 0) throw ValidationError("MTH line must be positive");
  if (request.top_cover_thickness.value() < 0) throw ValidationError("top cover thickness must not be negative");

  MetAdditionSpec spec;
  spec.thickness = k.met_addition_thickness;
  spec.hardness = k.met_addition_hardness;
  if (addition >= 5) {
    spec.extension = true;
    spec.placement_code = addition == 5 ? "INSMAP3" : "INSMAP4";
    if (request.position != spec.placement_code) {
      spec.findings.advisory("position", request.position + " replaced by the standard extension position " +
                                             spec.placement_code);
    }
  } else {
    if (position >= 3) {
      throw ValidationError(request.position + " applies to Morton's extensions only");
    }
    spec.placement_code = request.position;
    const double factor = request.shift_factor.value_or(k.top_cover_shift_factor);
    if (factor < 0) throw ValidationError("shift factor must not be negative");
    spec.proximal_shift = request.top_cover_thickness * factor;
    if (position == 2) spec.proximal_shift = spec.proximal_shift + k.met_addition_early_shift;
    spec.nominal_center = MmBand(request.mth_line_from_heel - k.met_addition_proximal.hi(),
                                 request.mth_line_from_heel - k.met_addition_proximal.lo());
    spec.center_from_heel = spec.nominal_center->shifted(-spec.proximal_shift);
    if (spec.center_from_heel->lo().value() <= 0) throw ValidationError("negative resulting position");
  }
  if (request.thickness && !k.met_addition_thickness.contains(*request.thickness)) {
    spec.findings.error("thickness", "thickness " + num(*request.thickness) + "mm outside " +
                                         range(k.met_addition_thickness) + "mm");
  }
  if (request.hardness && !k.met_addition_hardness.contains(*request.hardness)) {
    spec.findings.error("hardness", "hardness " + num(*request.hardness) + " outside " +
                                        range(k.met_addition_hardness) + "° Shore A");
  }
  return spec;
}

// ---------------------------------------------------------------- arch support

MlaSpec mla_spec(Millimetres cast_height, const std::string& height_code, const DesignConstants& k,
                 std::optional<Millimetres> requested_addition) {
  const int code = code_index(height_code, "INSMLAH", 2);
  if (cast_height.value() <= 0) throw ValidationError("cast height must be positive");
  MlaSpec spec;
  if (code == 1) {
    spec.height = cast_height;
    return spec;
  }
  spec.addition = requested_addition.value_or(k.mla_addition.midpoint());
  if (!k.mla_addition.contains(spec.addition)) {
    spec.findings.error("mla_addition", "arch addition " + num(spec.addition) + "mm outside " +
                                            range(k.mla_addition) + "mm");
  }
  spec.height = cast_height + spec.addition;
  return spec;
}

// ---------------------------------------------------------------- cut-out

CutoutSpec cutout_spec(const RegionOfInterest& roi, const DesignConstants& k, std::optional<Millimetres> margin,
                       std::optional<ShoreA> pad_hardness) {
  if (roi.radius.value() <= 0) throw ValidationError("ROI radius must be positive");
  const Millimetres m = margin.value_or(k.cutout_margin_default);
  if (m.value() < 0) throw ValidationError("cut-out margin must not be negative");
  CutoutSpec spec;
  spec.depth = k.cutout_depth;
  spec.boundary_radius = roi.radius + m;
  spec.pad = {LayerRole::cutout_pad, k.cutout_pad_thickness, pad_hardness.value_or(k.cutout_pad_hardness_max),
              "durable cushioning pad"};
  if (m.value() == 0) spec.findings.advisory("boundary", "cut-out not larger than ROI");
  if (spec.pad.hardness > k.cutout_pad_hardness_max) {
    spec.findings.error("pad", "pad hardness " + num(spec.pad.hardness) + " exceeds " +
                                   num(k.cutout_pad_hardness_max) + "° Shore A");
  }
  return spec;
}

// ---------------------------------------------------------------- design sheets

std::string to_string(Sex sex) {
  switch (sex) {
    case Sex::male: return "male";
    case Sex::female: return "female";
    case Sex::unspecified: return "unspecified";
  }
  return "unspecified";
}

Sex parse_sex(const std::string& s) {
  if (s == "male" || s == "m") return Sex::male;
  if (s == "female" || s == "f") return Sex::female;
  if (s == "unspecified" || s.empty()) return Sex::unspecified;
  throw ValidationError("unknown sex '" + s + "'");
}

std::string to_string(LayerRole role) {
  switch (role) {
    case LayerRole::base: return "base";
    case LayerRole::base_upper: return "base_upper";
    case LayerRole::mid: return "mid";
    case LayerRole::top: return "top";
    case LayerRole::metatarsal_addition: return "metatarsal_addition";
    case LayerRole::cutout_pad: return "cutout_pad";
  }
  return "base";
}

json design_sheet(const RockerSpec& spec, const ValidationReport& report) {
  const char* rotation = spec.rotation == Rotation::medial ? "medial" : spec.rotation == Rotation::lateral ? "lateral" : "none";
  json j{{"sheet", "rocker"},
         {"shoe_length_mm", spec.shoe_length.value()},
         {"method", spec.method == ApexMethod::mth_offset ? "mth_offset" : "shoe_length_fraction"},
         {"apex_from_heel", band_json(spec.apex_from_heel)},
         {"apex_point_mm", spec.apex_point.value()},
         {"rocker_angle", band_json(spec.rocker_angle)},
         {"rocker_angle_point_deg", spec.rocker_angle_point.value()},
         {"apex_angle_deg", spec.apex_angle.value()},
         {"apex_rotation", {{"direction", rotation}, {"magnitude_deg", spec.rotation_magnitude.value()}}},
         {"placement", spec.placement == RockerPlacement::insole ? "insole" : "outsole"},
         {"codes",
          {{"FWT", spec.codes.footwear_type},
           {"FWRAP", spec.codes.apex_position},
           {"FWRAA", spec.codes.apex_direction},
           {"FWRANG", spec.codes.severity}}},
         {"validation", report}};
  if (spec.mth_line_from_heel) j["mth_line_from_heel_mm"] = spec.mth_line_from_heel->value();
  return j;
}

json design_sheet(const HeelHeightSpec& spec) {
  json j{{"sheet", "heel_height"}, {"height", band_json(spec.height)}, {"validation", spec.findings}};
  if (spec.lift) j["lift_mm"] = spec.lift->value();
  return j;
}

json design_sheet(const InsoleStack& stack, const ValidationReport& report) {
  json layers = json::array();
  for (const auto& l : stack.layers) layers.push_back(layer_json(l));
  return {{"sheet", "insole"}, {"footwear_type", stack.footwear_type}, {"layers", layers}, {"validation", report}};
}

json design_sheet(const MetAdditionSpec& spec) {
  json j{{"sheet", "metatarsal_addition"},
         {"extension", spec.extension},
         {"placement_code", spec.placement_code},
         {"proximal_shift_mm", spec.proximal_shift.value()},
         {"thickness", band_json(spec.thickness)},
         {"hardness", band_json(spec.hardness)},
         {"validation", spec.findings}};
  if (spec.nominal_center) j["nominal_center_from_heel"] = band_json(*spec.nominal_center);
  if (spec.center_from_heel) j["center_from_heel"] = band_json(*spec.center_from_heel);
  return j;
}

json design_sheet(const MlaSpec& spec) {
  return {{"sheet", "medial_arch"},
          {"height_mm", spec.height.value()},
          {"addition_mm", spec.addition.value()},
          {"validation", spec.findings}};
}

json design_sheet(const CutoutSpec& spec) {
  return {{"sheet", "cutout"},
          {"shape", spec.shape},
          {"depth_mm", spec.depth.value()},
          {"boundary_radius_mm", spec.boundary_radius.value()},
          {"pad", layer_json(spec.pad)},
          {"validation", spec.findings}};
}

}  // namespace pedocds::geometry
