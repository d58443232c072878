#pragma once

// Numeric design parameters behind the coded prescription: rocker profile,
// fit allowance, heel height, insole layer stack, metatarsal additions,
// medial arch support and cut-outs. Every band is a closed interval; the
// single "default" value of a band is its midpoint.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedocds/units.hpp"
#include "pedocds/validation.hpp"

namespace pedocds::geometry {

using units::DegBand;
using units::Degrees;
using units::FractionBand;
using units::MmBand;
using units::Millimetres;
using units::ShoreA;
using units::ShoreBand;

enum class Sex { male, female, unspecified };

struct FootMeasurements {
  Millimetres foot_length{0};
  Millimetres foot_width{0};
  std::optional<Millimetres> mth1_from_heel;
  std::optional<Millimetres> mth2_from_heel;
  std::optional<Millimetres> mth_line_from_heel;
  Sex sex = Sex::unspecified;
  double body_weight_kg = 0.0;
};

/// Throws ValidationError when a length is not positive or an MTH lies beyond the foot.
void check_measurements(const FootMeasurements& m);

/// Every evidence band the design rules draw on. Defaults carry the
/// reference values; a JSON config may override any of them.
struct DesignConstants {
  FractionBand apex_fraction{0.60, 0.65};
  FractionBand apex_plausible_fraction{0.55, 0.70};
  MmBand apex_behind_mth{10, 15};
  Millimetres apex_position_shift{5};
  DegBand rocker_angle_default{15, 20};
  std::map<std::string, DegBand> rocker_bands{{"FWRANG1", {12, 15}}, {"FWRANG2", {20, 45}}, {"FWRANG3", {30, 45}}};
  DegBand rocker_angle_sanity{5, 45};
  Degrees apex_angle_default{95};
  DegBand apex_angle_sanity{80, 110};
  Degrees apex_rotation{5};
  Millimetres toe_allowance_min{10};
  MmBand heel_height_male{15, 20};
  MmBand heel_height_female{25, 30};
  MmBand heel_height_lowered{10, 15};
  Millimetres prefab_heel_lift_max{10};
  Millimetres heel_lift_default{5};
  MmBand met_addition_thickness{5, 11};
  ShoreBand met_addition_hardness{30, 35};
  MmBand met_addition_proximal{6, 11};
  Millimetres met_addition_early_shift{5};
  double top_cover_shift_factor = 1.0;
  MmBand mla_addition{3, 5};
  Millimetres cutout_depth{5};
  Millimetres cutout_pad_thickness{3};
  ShoreA cutout_pad_hardness_max{30};
  Millimetres cutout_margin_default{2};
  Millimetres oedema_volume_layer{1.5};
  std::pair<int, int> top_cover_replace_months{3, 6};
  ShoreBand base_custom_hardness{55, 70};
  Millimetres base_custom_thickness{5};
  ShoreBand base_printed_hardness{45, 55};
  ShoreBand base_upper_hardness{35, 40};
  Millimetres base_upper_thickness{5};
  ShoreBand base_prefab_hardness{35, 40};
  Millimetres base_prefab_thickness{6};
  ShoreBand mid_hardness{30, 35};
  MmBand mid_thickness{3, 6};
  ShoreBand top_hardness{15, 30};
  MmBand top_thickness{3, 5};
  ShoreBand layer_hardness_sanity{5, 90};

  /// Open-ended rocker bands ("at least 20 deg") are capped at the sanity maximum.
  const DegBand& rocker_band(const std::string& code) const;

  static DesignConstants from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

DesignConstants load_constants_file(const std::string& path);

// ---------------------------------------------------------------- rocker

enum class ApexMethod { shoe_length_fraction, mth_offset };
enum class RockerPlacement { insole, outsole };
enum class Rotation { none, medial, lateral };

struct RockerCodes {
  std::string footwear_type = "FWT2";  // FWT
  std::string apex_position = "FWRAP1";
  std::string apex_direction = "FWRAA1";
  std::string severity = "FWRANG1";
};

struct RockerSpec {
  Millimetres shoe_length{0};
  ApexMethod method = ApexMethod::shoe_length_fraction;
  std::optional<Millimetres> mth_line_from_heel;
  MmBand apex_from_heel;
  Millimetres apex_point{0};
  DegBand rocker_angle;
  Degrees rocker_angle_point{0};
  Degrees apex_angle{95};
  Rotation rotation = Rotation::none;
  Degrees rotation_magnitude{0};
  RockerPlacement placement = RockerPlacement::outsole;
  RockerCodes codes;
};

/// Apex band from the shoe length, or from the MTH line when it is known,
/// shifted for early/delayed apex codes. Throws on insufficient interior
/// length, unknown codes, or an apex outside the plausible range.
RockerSpec rocker_spec(const FootMeasurements& m, Millimetres shoe_interior_length, const RockerCodes& codes,
                       const DesignConstants& k);

/// The apex band the codes call for, before any clinician adjustment.
MmBand expected_apex_band(const RockerSpec& spec, const DesignConstants& k);

ValidationReport validate_rocker(const RockerSpec& spec, const DesignConstants& k);

/// Checks a rocker axis given by its distance behind MTH1 and behind MTH2.
/// The axis must sit behind both heads, inside the apex band behind MTH1,
/// and no closer to MTH2 than to MTH1.
ValidationReport validate_axis_offsets(Millimetres behind_mth1, Millimetres behind_mth2, const DesignConstants& k);

// ---------------------------------------------------------------- fit

ValidationReport fit_check(const FootMeasurements& m, Millimetres shoe_interior_length, bool oedema_present,
                           const DesignConstants& k);

// ---------------------------------------------------------------- heel

struct HeelHeightSpec {
  MmBand height;
  std::optional<Millimetres> lift;
  ValidationReport findings;
};

HeelHeightSpec heel_height_spec(Sex sex, const std::string& heel_code, const std::string& footwear_type,
                                const DesignConstants& k, std::optional<Millimetres> requested_lift = std::nullopt);

// ---------------------------------------------------------------- insole

enum class LayerRole { base, base_upper, mid, top, metatarsal_addition, cutout_pad };

struct LayerSpec {
  LayerRole role = LayerRole::base;
  Millimetres thickness{0};
  ShoreA hardness{0};
  std::string material_note;
};

struct InsoleStack {
  std::vector<LayerSpec> layers;  // plantar side up
  std::string footwear_type;
};

struct InsoleOptions {
  bool printed_base = false;   // 3D printed TPU base instead of micro cork (custom footwear)
  bool dual_density_base = false;
};

InsoleStack insole_stack_spec(const std::string& footwear_type, const std::string& base_material,
                              const std::string& mid_material, const std::string& top_material,
                              const DesignConstants& k, const InsoleOptions& options = {});

ValidationReport validate_insole_stack(const InsoleStack& stack, const DesignConstants& k,
                                       const InsoleOptions& options = {});

// ---------------------------------------------------------------- metatarsal addition

struct MetAdditionRequest {
  Millimetres mth_line_from_heel{0};
  std::string addition = "INSMA2";   // INSMA
  std::string position = "INSMAP1";  // INSMAP
  Millimetres top_cover_thickness{0};
  std::optional<double> shift_factor;  // defaults to the configured factor
  std::optional<Millimetres> thickness;
  std::optional<ShoreA> hardness;
};

struct MetAdditionSpec {
  bool extension = false;           // Morton's / reverse Morton's
  std::string placement_code;       // INSMAP code actually applied
  std::optional<MmBand> nominal_center;
  std::optional<MmBand> center_from_heel;
  Millimetres proximal_shift{0};
  MmBand thickness;
  ShoreBand hardness;
  ValidationReport findings;
};

MetAdditionSpec met_addition_placement(const MetAdditionRequest& request, const DesignConstants& k);

// ---------------------------------------------------------------- arch support

struct MlaSpec {
  Millimetres height{0};
  Millimetres addition{0};
  ValidationReport findings;
};

MlaSpec mla_spec(Millimetres cast_height, const std::string& height_code, const DesignConstants& k,
                 std::optional<Millimetres> requested_addition = std::nullopt);

// ---------------------------------------------------------------- cut-out

struct RegionOfInterest {
  Millimetres center_x{0};
  Millimetres center_y{0};
  Millimetres radius{0};
};

struct CutoutSpec {
  std::string shape = "oval";
  Millimetres depth{0};
  LayerSpec pad;
  Millimetres boundary_radius{0};
  ValidationReport findings;
};

CutoutSpec cutout_spec(const RegionOfInterest& roi, const DesignConstants& k,
                       std::optional<Millimetres> margin = std::nullopt,
                       std::optional<ShoreA> pad_hardness = std::nullopt);

// ---------------------------------------------------------------- design sheets

std::string to_string(Sex sex);
Sex parse_sex(const std::string& s);
std::string to_string(LayerRole role);

nlohmann::json design_sheet(const RockerSpec& spec, const ValidationReport& report);
nlohmann::json design_sheet(const HeelHeightSpec& spec);
nlohmann::json design_sheet(const InsoleStack& stack, const ValidationReport& report);
nlohmann::json design_sheet(const MetAdditionSpec& spec);
nlohmann::json design_sheet(const MlaSpec& spec);
nlohmann::json design_sheet(const CutoutSpec& spec);

}  // namespace pedocds::geometry
