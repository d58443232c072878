// Acceptance suite: one PASS/FAIL line per criterion, each against its own
// time limit. Exit status is non-zero when any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "pedocds/error.hpp"
#include "pedocds/geometry.hpp"
#include "pedocds/pressure.hpp"
#include "pedocds/recommender.hpp"
#include "pedocds/ruledsl.hpp"
#include "pedocds/trial.hpp"
#include "support.hpp"
#include "trial_model.hpp"

using namespace pedocds;
using nlohmann::json;

namespace {

// Collects the first few reasons a criterion failed.
struct Check {
  std::vector<std::string> problems;
  long checked = 0;

  void expect(bool ok, const std::string& what) {
    ++checked;
    if (!ok && problems.size() < 5) problems.push_back(what);
    if (!ok && problems.size() == 5) problems.push_back("...");
  }
  bool ok() const { return problems.empty(); }
};

std::string num(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

// ---------------------------------------------------------------- 1

void catalog_fidelity(Check& c) {
  const auto cat = taxonomy::load_catalog_file((testing::data_dir() / "catalog.json").string());
  const std::vector<std::pair<std::string, int>> inputs{{"PPIA", 12}, {"FSS", 6},  {"MFP", 10}, {"CM", 8},  {"PBW", 5},
                                                        {"PMS", 9},   {"FCPA", 4}, {"FO", 5},   {"FOIS", 3}};
  const std::vector<std::pair<std::string, int>> outputs{
      {"FWT", 3},    {"FWS", 5},    {"FWUP", 4},     {"FWL", 3},     {"FFS", 8},    {"FWUFL", 3},
      {"FWUSL", 4},  {"FWTFL", 3},  {"FWHC", 4},     {"FWHH", 3},    {"FWHM", 3},   {"FWOS", 3},
      {"FWRP", 2},   {"FWRAP", 3},  {"FWRAA", 3},    {"FWRANG", 3},  {"INST", 2},   {"CMINS", 6},
      {"INSBLM", 3}, {"INSMLM", 2}, {"INSTLM", 3},   {"INSHC", 3},   {"INSHW", 2},  {"INSMLAH", 2},
      {"INSMA", 6},  {"INSMAP", 4}, {"INSMATH", 2},  {"INSMAMAT", 3}, {"INSMOD", 4}, {"POEM", 3}};
  c.expect(cat.inputs().size() == 9, "inputs: " + std::to_string(cat.inputs().size()));
  c.expect(cat.outputs().size() == 30, "outputs: " + std::to_string(cat.outputs().size()));
  auto check_side = [&](const std::vector<const taxonomy::FeatureDef*>& got,
                        const std::vector<std::pair<std::string, int>>& want) {
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (i >= got.size()) break;
      c.expect(got[i]->id == want[i].first, "feature " + std::to_string(i) + " is " + got[i]->id);
      c.expect(static_cast<int>(got[i]->codes.size()) == want[i].second,
               want[i].first + " has " + std::to_string(got[i]->codes.size()) + " codes");
      for (std::size_t k = 0; k < got[i]->codes.size(); ++k) {
        c.expect(got[i]->codes[k].code == want[i].first + std::to_string(k + 1), "code " + got[i]->codes[k].code);
      }
    }
  };
  check_side(cat.inputs(), inputs);
  check_side(cat.outputs(), outputs);
}

// ---------------------------------------------------------------- 2

void rule_regression(Check& c) {
  const auto& cat = testing::catalog();
  const auto& rules = testing::shipped_rules();
  const auto& golden = testing::golden();
  c.expect(golden.records.size() == 3, "golden dataset has 3 records");
  std::vector<ruledsl::Evaluation> evals;
  for (const auto& rec : golden.records) evals.push_back(ruledsl::evaluate(rules, rec.profile, cat));
  if (evals.size() != 3) return;
  auto value = [&](int i, const std::string& f) {
    const auto& v = evals[static_cast<std::size_t>(i)].partial.values;
    auto it = v.find(f);
    return it == v.end() ? taxonomy::CodeSet{} : it->second;
  };
  c.expect(value(0, "FWT") == taxonomy::CodeSet{"FWT3"}, "participant 1 FWT");
  c.expect(value(1, "FWT") == taxonomy::CodeSet{"FWT3"}, "participant 2 FWT");
  c.expect(value(0, "INST") == taxonomy::CodeSet{"INST2"}, "participant 1 INST");
  for (std::size_t i = 0; i < 3; ++i) {
    for (const auto& [feature, codes] : evals[i].partial.values) {
      const auto& truth = golden.records[i].outcome.values;
      auto it = truth.find(feature);
      if (it == truth.end()) continue;  // unspecified in the table
      c.expect(it->second == codes, "participant " + std::to_string(i + 1) + " " + feature + " contradicts the table");
    }
  }
}

// ---------------------------------------------------------------- 3

void memorization(Check& c) {
  const auto& cat = testing::catalog();
  int memorized = 0;
  for (const auto* f : cat.outputs()) {
    const auto ds = recommender::with_target(testing::golden(), f->id);
    const auto tree = recommender::train_tree(ds, f->id, {}, cat);
    bool all = !ds.records.empty();
    for (const auto& r : ds.records) all = all && tree.predict(r.profile).codes == r.outcome.values.at(f->id);
    c.expect(all, f->id + " not memorized");
    memorized += all;
  }
  c.expect(memorized == 30, std::to_string(memorized) + "/30 targets");
}

// ---------------------------------------------------------------- 4

void forest_determinism(Check& c) {
  const auto& cat = testing::catalog();
  recommender::TrainingSpec spec;
  spec.kind = recommender::ModelKind::forest;
  spec.seed = 42;
  std::vector<std::string> targets;
  for (const auto* f : cat.outputs()) targets.push_back(f->id);
  const auto a = recommender::train_models(testing::golden(), targets, spec, cat);
  const auto b = recommender::train_models(testing::golden(), targets, spec, cat);
  c.expect(a.size() == 30, "forests trained: " + std::to_string(a.size()));
  c.expect(a == b, "forests differ structurally");
  for (const auto& [t, m] : a) c.expect(recommender::model_to_json(m) == recommender::model_to_json(b.at(t)), t);
  testing::Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto p = testing::random_profile(rng, cat);
    for (const auto& [t, m] : a) c.expect(m.predict(p) == b.at(t).predict(p), "prediction differs for " + t);
  }
}

// ---------------------------------------------------------------- 5

// Literal reference constants, independent of DesignConstants.
void geometry_bands(Check& c) {
  using namespace geometry;
  const DesignConstants k{};
  testing::Rng rng(5150);
  const double eps = 1e-9;
  auto band_is = [&](const MmBand& b, double lo, double hi) {
    return std::abs(b.lo().value() - lo) <= eps && std::abs(b.hi().value() - hi) <= eps;
  };
  for (int i = 0; i < 1000; ++i) {
    const std::string tag = "#" + std::to_string(i) + " ";
    const double length = testing::uniform_real(rng, 220, 300);
    const double interior = length + testing::uniform_real(rng, 10, 20);
    const int fwrap = testing::uniform_int(rng, 1, 3);
    const int fwraa = testing::uniform_int(rng, 1, 3);
    const int fwrang = testing::uniform_int(rng, 1, 3);
    const int fwt = testing::uniform_int(rng, 1, 3);
    FootMeasurements foot;
    foot.foot_length = Millimetres(length);
    const bool with_mth = testing::uniform_int(rng, 0, 1) == 1;
    const double mth = testing::uniform_real(rng, 0.70, 0.73) * length;
    if (with_mth) foot.mth_line_from_heel = Millimetres(mth);

    // rocker
    const RockerCodes codes{"FWT" + std::to_string(fwt), "FWRAP" + std::to_string(fwrap),
                            "FWRAA" + std::to_string(fwraa), "FWRANG" + std::to_string(fwrang)};
    const auto r = rocker_spec(foot, Millimetres(interior), codes, k);
    const double shift = fwrap == 2 ? -5.0 : fwrap == 3 ? 5.0 : 0.0;
    const double lo = with_mth ? mth - 15 : 0.60 * interior;
    const double hi = with_mth ? mth - 10 : 0.65 * interior;
    c.expect(band_is(r.apex_from_heel, lo + shift, hi + shift), tag + "apex band");
    c.expect(r.apex_point >= r.apex_from_heel.lo() && r.apex_point <= r.apex_from_heel.hi(), tag + "apex point");
    c.expect(r.apex_angle.value() == 95, tag + "apex angle");
    const double rl = fwrang == 1 ? 12 : fwrang == 2 ? 20 : 30;
    const double rh = fwrang == 1 ? 15 : 45;
    c.expect(r.rocker_angle.lo().value() == rl && r.rocker_angle.hi().value() == rh, tag + "rocker band");
    c.expect(r.rocker_angle_point >= r.rocker_angle.lo() && r.rocker_angle_point <= r.rocker_angle.hi(),
             tag + "rocker angle point");
    c.expect(r.rotation_magnitude.value() == (fwraa == 1 ? 0 : 5), tag + "rotation");
    c.expect(validate_rocker(r, k).ok(), tag + "rocker validator");

    // toe allowance
    const double probe = length + testing::uniform_real(rng, 0, 20);
    c.expect(fit_check(foot, Millimetres(probe), false, k).ok() == (probe - length >= 10), tag + "toe allowance");

    // metatarsal addition
    MetAdditionRequest mreq;
    mreq.mth_line_from_heel = Millimetres(mth);
    mreq.addition = "INSMA" + std::to_string(testing::uniform_int(rng, 2, 4));
    mreq.position = testing::uniform_int(rng, 0, 1) ? "INSMAP1" : "INSMAP2";
    const double cover = testing::uniform_real(rng, 0, 5);
    mreq.top_cover_thickness = Millimetres(cover);
    mreq.thickness = Millimetres(testing::uniform_real(rng, 5, 11));
    const auto m = met_addition_placement(mreq, k);
    const double early = mreq.position == "INSMAP2" ? 5.0 : 0.0;
    c.expect(m.center_from_heel && band_is(*m.center_from_heel, mth - 11 - cover - early, mth - 6 - cover - early),
             tag + "met addition centre");
    c.expect(band_is(m.thickness, 5, 11), tag + "met thickness band");
    c.expect(m.hardness.lo().value() == 30 && m.hardness.hi().value() == 35, tag + "met hardness band");
    c.expect(m.findings.ok(), tag + "met validator");

    // heel height
    const int sex = testing::uniform_int(rng, 0, 2);
    const int hh = testing::uniform_int(rng, 1, 3);
    const double lift = testing::uniform_real(rng, 1, fwt == 1 ? 20 : 10);
    const Sex s = sex == 0 ? Sex::male : sex == 1 ? Sex::female : Sex::unspecified;
    const auto h = heel_height_spec(s, "FWHH" + std::to_string(hh), "FWT" + std::to_string(fwt), k, Millimetres(lift));
    const double blo = sex == 1 ? 25 : 15;
    const double bhi = sex == 0 ? 20 : 30;
    if (hh == 1) c.expect(band_is(h.height, blo, bhi), tag + "heel norm");
    if (hh == 2) c.expect(band_is(h.height, 10, 15), tag + "lowered heel");
    if (hh == 3) c.expect(band_is(h.height, blo + lift, bhi + lift), tag + "raised heel");
    c.expect(h.findings.ok(), tag + "heel validator");

    // cut-out
    RegionOfInterest roi;
    roi.radius = Millimetres(testing::uniform_real(rng, 3, 20));
    const auto cut = cutout_spec(roi, k, std::nullopt, ShoreA(testing::uniform_real(rng, 10, 30)));
    c.expect(cut.depth.value() == 5, tag + "cut-out depth");
    c.expect(cut.pad.thickness.value() == 3, tag + "pad thickness");
    c.expect(cut.pad.hardness.value() <= 30, tag + "pad hardness");
    c.expect(cut.boundary_radius > roi.radius, tag + "cut-out boundary");
    c.expect(cut.findings.ok(), tag + "cut-out validator");
  }
}

// ---------------------------------------------------------------- 6

void known_points(Check& c) {
  using namespace geometry;
  const DesignConstants k{};
  FootMeasurements foot;
  foot.foot_length = Millimetres(262);
  const auto a = rocker_spec(foot, Millimetres(280), {}, k);
  c.expect(a.apex_from_heel.lo().value() == 168 && a.apex_from_heel.hi().value() == 182,
           "280 mm -> [" + num(a.apex_from_heel.lo().value()) + ", " + num(a.apex_from_heel.hi().value()) + "]");
  foot.mth_line_from_heel = Millimetres(195);
  const auto b = rocker_spec(foot, Millimetres(280), {}, k);
  c.expect(b.apex_from_heel.lo().value() == 180 && b.apex_from_heel.hi().value() == 185,
           "mth 195 -> [" + num(b.apex_from_heel.lo().value()) + ", " + num(b.apex_from_heel.hi().value()) + "]");
  const auto h = heel_height_spec(Sex::male, "FWHH1", "FWT2", k);
  c.expect(h.height.lo().value() == 15 && h.height.hi().value() == 20, "male FWHH1");
}

// ---------------------------------------------------------------- 7

double brute_ppp(const pressure::Recording& rec, const pressure::ZoneMask& m) {
  double best = 0;
  for (const auto& f : rec.frames)
    for (int r = 0; r < f.grid.rows(); ++r)
      for (int col = 0; col < f.grid.cols(); ++col)
        if (m.cells(r, col)) best = std::max(best, f.grid(r, col));
  return best;
}

double brute_pti(const pressure::Recording& rec, const pressure::ZoneMask& m) {
  std::vector<double> peaks;
  for (const auto& f : rec.frames) {
    double p = 0;
    for (int r = 0; r < f.grid.rows(); ++r)
      for (int col = 0; col < f.grid.cols(); ++col)
        if (m.cells(r, col)) p = std::max(p, f.grid(r, col));
    peaks.push_back(p);
  }
  double sum = 0;
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i)
    sum += (peaks[i] + peaks[i + 1]) / 2 * (rec.frames[i + 1].t - rec.frames[i].t);
  return sum;
}

double brute_area(const pressure::Frame& f, const pressure::ZoneMask& m, double thr) {
  int n = 0;
  for (int r = 0; r < f.grid.rows(); ++r)
    for (int col = 0; col < f.grid.cols(); ++col) n += m.cells(r, col) && f.grid(r, col) > thr;
  return n * f.cell_area;
}

void pressure_oracle(Check& c) {
  using namespace pressure;
  testing::Rng rng(909);
  for (int i = 0; i < 200; ++i) {
    const int rows = testing::uniform_int(rng, 10, 18);
    const int cols = testing::uniform_int(rng, 2, 7);
    const int frames = testing::uniform_int(rng, 2, 6);
    std::vector<std::pair<double, std::vector<double>>> fs;
    double t = 0;
    for (int k = 0; k < frames; ++k) {
      std::vector<double> v(static_cast<std::size_t>(rows * cols));
      for (auto& x : v) x = testing::uniform_int(rng, 0, 3) == 0 ? 0.0 : testing::uniform_real(rng, 0, 450);
      fs.emplace_back(t, v);
      t += testing::uniform_real(rng, 0.005, 0.05);
    }
    const auto rec = testing::recording(rows, cols, testing::uniform_real(rng, 0.1, 1.0), fs);
    const double thr = testing::uniform_real(rng, 0, 40);
    const auto side = testing::uniform_int(rng, 0, 1) ? Side::left : Side::right;
    for (const auto& m : anatomical_masks(rows, cols, side)) {
      const std::string tag = "#" + std::to_string(i) + " " + m.name + " ";
      c.expect(close_rel(peak_pressure(rec, m), brute_ppp(rec, m), 1e-9), tag + "PPP");
      c.expect(close_rel(pressure_time_integral(rec, m), brute_pti(rec, m), 1e-9), tag + "PTI");
      double best = 0;
      for (const auto& f : rec.frames) best = std::max(best, brute_area(f, m, thr));
      c.expect(close_rel(contact_area(rec, m, thr), best, 1e-9), tag + "contact area");
    }
  }

  // Hand cases: a 1x2 grid whose masked peak runs 100, 200, 100 kPa at 0.1 s steps.
  const auto hand = testing::recording(1, 2, 0.5, {{0.0, {100, 20}}, {0.1, {50, 200}}, {0.2, {100, 0}}});
  ZoneMask all{"all", Cells::Constant(1, 2, true)};
  c.expect(close_rel(pressure_time_integral(hand, all), 30.0, 1e-9),
           "PTI hand case " + num(pressure_time_integral(hand, all)));

  const auto base = parse_recording(testing::slurp(testing::data_dir() / "fixtures/baseline.pressure.csv"));
  const auto intervention = parse_recording(testing::slurp(testing::data_dir() / "fixtures/intervention.pressure.csv"));
  const auto report = compare(base, intervention, OffloadTarget{});
  const auto* fore = report.find("forefoot");
  c.expect(fore && fore->ppp_reduction_pct && close_rel(*fore->ppp_reduction_pct, 35.0, 1e-9),
           "forefoot reduction 35%");
}

// ---------------------------------------------------------------- 8

void trial_safety(Check& c) {
  const auto r = testing::enumerate_trials(8);
  for (const auto& f : r.failures) c.expect(false, f);
  c.expect(r.sequences > 1, "enumeration visited " + std::to_string(r.sequences) + " sequences");
  c.expect(trial::adherence(12, 14).goal_met(), "adherence (12, 14) should meet the goal");
  c.expect(!trial::adherence(8, 10).goal_met(), "adherence (8, 10) should not meet the goal");
}

// ---------------------------------------------------------------- 9

void dsl_round_trip(Check& c) {
  const auto& cat = testing::catalog();
  const auto& shipped = testing::shipped_rules();
  c.expect(ruledsl::parse_rules(ruledsl::print_rules(shipped), cat) == shipped, "shipped file");
  testing::Rng rng(99);
  ruledsl::RuleSet generated;
  generated.catalog_version = cat.version();
  for (int i = 0; i < 100; ++i) generated.rules.push_back(testing::random_rule(rng, cat, "gen-" + std::to_string(i)));
  const auto text = ruledsl::print_rules(generated);
  const auto back = ruledsl::parse_rules(text, cat);
  c.expect(back == generated, "generated rules");
  c.expect(ruledsl::print_rules(back) == text, "print is stable");
}

// ---------------------------------------------------------------- 10

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& cmd) {
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void end_to_end(Check& c) {
  namespace fs = std::filesystem;
  const fs::path profile = testing::data_dir() / "fixtures/participant1.profile.json";
  const auto cli = run(std::string(PEDOCDS_CLI) + " --data " + testing::data_dir().string() +
                       " --json recommend --profile " + profile.string() + " 2>/dev/null");
  c.expect(cli.code == 0, "cli exit " + std::to_string(cli.code));
  json out;
  try {
    out = json::parse(cli.out);
  } catch (const json::exception& e) {
    c.expect(false, std::string("cli output is not JSON: ") + e.what());
    return;
  }
  const json& rx = out["prescription"];
  c.expect(rx["values"].size() == 30, "features: " + std::to_string(rx["values"].size()));
  for (const auto* f : testing::catalog().outputs()) c.expect(rx["values"].contains(f->id), "missing " + f->id);

  const auto& truth = testing::golden().records.at(0).outcome.values;
  int rule_entries = 0;
  for (const auto& [feature, source] : rx["sources"].items()) {
    if (source.value("origin", "") != "RULE") continue;
    ++rule_entries;
    auto it = truth.find(feature);
    c.expect(it != truth.end() && rx["values"][feature].get<taxonomy::CodeSet>() == it->second,
             feature + " differs from the table");
  }
  c.expect(rule_entries == 2, "rule-sourced entries: " + std::to_string(rule_entries));

  const fs::path tmp = fs::temp_directory_path() / ("pedocds-accept-" + std::to_string(::getpid()) + ".json");
  std::ofstream(tmp) << rx.dump();
  const fs::path schema = testing::data_dir() / "schemas/prescription.schema.json";
  const auto check = run("python3 -c \"import json,sys,jsonschema; jsonschema.validate(json.load(open(sys.argv[1])), "
                         "json.load(open(sys.argv[2])))\" " +
                         tmp.string() + " " + schema.string() + " 2>&1");
  fs::remove(tmp);
  c.expect(check.code == 0, "schema validation: " + check.out.substr(0, 300));
}

struct Criterion {
  const char* name;
  double limit_s;
  std::function<void(Check&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"catalog fidelity: 9 inputs, 30 outputs, reference code counts", 1, catalog_fidelity},
      {"rule regression on the three reference cases", 1, rule_regression},
      {"memorization: resubstitution accuracy 1.0 on 30/30 targets", 5, memorization},
      {"forest determinism: seed 42, 100 random profiles", 10, forest_determinism},
      {"geometry bands: 1000 randomized inputs, zero violations", 5, geometry_bands},
      {"known-point geometry: 280 mm, mth 195 mm, male FWHH1", 1, known_points},
      {"pressure oracle: 200 random grids to 1e-9, PTI 30, 35% reduction", 10, pressure_oracle},
      {"trial safety: enumeration to length 8, adherence goal", 5, trial_safety},
      {"DSL round-trip: shipped file and 100 generated rules", 2, dsl_round_trip},
      {"end-to-end: CLI recommend on participant 1, schema valid", 2, end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& cr = criteria[i];
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= cr.limit_s) check.problems.push_back("took " + num(secs) + " s, limit " + num(cr.limit_s) + " s");
    const bool pass = check.ok();
    failed += !pass;
    std::printf("%s  %2zu. %s  (%.3f s / %.0f s, %ld checks)\n", pass ? "PASS" : "FAIL", i + 1, cr.name, secs,
                cr.limit_s, check.checked);
    for (const auto& p : check.problems) std::printf("        %s\n", p.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
