#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pedocds/error.hpp"
#include "support.hpp"

using namespace pedocds;
using namespace pedocds::taxonomy;
using nlohmann::json;

namespace {

// Code counts per feature, written out by hand from the reference feature table.
const std::map<std::string, int> expected_counts{
    {"PPIA", 12},  {"FSS", 6},    {"MFP", 10},  {"CM", 8},      {"PBW", 5},     {"PMS", 9},     {"FCPA", 4},
    {"FO", 5},     {"FOIS", 3},   {"FWT", 3},   {"FWS", 5},     {"FWUP", 4},    {"FWL", 3},     {"FFS", 8},
    {"FWUFL", 3},  {"FWUSL", 4},  {"FWTFL", 3}, {"FWHC", 4},    {"FWHH", 3},    {"FWHM", 3},    {"FWOS", 3},
    {"FWRP", 2},   {"FWRAP", 3},  {"FWRAA", 3}, {"FWRANG", 3},  {"INST", 2},    {"CMINS", 6},   {"INSBLM", 3},
    {"INSMLM", 2}, {"INSTLM", 3}, {"INSHC", 3}, {"INSHW", 2},   {"INSMLAH", 2}, {"INSMA", 6},   {"INSMAP", 4},
    {"INSMATH", 2}, {"INSMAMAT", 3}, {"INSMOD", 4}, {"POEM", 3}};

json catalog_doc() { return catalog_to_json(testing::catalog()); }

json& feature_in(json& doc, const std::string& id) {
  for (auto& f : doc["features"])
    if (f["id"] == id) return f;
  throw std::logic_error("no feature " + id);
}

std::string load_error(const json& doc) {
  try {
    load_catalog(doc.dump());
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

PatientProfile p1() { return testing::participant(1); }

}  // namespace

TEST_CASE("shipped catalog carries the reference feature table") {
  const auto& c = testing::catalog();
  CHECK(c.inputs().size() == 9);
  CHECK(c.outputs().size() == 30);
  for (const auto& [id, n] : expected_counts) {
    CAPTURE(id);
    CHECK(c.at(id).codes.size() == static_cast<std::size_t>(n));
  }
  CHECK(c.at("FCPA").codes.front().code == "FCPA1");
  CHECK(c.at("FCPA").codes.back().code == "FCPA4");
  CHECK(c.at("PPIA").codes.size() == 12);
}

TEST_CASE("multivalued exactly for MFP, CM, PMS and INSMOD") {
  for (const auto& f : testing::catalog().features()) {
    CAPTURE(f.id);
    const bool want = f.id == "MFP" || f.id == "CM" || f.id == "PMS" || f.id == "INSMOD";
    CHECK(f.multivalued == want);
  }
}

TEST_CASE("catalog round-trips through JSON") {
  const auto& c = testing::catalog();
  CHECK(load_catalog(catalog_to_json(c).dump()) == c);
}

TEST_CASE("every code resolves through its prefix to a feature that owns it") {
  const auto& c = testing::catalog();
  for (const auto& f : c.features()) {
    for (const auto& code : f.codes) {
      const auto* owner = c.feature_of_code(code.code);
      REQUIRE(owner != nullptr);
      CHECK(owner->id == f.id);
      CHECK(owner->has_code(code.code));
    }
  }
  CHECK(c.feature_of_code("ZZZ1") == nullptr);
}

TEST_CASE("split_code") {
  CHECK(split_code("FCPA4") == std::pair<std::string, int>{"FCPA", 4});
  CHECK(split_code("INSMAMAT12") == std::pair<std::string, int>{"INSMAMAT", 12});
  CHECK_FALSE(split_code("FCPA"));
  CHECK_FALSE(split_code("4"));
  CHECK_FALSE(split_code("fcpa4"));
}

TEST_CASE("catalog load errors") {
  SUBCASE("gap in numbering") {
    auto doc = catalog_doc();
    auto& codes = feature_in(doc, "FWT")["codes"];
    codes.erase(1);  // leaves FWT1, FWT3
    CHECK(load_error(doc).find("non-contiguous codes") != std::string::npos);
  }
  SUBCASE("duplicate code") {
    auto doc = catalog_doc();
    auto& codes = feature_in(doc, "FWT")["codes"];
    codes.push_back(codes[0]);
    CHECK(load_error(doc).find("duplicate code FWT1") != std::string::npos);
  }
  SUBCASE("missing required feature") {
    auto doc = catalog_doc();
    auto& fs = doc["features"];
    for (std::size_t i = 0; i < fs.size(); ++i)
      if (fs[i]["id"] == "FO") {
        fs.erase(i);
        break;
      }
    CHECK(load_error(doc).find("missing required feature FO") != std::string::npos);
  }
  SUBCASE("malformed document") {
    CHECK_THROWS_AS(load_catalog("{not json"), ValidationError);
    CHECK_THROWS_AS(load_catalog(R"({"version": "x"})"), ValidationError);
  }
  SUBCASE("lowercase id") {
    auto doc = catalog_doc();
    feature_in(doc, "FWT")["id"] = "fwt";
    CHECK_FALSE(load_error(doc).empty());
  }
}

TEST_CASE("validate_profile") {
  const auto& c = testing::catalog();
  SUBCASE("participant 1 is clean") { CHECK(validate_profile(p1(), c).empty()); }
  SUBCASE("all golden participants are clean") {
    for (int n = 1; n <= 3; ++n) CHECK(validate_profile(testing::participant(n), c).empty());
  }
  SUBCASE("two codes on a single-valued feature") {
    auto p = p1();
    p.values["FSS"] = {"FSS2", "FSS3"};
    const auto r = validate_profile(p, c);
    CHECK(r.size() == 1);
    CHECK(r.mentions("FSS is single-valued"));
  }
  SUBCASE("missing feature in strict mode only") {
    auto p = p1();
    p.values.erase("FO");
    CHECK(validate_profile(p, c).mentions("missing feature FO"));
    CHECK(validate_profile(p, c, ValidationMode::partial).empty());
  }
  SUBCASE("multivalued input accepts several codes") {
    auto p = p1();
    p.values["MFP"] = {"MFP3", "MFP9"};
    p.values["CM"] = {"CM1", "CM4", "CM6"};
    CHECK(validate_profile(p, c).empty());
  }
  SUBCASE("output feature in a profile") {
    auto p = p1();
    p.values["FWT"] = {"FWT1"};
    CHECK(validate_profile(p, c).mentions("FWT is an output feature"));
  }
  SUBCASE("unknown code and unknown feature") {
    auto p = p1();
    p.values["PBW"] = {"PBW9"};
    p.values["XYZ"] = {"XYZ1"};
    const auto r = validate_profile(p, c);
    CHECK(r.mentions("unknown code PBW9"));
    CHECK(r.mentions("unknown feature XYZ"));
  }
  SUBCASE("laterality must refer to a profile MFP code") {
    auto p = p1();
    p.laterality["MFP5"] = Laterality::bilateral;
    CHECK(validate_profile(p, c).empty());
    p.laterality["MFP2"] = Laterality::left;
    CHECK(validate_profile(p, c).count(Severity::error) == 1);
  }
}

TEST_CASE("validate_prescription") {
  const auto& c = testing::catalog();
  const auto& golden = testing::golden();
  SUBCASE("participant 2 output column is clean") {
    auto rx = golden.records.at(1).outcome;
    CHECK(rx.values.size() == 30);
    CHECK(validate_prescription(rx, c, ValidationMode::strict).empty());
  }
  SUBCASE("INSMOD takes two codes") {
    Prescription rx;
    rx.set("INSMOD", {"INSMOD1", "INSMOD3"}, DecisionSource::clinician());
    CHECK(validate_prescription(rx, c).empty());
  }
  SUBCASE("unknown code") {
    Prescription rx;
    rx.set("FWUP", {"FWUP9"}, DecisionSource::clinician());
    CHECK(validate_prescription(rx, c).mentions("unknown code FWUP9"));
  }
  SUBCASE("confidence only on MODEL sources") {
    Prescription rx;
    rx.set("FWS", {"FWS1"}, DecisionSource::model("m", 0.9));
    CHECK(validate_prescription(rx, c).empty());
    rx.sources["FWS"].confidence.reset();
    CHECK(validate_prescription(rx, c).mentions("confidence must be present"));
    rx.set("FWL", {"FWL1"}, DecisionSource::rule("r"));
    rx.sources["FWL"].confidence = 0.3;
    CHECK(validate_prescription(rx, c).count(Severity::error) == 2);
  }
  SUBCASE("sources cover exactly the values") {
    Prescription rx;
    rx.values["FWS"] = {"FWS1"};
    CHECK(validate_prescription(rx, c).mentions("no decision source for FWS"));
  }
}

TEST_CASE("profile and prescription JSON round-trip with sorted code arrays") {
  auto p = p1();
  p.values["MFP"] = {"MFP5", "MFP10", "MFP3"};
  p.laterality["MFP3"] = Laterality::left;
  const json j = p;
  CHECK(j["values"]["MFP"] == json::array({"MFP10", "MFP3", "MFP5"}));
  CHECK(j.get<PatientProfile>() == p);

  Prescription rx;
  rx.set("INSMOD", {"INSMOD3", "INSMOD1"}, DecisionSource::model("tree-INSMOD", 0.75));
  rx.version = 2;
  const json k = rx;
  CHECK(k.get<Prescription>() == rx);
}
