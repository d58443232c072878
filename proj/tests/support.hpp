#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pedocds/pressure.hpp"
#include "pedocds/recommender.hpp"
#include "pedocds/ruledsl.hpp"
#include "pedocds/taxonomy.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return PEDOCDS_DATA_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline const pedocds::taxonomy::FeatureCatalog& catalog() {
  static const auto c = pedocds::taxonomy::load_catalog_file((data_dir() / "catalog.json").string());
  return c;
}

inline const pedocds::ruledsl::RuleSet& shipped_rules() {
  static const auto r = pedocds::ruledsl::load_rules_file((data_dir() / "rules/paper.rules").string(), catalog());
  return r;
}

inline const pedocds::recommender::Dataset& golden() {
  static const auto d = pedocds::recommender::load_dataset_file((data_dir() / "reference.dataset.json").string(), catalog());
  return d;
}

inline pedocds::taxonomy::PatientProfile participant(int n) {
  return nlohmann::json::parse(slurp(data_dir() / "fixtures" / ("participant" + std::to_string(n) + ".profile.json")))
      .get<pedocds::taxonomy::PatientProfile>();
}

/// Recording from frames given as (t, row-major values).
inline pedocds::pressure::Recording recording(int rows, int cols, double cell_area,
                                              const std::vector<std::pair<double, std::vector<double>>>& frames) {
  pedocds::pressure::Recording rec;
  for (const auto& [t, values] : frames) {
    pedocds::pressure::Frame f;
    f.t = t;
    f.cell_area = cell_area;
    f.grid.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) f.grid(r, c) = values.at(static_cast<std::size_t>(r * cols + c));
    rec.frames.push_back(f);
  }
  return rec;
}

}  // namespace testing
