#pragma once

// Persistence and the JSON service that the HTTP server and the CLI share.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedocds/geometry.hpp"
#include "pedocds/pressure.hpp"
#include "pedocds/recommender.hpp"
#include "pedocds/ruledsl.hpp"
#include "pedocds/taxonomy.hpp"

namespace pedocds::platform {

namespace fs = std::filesystem;

/// Startup configuration. Relative paths resolve against data_dir.
struct Config {
  fs::path data_dir;
  fs::path store_dir;  // defaults to data_dir/store
  fs::path catalog_file = "catalog.json";
  fs::path rules_file = "rules/paper.rules";
  fs::path models_dir = "models";  // every *.json here is a default model
  geometry::DesignConstants constants;
  pressure::OffloadTarget target;
  pressure::Zoning zoning;
  double contact_threshold = 5.0;
  recommender::Policy policy;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : data_dir / p; }
};

/// Reads data_dir/config.json when present. PEDOCDS_DATA overrides `data_dir`
/// unless `ignore_env` is set.
Config load_config(std::optional<fs::path> data_dir = std::nullopt, bool ignore_env = false);

inline const std::vector<std::string>& record_kinds() {
  static const std::vector<std::string> kinds{"profile", "prescription", "ruleset", "dataset",
                                              "model",   "recording",    "trial"};
  return kinds;
}

struct Envelope {
  std::string id;
  std::string kind;
  int version = 0;
  nlohmann::json body;
  std::string created_at;
};

nlohmann::json envelope_to_json(const Envelope& e);
Envelope envelope_from_json(const nlohmann::json& j);

/// One directory per record, one immutable file per version:
/// <root>/<kind>/<id>/v<version>.json. Writes to a record are serialized.
class Store {
 public:
  using Clock = std::function<std::string()>;

  explicit Store(fs::path root, Clock clock = {});

  /// Writes the next version. With `expected_version` the write succeeds
  /// only if it is exactly the next one; rewriting an existing version is a
  /// ConflictError.
  Envelope put(const std::string& kind, const std::string& id, const nlohmann::json& body,
               std::optional<int> expected_version = std::nullopt);
  /// put() for a caller already holding lock(kind, id).
  Envelope put(std::unique_lock<std::mutex>& held, const std::string& kind, const std::string& id,
               const nlohmann::json& body, std::optional<int> expected_version = std::nullopt);
  Envelope get(const std::string& kind, const std::string& id, std::optional<int> version = std::nullopt) const;
  bool exists(const std::string& kind, const std::string& id) const;
  std::vector<std::string> list(const std::string& kind) const;
  std::vector<Envelope> history(const std::string& kind, const std::string& id) const;
  int latest_version(const std::string& kind, const std::string& id) const;  // 0 when absent

  /// Lock serializing writers of one record; callers may hold it across a
  /// read-modify-write.
  std::unique_lock<std::mutex> lock(const std::string& kind, const std::string& id);

  const fs::path& root() const noexcept { return root_; }

 private:
  Envelope put_locked(const std::string& kind, const std::string& id, const nlohmann::json& body,
                      std::optional<int> expected_version);
  fs::path record_dir(const std::string& kind, const std::string& id) const;

  fs::path root_;
  Clock clock_;
  std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> record_mutexes_;
};

std::string utc_now();

struct Request {
  std::string method;
  std::string path;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> query;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Every API endpoint as a function of (request, store). Pure endpoints
/// (catalog, recommend, whatif, geometry, compare) render identical bytes for
/// identical requests.
class Service {
 public:
  Service(Config config, Store::Clock clock = {});

  Response handle(const Request& request);

  const Config& config() const noexcept { return config_; }
  const taxonomy::FeatureCatalog& catalog() const noexcept { return catalog_; }
  const ruledsl::RuleSet& default_rules() const noexcept { return rules_; }
  const std::map<std::string, recommender::Model>& default_models() const noexcept { return models_; }
  Store& store() noexcept { return store_; }

 private:
  nlohmann::json route(const Request& request, int& status);

  nlohmann::json post_profile(const nlohmann::json& body, int& status);
  nlohmann::json post_dataset(const nlohmann::json& body, int& status);
  nlohmann::json post_ruleset(const nlohmann::json& body, int& status);
  nlohmann::json recommend(const nlohmann::json& body);
  nlohmann::json whatif(const nlohmann::json& body);
  nlohmann::json geometry(const std::string& which, const nlohmann::json& body);
  nlohmann::json post_recording(const Request& request, int& status);
  nlohmann::json compare(const nlohmann::json& body);
  nlohmann::json post_trial(const nlohmann::json& body, int& status);
  nlohmann::json post_trial_event(const std::string& id, const nlohmann::json& body);
  nlohmann::json get_trial(const std::string& id);
  nlohmann::json train(const nlohmann::json& body, int& status);
  nlohmann::json eval_model(const std::string& id, const std::map<std::string, std::string>& query);

  taxonomy::PatientProfile resolve_profile(const nlohmann::json& body) const;
  ruledsl::RuleSet resolve_rules(const nlohmann::json& body) const;
  std::map<std::string, recommender::Model> resolve_models(const nlohmann::json& body) const;
  recommender::Policy resolve_policy(const nlohmann::json& body) const;
  pressure::Recording resolve_recording(const nlohmann::json& body, const std::string& key) const;
  pressure::OffloadReport run_compare(const nlohmann::json& body) const;

  Config config_;
  taxonomy::FeatureCatalog catalog_;
  ruledsl::RuleSet rules_;
  std::map<std::string, recommender::Model> models_;  // by target
  Store store_;
};

/// Loads every model file in a directory, keyed by target feature.
std::map<std::string, recommender::Model> load_models_dir(const fs::path& dir);

/// Maps an exception to an HTTP status: 400 validation, 404 missing, 409 conflict.
int status_for(const std::exception& e);

/// Blocking HTTP server on host:port. Returns when the server stops.
void serve(Service& service, const std::string& host, int port);

}  // namespace pedocds::platform
