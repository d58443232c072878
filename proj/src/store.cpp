#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "pedocds/error.hpp"
#include "pedocds/platform.hpp"

namespace pedocds::platform {

using nlohmann::json;

namespace {

void check_kind(const std::string& kind) {
  const auto& kinds = record_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw ValidationError("unknown record kind '" + kind + "'");
  }
}

void check_id(const std::string& id) {
  if (id.empty() || id.size() > 128) throw ValidationError("record id must have 1-128 characters");
  for (unsigned char c : id) {
    if (!(std::isalnum(c) || c == '-' || c == '_' || c == '.')) {
      throw ValidationError("record id '" + id + "' may only contain letters, digits, '-', '_' and '.'");
    }
  }
  if (id.front() == '.') throw ValidationError("record id must not start with '.'");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path.string());
  return json::parse(in);
}

int version_of(const fs::path& file) {
  const std::string name = file.filename().string();
  if (name.size() < 7 || name.front() != 'v' || file.extension() != ".json") return 0;
  const std::string digits = name.substr(1, name.size() - 6);
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) return 0;
  return std::stoi(digits);
}

}  // namespace

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json envelope_to_json(const Envelope& e) {
  return {{"id", e.id}, {"kind", e.kind}, {"version", e.version}, {"body", e.body}, {"created_at", e.created_at}};
}

Envelope envelope_from_json(const json& j) {
  try {
    return {j.at("id").get<std::string>(), j.at("kind").get<std::string>(), j.at("version").get<int>(), j.at("body"),
            j.value("created_at", std::string{})};
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed envelope: ") + e.what());
  }
}

Store::Store(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  if (!clock_) clock_ = utc_now;
  fs::create_directories(root_);
}

fs::path Store::record_dir(const std::string& kind, const std::string& id) const {
  check_kind(kind);
  check_id(id);
  return root_ / kind / id;
}

std::unique_lock<std::mutex> Store::lock(const std::string& kind, const std::string& id) {
  record_dir(kind, id);
  std::mutex* m = nullptr;
  {
    std::lock_guard<std::mutex> guard(registry_mutex_);
    auto& slot = record_mutexes_[kind + "/" + id];
    if (!slot) slot = std::make_unique<std::mutex>();
    m = slot.get();
  }
  return std::unique_lock<std::mutex>(*m);
}

int Store::latest_version(const std::string& kind, const std::string& id) const {
  const fs::path dir = record_dir(kind, id);
  if (!fs::is_directory(dir)) return 0;
  int latest = 0;
  for (const auto& entry : fs::directory_iterator(dir)) latest = std::max(latest, version_of(entry.path()));
  return latest;
}

bool Store::exists(const std::string& kind, const std::string& id) const { return latest_version(kind, id) > 0; }

Envelope Store::put(const std::string& kind, const std::string& id, const json& body,
                    std::optional<int> expected_version) {
  auto guard = lock(kind, id);
  return put_locked(kind, id, body, expected_version);
}

Envelope Store::put(std::unique_lock<std::mutex>& held, const std::string& kind, const std::string& id,
                    const json& body, std::optional<int> expected_version) {
  if (!held.owns_lock()) throw std::logic_error("put without holding the record lock");
  return put_locked(kind, id, body, expected_version);
}

Envelope Store::put_locked(const std::string& kind, const std::string& id, const json& body,
                           std::optional<int> expected_version) {
  const fs::path dir = record_dir(kind, id);
  const int next = latest_version(kind, id) + 1;
  const int version = expected_version.value_or(next);
  if (version < 1) throw ValidationError("versions start at 1");
  if (version < next) {
    throw ConflictError(kind + " " + id + " version " + std::to_string(version) + " already exists");
  }
  if (version > next) {
    throw ConflictError(kind + " " + id + " version " + std::to_string(version) + " skips version " +
                        std::to_string(next));
  }
  Envelope e{id, kind, version, body, clock_()};
  fs::create_directories(dir);
  const fs::path target = dir / ("v" + std::to_string(version) + ".json");
  const fs::path tmp = dir / (".v" + std::to_string(version) + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << envelope_to_json(e).dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
  return e;
}

Envelope Store::get(const std::string& kind, const std::string& id, std::optional<int> version) const {
  const int latest = latest_version(kind, id);
  if (latest == 0) throw NotFoundError(kind + " " + id + " not found");
  const int v = version.value_or(latest);
  const fs::path file = record_dir(kind, id) / ("v" + std::to_string(v) + ".json");
  if (v < 1 || v > latest || !fs::exists(file)) {
    throw NotFoundError(kind + " " + id + " version " + std::to_string(v) + " not found");
  }
  return envelope_from_json(read_json(file));
}

std::vector<Envelope> Store::history(const std::string& kind, const std::string& id) const {
  std::vector<Envelope> out;
  const int latest = latest_version(kind, id);
  for (int v = 1; v <= latest; ++v) out.push_back(get(kind, id, v));
  return out;
}

std::vector<std::string> Store::list(const std::string& kind) const {
  check_kind(kind);
  std::vector<std::string> ids;
  const fs::path dir = root_ / kind;
  if (!fs::is_directory(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && exists(kind, entry.path().filename().string())) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace pedocds::platform
