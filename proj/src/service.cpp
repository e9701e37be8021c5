#include "lgb/service.hpp"

#include <chrono>
#include <ctime>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include <httplib.h>

#include "lgb/training.hpp"

namespace lgb {

using nlohmann::json;

std::string to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::not_found: return "NOT_FOUND";
    case ErrorCode::not_ready: return "NOT_READY";
    case ErrorCode::precondition: return "PRECONDITION";
    case ErrorCode::state: return "STATE";
    case ErrorCode::validation: return "VALIDATION";
    case ErrorCode::unavailable: return "UNAVAILABLE";
  }
  return "?";
}

int ServiceError::http_status() const {
  switch (code_) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::not_ready: return 503;
    case ErrorCode::precondition: return 412;
    case ErrorCode::state: return 409;
    case ErrorCode::validation: return 400;
    case ErrorCode::unavailable: return 503;
  }
  return 500;
}

std::string to_string(RiskFlag f) { return f == RiskFlag::high ? "high" : "normal"; }

std::string to_string(FeedbackStatus s) {
  switch (s) {
    case FeedbackStatus::pending: return "pending";
    case FeedbackStatus::approved: return "approved";
    case FeedbackStatus::rejected: return "rejected";
  }
  return "?";
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

// ---------------------------------------------------------------------------
// Fixture provider

void FixtureProvider::maybe_fail() {
  int n = failures_.load();
  while (n > 0) {
    if (failures_.compare_exchange_weak(n, n - 1)) throw ProviderUnavailable("fixture provider timed out");
  }
}

std::optional<UserRecord> FixtureProvider::fetch_account(const NodeId& id) {
  maybe_fail();
  if (!graph_.contains(id)) return std::nullopt;
  return graph_.record(id);
}

std::vector<NodeId> FixtureProvider::fetch_neighbors(const NodeId& id) {
  maybe_fail();
  if (!graph_.contains(id)) return {};
  return neighbors(graph_, id, false);
}

// ---------------------------------------------------------------------------
// Serialization

json DetectionReport::to_json() const {
  json nb = json::array();
  for (const auto& n : neighbor_results) {
    nb.push_back({{"account_id", n.account_id}, {"bot_probability", n.bot_probability}, {"risk", to_string(n.risk)}});
  }
  json e = json::array();
  for (const auto& [a, b] : edges) e.push_back({{"source", a}, {"target", b}});
  return {{"account_id", account_id},
          {"bot_probability", bot_probability},
          {"predicted_label", to_string(predicted_label)},
          {"risk", to_string(risk)},
          {"neighbor_results", nb},
          {"profile",
           {{"name", profile.name},
            {"followers_count", profile.followers_count},
            {"following_count", profile.following_count},
            {"description", profile.description}}},
          {"edges", e},
          {"model_version", model_version},
          {"created_at", created_at}};
}

json FeedbackRecord::to_json() const {
  json j = {{"id", id},
            {"account_id", account_id},
            {"proposed_label", to_string(proposed_label)},
            {"submitter_id", submitter_id},
            {"status", to_string(status)},
            {"model_version", model_version},
            {"created_at", created_at}};
  j["reviewer_id"] = reviewer_id.empty() ? json(nullptr) : json(reviewer_id);
  j["reviewer_decision_at"] = reviewer_decision_at.empty() ? json(nullptr) : json(reviewer_decision_at);
  return j;
}

json TrainingExport::to_json() const {
  return {{"version", version},
          {"labeled", labeled},
          {"corrected", corrected},
          {"users_jsonl", users_jsonl},
          {"edges_jsonl", edges_jsonl}};
}

SocialGraph TrainingExport::graph() const {
  return parse_dataset(users_jsonl, edges_jsonl, "export-users", "export-edges");
}

// ---------------------------------------------------------------------------
// ResultsStore

void ResultsStore::audit(const std::string& at, const std::string& action, const std::string& subject,
                         const std::string& detail) {
  audit_.push_back({audit_.size() + 1, at, action, subject, detail});
}

std::optional<std::string> ResultsStore::report(const NodeId& account, const std::string& version) const {
  std::lock_guard lock(mu_);
  auto it = reports_.find({account, version});
  if (it == reports_.end()) return std::nullopt;
  return it->second;
}

std::optional<DetectionReport> ResultsStore::latest_report(const NodeId& account) const {
  std::lock_guard lock(mu_);
  auto it = latest_.find(account);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

std::string ResultsStore::put_report(const DetectionReport& r, const std::vector<UserRecord>& observed,
                                     const std::vector<std::pair<NodeId, NodeId>>& observed_edges) {
  std::lock_guard lock(mu_);
  const auto key = std::make_pair(r.account_id, r.model_version);
  if (auto it = reports_.find(key); it != reports_.end()) return it->second;
  std::string text = r.to_json().dump();
  reports_.emplace(key, text);
  latest_[r.account_id] = r;
  for (const auto& u : observed) observed_[u.id] = u;
  for (const auto& [a, b] : observed_edges) observed_edges_.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  audit(r.created_at, "report", r.account_id, r.model_version);
  return text;
}

FeedbackRecord ResultsStore::submit(const NodeId& account, Label label, const std::string& submitter,
                                    const std::string& model_version, const std::string& at) {
  std::lock_guard lock(mu_);
  const auto key = std::make_tuple(account, submitter, model_version);
  if (auto it = feedback_keys_.find(key); it != feedback_keys_.end()) return feedback_.at(it->second);
  std::ostringstream id;
  id << "fb-" << std::setw(6) << std::setfill('0') << next_feedback_++;
  FeedbackRecord r;
  r.id = id.str();
  r.account_id = account;
  r.proposed_label = label;
  r.submitter_id = submitter;
  r.model_version = model_version;
  r.created_at = at;
  feedback_.emplace(r.id, r);
  feedback_keys_.emplace(key, r.id);
  audit(at, "feedback_submitted", r.id, account + " -> " + to_string(label));
  return r;
}

FeedbackRecord ResultsStore::review(const std::string& record_id, bool approve, const std::string& reviewer,
                                    const std::string& at) {
  std::lock_guard lock(mu_);
  auto it = feedback_.find(record_id);
  if (it == feedback_.end()) throw ServiceError(ErrorCode::not_found, "unknown feedback record '" + record_id + "'");
  FeedbackRecord& r = it->second;
  if (r.status != FeedbackStatus::pending) {
    throw ServiceError(ErrorCode::state, "feedback record '" + record_id + "' was already " + to_string(r.status));
  }
  r.status = approve ? FeedbackStatus::approved : FeedbackStatus::rejected;
  r.reviewer_id = reviewer;
  r.reviewer_decision_at = at;
  audit(at, approve ? "feedback_approved" : "feedback_rejected", r.id, reviewer);
  if (approve) corrections_[r.account_id] = {audit_.back().sequence, r.proposed_label};
  return r;
}

std::optional<FeedbackRecord> ResultsStore::feedback(const std::string& record_id) const {
  std::lock_guard lock(mu_);
  auto it = feedback_.find(record_id);
  if (it == feedback_.end()) return std::nullopt;
  return it->second;
}

TrainingExport ResultsStore::export_snapshot(double confidence_floor) {
  std::lock_guard lock(mu_);
  TrainingExport ex;
  ex.version = ++export_version_;
  std::vector<NodeData> nodes;
  for (const auto& [id, record] : observed_) {
    NodeData n;
    n.record = record;
    if (auto c = corrections_.find(id); c != corrections_.end()) {
      n.label = c->second.second;
      ex.corrected.push_back(id);
    } else if (auto p = latest_.find(id); p != latest_.end()) {
      const double conf = std::max(p->second.bot_probability, 1.0 - p->second.bot_probability);
      if (conf >= confidence_floor) n.label = p->second.predicted_label;
    }
    ex.labeled += n.label.has_value();
    nodes.push_back(std::move(n));
  }
  std::vector<Edge> edges;
  for (const auto& [a, b] : observed_edges_) edges.push_back({a, b, "follow"});
  const SocialGraph g = SocialGraph::build(std::move(nodes), std::move(edges));
  ex.users_jsonl = serialize_users(g);
  ex.edges_jsonl = serialize_edges(g);
  audit(audit_.empty() ? "" : audit_.back().at, "export", "v" + std::to_string(ex.version),
        std::to_string(ex.labeled) + " labeled");
  return ex;
}

std::vector<AuditEntry> ResultsStore::audit_log() const {
  std::lock_guard lock(mu_);
  return audit_;
}

std::size_t ResultsStore::report_count() const {
  std::lock_guard lock(mu_);
  return reports_.size();
}

// ---------------------------------------------------------------------------
// DetectionService

DetectionService::DetectionService(std::shared_ptr<DataProvider> provider, ServiceConfig cfg, Clock clock)
    : provider_(std::move(provider)), cfg_(cfg), clock_(clock ? std::move(clock) : Clock(utc_now)) {}

void DetectionService::deploy(ModelBundle bundle) {
  auto d = std::make_shared<Deployed>();
  d->version = bundle.version();
  d->bundle = std::move(bundle);
  std::lock_guard lock(deploy_mu_);
  deployed_ = std::move(d);
}

std::shared_ptr<const DetectionService::Deployed> DetectionService::current() const {
  std::lock_guard lock(deploy_mu_);
  return deployed_;
}

bool DetectionService::ready() const { return current() != nullptr; }

std::string DetectionService::model_version() const {
  auto d = current();
  return d ? d->version : "";
}

std::mutex& DetectionService::account_lock(const NodeId& account) {
  return account_locks_[std::hash<NodeId>{}(account) % account_locks_.size()];
}

std::string DetectionService::detect_json(const NodeId& account) {
  const auto d = current();
  if (!d) throw ServiceError(ErrorCode::not_ready, "no model deployed");
  std::lock_guard lock(account_lock(account));
  if (auto hit = store_.report(account, d->version)) return *hit;

  std::vector<UserRecord> records;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  try {
    auto ego = provider_->fetch_account(account);
    if (!ego) throw ServiceError(ErrorCode::not_found, "unknown account '" + account + "'");
    records.push_back(*ego);
    std::set<NodeId> members = {account};
    for (const auto& n : provider_->fetch_neighbors(account)) {
      if (members.count(n)) continue;
      auto rec = provider_->fetch_account(n);
      if (!rec) continue;
      members.insert(n);
      records.push_back(std::move(*rec));
    }
    for (const auto& r : records) {
      for (const auto& n : provider_->fetch_neighbors(r.id)) {
        if (n != r.id && members.count(n) && r.id < n) pairs.emplace_back(r.id, n);
      }
    }
  } catch (const ProviderUnavailable& e) {
    throw ServiceError(ErrorCode::unavailable, std::string("data provider unavailable: ") + e.what());
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<NodeData> nodes;
  for (const auto& r : records) nodes.push_back({r, std::nullopt, std::nullopt});
  std::vector<Edge> edges;
  for (const auto& [a, b] : pairs) edges.push_back({a, b, "follow"});
  const SocialGraph ego_graph = SocialGraph::build(std::move(nodes), std::move(edges));

  ++invocations_;
  const std::vector<double> p =
      fused_bot_probabilities(d->bundle, node_features(d->bundle, ego_graph), Adjacency::from_graph(ego_graph));

  auto risk = [&](double prob) { return prob >= cfg_.risk_threshold ? RiskFlag::high : RiskFlag::normal; };
  DetectionReport r;
  r.account_id = account;
  r.bot_probability = p[0];
  r.predicted_label = decide(p[0]);
  r.risk = risk(p[0]);
  for (std::size_t i = 1; i < records.size(); ++i) r.neighbor_results.push_back({records[i].id, p[i], risk(p[i])});
  r.profile = records[0];
  r.edges = pairs;
  r.model_version = d->version;
  r.created_at = clock_();
  return store_.put_report(r, records, pairs);
}

DetectionReport DetectionService::detect(const NodeId& account) {
  detect_json(account);
  return report(account);
}

DetectionReport DetectionService::report(const NodeId& account) const {
  const auto d = current();
  if (!d) throw ServiceError(ErrorCode::not_ready, "no model deployed");
  auto r = store_.latest_report(account);
  if (!r || r->model_version != d->version) {
    throw ServiceError(ErrorCode::not_found, "no report for '" + account + "' under the deployed model");
  }
  return *r;
}

FeedbackRecord DetectionService::submit_feedback(const NodeId& account, const std::string& proposed_label,
                                                 const std::string& submitter) {
  Label label;
  try {
    label = parse_label(proposed_label);
  } catch (const Error&) {
    throw ServiceError(ErrorCode::validation, "invalid label '" + proposed_label + "'");
  }
  if (submitter.empty()) throw ServiceError(ErrorCode::validation, "submitter_id is required");
  auto r = store_.latest_report(account);
  if (!r) throw ServiceError(ErrorCode::precondition, "account '" + account + "' has not been detected");
  return store_.submit(account, label, submitter, r->model_version, clock_());
}

FeedbackRecord DetectionService::review_feedback(const std::string& record_id, const std::string& decision,
                                                 const std::string& reviewer) {
  if (decision != "approve" && decision != "reject") {
    throw ServiceError(ErrorCode::validation, "decision must be approve or reject");
  }
  return store_.review(record_id, decision == "approve", reviewer, clock_());
}

TrainingExport DetectionService::export_training_data() { return store_.export_snapshot(cfg_.confidence_floor); }

// ---------------------------------------------------------------------------
// Routing

namespace {

HttpResponse error_response(const ServiceError& e) {
  json body = {{"error", {{"code", to_string(e.code())}, {"message", e.what()}, {"retryable", e.retryable()}}}};
  return {e.http_status(), body.dump()};
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ServiceError(ErrorCode::validation, "request body must be an object");
    return j;
  } catch (const json::exception& e) {
    throw ServiceError(ErrorCode::validation, std::string("malformed request body: ") + e.what());
  }
}

std::string required(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ServiceError(ErrorCode::validation, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

}  // namespace

HttpResponse handle_request(DetectionService& svc, const std::string& method, const std::string& path,
                            const std::string& body) {
  try {
    const auto parts = split_path(path);
    auto is = [&](std::initializer_list<const char*> p) {
      if (parts.size() != p.size()) return false;
      std::size_t i = 0;
      for (const char* s : p) {
        if (*s != '*' && parts[i] != s) return false;
        ++i;
      }
      return true;
    };
    if (method == "GET" && is({"health"})) {
      return {200, json({{"ready", svc.ready()}, {"model_version", svc.model_version()}}).dump()};
    }
    if (method == "POST" && is({"detect"})) {
      return {200, svc.detect_json(required(parse_body(body), "account_id"))};
    }
    if (method == "GET" && is({"report", "*"})) {
      const auto r = svc.report(parts[1]);
      if (auto stored = svc.store().report(parts[1], r.model_version)) return {200, *stored};
      return {200, r.to_json().dump()};
    }
    if (method == "POST" && is({"feedback"})) {
      const json j = parse_body(body);
      const std::string submitter = j.contains("submitter_id") && j["submitter_id"].is_string()
                                        ? j["submitter_id"].get<std::string>()
                                        : std::string("anonymous");
      return {200, svc.submit_feedback(required(j, "account_id"), required(j, "proposed_label"), submitter)
                       .to_json()
                       .dump()};
    }
    if (method == "POST" && is({"feedback", "*", "review"})) {
      const json j = parse_body(body);
      const std::string reviewer = j.contains("reviewer_id") && j["reviewer_id"].is_string()
                                       ? j["reviewer_id"].get<std::string>()
                                       : std::string("reviewer");
      return {200, svc.review_feedback(parts[1], required(j, "decision"), reviewer).to_json().dump()};
    }
    if (method == "GET" && is({"export", "training-data"})) {
      return {200, svc.export_training_data().to_json().dump()};
    }
    throw ServiceError(ErrorCode::not_found, "no route for " + method + " " + path);
  } catch (const ServiceError& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return {500, json({{"error", {{"code", "INTERNAL"}, {"message", e.what()}, {"retryable", false}}}}).dump()};
  }
}

// ---------------------------------------------------------------------------
// HttpServer

struct HttpServer::Impl {
  DetectionService& svc;
  httplib::Server server;

  explicit Impl(DetectionService& s) : svc(s) {
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
      const HttpResponse r = handle_request(svc, req.method, req.path, req.body);
      res.status = r.status;
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_content(r.body, "application/json");
    };
    server.Get(".*", dispatch);
    server.Post(".*", dispatch);
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.status = 204;
    });
  }
};

HttpServer::HttpServer(DetectionService& svc) : impl_(std::make_unique<Impl>(svc)) {}
HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace lgb
