#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "lgb/graph_store.hpp"
#include "lgb/model.hpp"

namespace lgb {

enum class ErrorCode { not_found, not_ready, precondition, state, validation, unavailable };

std::string to_string(ErrorCode c);

class ServiceError : public Error {
 public:
  ServiceError(ErrorCode code, const std::string& what) : Error(what), code_(code) {}
  ErrorCode code() const { return code_; }
  bool retryable() const { return code_ == ErrorCode::unavailable; }
  int http_status() const;

 private:
  ErrorCode code_;
};

/// Raised by providers when the upstream source does not answer in time.
class ProviderUnavailable : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Data provider

class DataProvider {
 public:
  virtual ~DataProvider() = default;
  /// std::nullopt for an unknown account.
  virtual std::optional<UserRecord> fetch_account(const NodeId& id) = 0;
  /// Undirected neighbors of an account.
  virtual std::vector<NodeId> fetch_neighbors(const NodeId& id) = 0;
};

/// Serves accounts and relations from an ingested graph.
class FixtureProvider : public DataProvider {
 public:
  explicit FixtureProvider(SocialGraph graph) : graph_(std::move(graph)) {}

  std::optional<UserRecord> fetch_account(const NodeId& id) override;
  std::vector<NodeId> fetch_neighbors(const NodeId& id) override;

  /// The next n calls throw ProviderUnavailable.
  void fail_next(int n) { failures_ = n; }
  const SocialGraph& graph() const { return graph_; }

 private:
  void maybe_fail();
  SocialGraph graph_;
  std::atomic<int> failures_{0};
};

// ---------------------------------------------------------------------------
// Domain records

enum class RiskFlag { normal, high };
enum class FeedbackStatus { pending, approved, rejected };

std::string to_string(RiskFlag f);
std::string to_string(FeedbackStatus s);

struct NeighborResult {
  NodeId account_id;
  double bot_probability = 0.0;
  RiskFlag risk = RiskFlag::normal;
};

struct DetectionReport {
  NodeId account_id;
  double bot_probability = 0.0;
  Label predicted_label = Label::human;
  RiskFlag risk = RiskFlag::normal;
  std::vector<NeighborResult> neighbor_results;
  UserRecord profile;
  std::vector<std::pair<NodeId, NodeId>> edges;  // undirected pairs inside the ego network
  std::string model_version;
  std::string created_at;

  nlohmann::json to_json() const;
};

struct FeedbackRecord {
  std::string id;
  NodeId account_id;
  Label proposed_label = Label::human;
  std::string submitter_id;
  FeedbackStatus status = FeedbackStatus::pending;
  std::string reviewer_id;
  std::string reviewer_decision_at;
  std::string model_version;
  std::string created_at;

  nlohmann::json to_json() const;
};

struct AuditEntry {
  std::uint64_t sequence = 0;
  std::string at;
  std::string action;
  std::string subject;
  std::string detail;
};

struct TrainingExport {
  std::uint64_t version = 0;
  std::string users_jsonl;
  std::string edges_jsonl;
  std::size_t labeled = 0;
  std::vector<NodeId> corrected;  // accounts whose label comes from approved feedback

  nlohmann::json to_json() const;
  SocialGraph graph() const;
};

/// Detection results database: reports, feedback, corrected labels, the
/// observed accounts and relations, and an append-only audit log.
class ResultsStore {
 public:
  /// Stored serialized report for (account, version) if present.
  std::optional<std::string> report(const NodeId& account, const std::string& version) const;
  /// Most recently stored report for the account, any version.
  std::optional<DetectionReport> latest_report(const NodeId& account) const;
  /// Inserts unless a report for (account, version) already exists; returns the stored JSON.
  std::string put_report(const DetectionReport& r, const std::vector<UserRecord>& observed,
                         const std::vector<std::pair<NodeId, NodeId>>& observed_edges);

  /// Existing record for the idempotency key, or a new pending record.
  FeedbackRecord submit(const NodeId& account, Label label, const std::string& submitter,
                        const std::string& model_version, const std::string& at);
  FeedbackRecord review(const std::string& record_id, bool approve, const std::string& reviewer,
                        const std::string& at);
  std::optional<FeedbackRecord> feedback(const std::string& record_id) const;

  TrainingExport export_snapshot(double confidence_floor);

  std::vector<AuditEntry> audit_log() const;
  std::size_t report_count() const;

 private:
  void audit(const std::string& at, const std::string& action, const std::string& subject,
             const std::string& detail);

  mutable std::mutex mu_;
  std::map<std::pair<NodeId, std::string>, std::string> reports_;
  std::map<NodeId, DetectionReport> latest_;
  std::map<NodeId, std::uint64_t> latest_seq_;
  std::map<NodeId, UserRecord> observed_;
  std::set<std::pair<NodeId, NodeId>> observed_edges_;
  std::map<std::string, FeedbackRecord> feedback_;
  std::map<std::tuple<NodeId, std::string, std::string>, std::string> feedback_keys_;
  std::map<NodeId, std::pair<std::uint64_t, Label>> corrections_;  // approval sequence, label
  std::vector<AuditEntry> audit_;
  std::uint64_t next_feedback_ = 1;
  std::uint64_t export_version_ = 0;
};

struct ServiceConfig {
  double risk_threshold = 0.5;
  double confidence_floor = 0.9;
};

/// Online detection subsystem.
class DetectionService {
 public:
  using Clock = std::function<std::string()>;

  DetectionService(std::shared_ptr<DataProvider> provider, ServiceConfig cfg = {}, Clock clock = {});

  /// Atomic swap; in-flight requests finish on the previous bundle.
  void deploy(ModelBundle bundle);
  bool ready() const;
  std::string model_version() const;

  DetectionReport detect(const NodeId& account);
  /// Serialized form, byte-identical on a cache hit.
  std::string detect_json(const NodeId& account);
  DetectionReport report(const NodeId& account) const;
  FeedbackRecord submit_feedback(const NodeId& account, const std::string& proposed_label,
                                 const std::string& submitter);
  FeedbackRecord review_feedback(const std::string& record_id, const std::string& decision,
                                 const std::string& reviewer);
  TrainingExport export_training_data();

  /// Forward passes run so far.
  std::uint64_t model_invocations() const { return invocations_; }
  ResultsStore& store() { return store_; }
  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Deployed {
    ModelBundle bundle;
    std::string version;
  };
  std::shared_ptr<const Deployed> current() const;
  std::mutex& account_lock(const NodeId& account);

  std::shared_ptr<DataProvider> provider_;
  ServiceConfig cfg_;
  Clock clock_;
  mutable std::mutex deploy_mu_;
  std::shared_ptr<const Deployed> deployed_;
  std::array<std::mutex, 64> account_locks_;
  std::atomic<std::uint64_t> invocations_{0};
  ResultsStore store_;
};

// ---------------------------------------------------------------------------
// HTTP surface

struct HttpResponse {
  int status = 200;
  std::string body;
};

/// Routes one request; never throws.
HttpResponse handle_request(DetectionService& svc, const std::string& method, const std::string& path,
                            const std::string& body);

/// Blocks serving the API until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(DetectionService& svc);
  ~HttpServer();
  /// Binds and serves; returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds to an ephemeral port; returns it (or -1).
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// UTC timestamp in ISO 8601 with seconds.
std::string utc_now();

}  // namespace lgb
