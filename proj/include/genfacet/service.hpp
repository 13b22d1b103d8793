#pragma once

// The closed loop over HTTP: facets -> select -> rewritten search, with per-session
// state and a session-aware facet cache.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "genfacet/config.hpp"
#include "genfacet/pipeline.hpp"
#include "genfacet/trainer.hpp"
#include "genfacet/usersim.hpp"

namespace genfacet {

/// Carries the HTTP status the error maps to.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Seconds on an arbitrary monotonic scale.
using Clock = std::function<double()>;
Clock steady_clock_seconds();

struct SessionState {
    std::string session_id;
    std::string query;
    std::vector<FacetSelection> click_history;
    /// First click that refines the current query; a newly typed query starts a new chain.
    std::size_t chain_start = 0;
    FacetList last_facets;
    RetrievalMode mode = RetrievalMode::generative;
    Profile profile;
    std::vector<BehaviorEvent> behaviors;
    double created = 0.0;
    double updated = 0.0;
};

/// Stable hash of what the facet list depends on besides the query.
std::uint64_t context_hash(const SessionContext& ctx);

/// LRU cache with a ttl. Thread-safe.
class FacetCache {
public:
    FacetCache(double ttl_seconds, std::size_t capacity) : ttl_(ttl_seconds), capacity_(capacity) {}

    std::optional<FacetList> get(const std::string& session, const std::string& key, double now);
    void put(const std::string& session, const std::string& key, FacetList facets, double now);
    void invalidate_session(const std::string& session);
    std::size_t size() const;

private:
    struct Entry {
        std::string session;
        std::string key;
        FacetList facets;
        double created;
    };
    void erase(std::list<Entry>::iterator it);

    double ttl_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::list<Entry> lru_;  ///< most recent first
    std::unordered_map<std::string, std::list<Entry>::iterator> by_key_;
};

struct FacetsReply {
    FacetList facets;
    bool cache_hit = false;
};

struct SelectReply {
    std::string rewritten_query;
    std::vector<RankedResult> results;
    FacetList facets;
};

/// Request handlers. Requests for different sessions run in parallel; requests for
/// one session are serialized.
class FacetService {
public:
    FacetService(const Environment& env, PolicyParams params, ServiceConfig config = {},
                 Clock clock = steady_clock_seconds());

    /// Creates the session when new; `user` replaces the session's profile and behaviors.
    /// Throws ServiceError(400) on an empty query.
    FacetsReply facets(const std::string& session_id, const std::string& query, const UserContext* user = nullptr);
    /// 404 for an unknown session, 409 when the facet/value was not in the last list.
    SelectReply select(const std::string& session_id, const std::string& facet, const std::string& value);
    /// 400 unless 1 <= k <= 100.
    std::vector<RankedResult> search(const std::string& query, std::size_t k) const;
    /// Creates the session when new, so a client may pick the mode before its first query.
    /// 400 for an unknown mode.
    void set_mode(const std::string& session_id, const std::string& mode);

    std::optional<SessionState> session(const std::string& session_id) const;
    std::size_t session_count() const;
    const Environment& env() const noexcept { return env_; }
    const FacetCache& cache() const noexcept { return cache_; }

private:
    struct Slot {
        std::mutex mu;
        SessionState state;
    };
    std::shared_ptr<Slot> slot(const std::string& session_id, bool create);
    void expire_idle(double now);
    FacetList generate(SessionState& s, const std::string& query, bool* hit);

    const Environment& env_;
    PolicyParams params_;
    ServiceConfig config_;
    Clock clock_;
    FacetCache cache_;
    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    double last_sweep_ = 0.0;
};

// ---- HTTP layer ----

struct HttpRequest {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> params;
};

struct HttpResponse {
    int status = 200;
    std::string body;
};

/// Routes one request; errors become {"error": message} bodies with their status.
HttpResponse dispatch(FacetService& service, const HttpRequest& request);

/// Serves dispatch() over HTTP until stop().
class HttpServer {
public:
    explicit HttpServer(FacetService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port or throws.
    int bind(const std::string& host, int port);
    /// Serves a directory (the browser client) under "/".
    void mount_static(const std::filesystem::path& dir);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace genfacet
