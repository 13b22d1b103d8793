#include "genfacet/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>

#include <httplib.h>
#include <json.hpp>

#include "genfacet/log.hpp"
#include "genfacet/text.hpp"

namespace genfacet {

Clock steady_clock_seconds() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

namespace {

struct Fnv {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void add(std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;  // field separator
        h *= 0x100000001b3ULL;
    }
};

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::uint64_t context_hash(const SessionContext& ctx) {
    Fnv f;
    f.add("profile");
    for (const auto& [tag, w] : ctx.profile) {
        f.add(tag);
        f.add(format_number(w));
    }
    f.add("behaviors");
    for (const auto& b : ctx.behaviors) {
        f.add(b.kind == EventKind::click ? "click" : "cart");
        f.add(b.product_id);
    }
    f.add("trends");
    for (const auto& t : ctx.web_trends) {
        f.add(t.term);
        f.add(format_number(t.weight));
    }
    return f.h;
}

// ---- cache ----

std::optional<FacetList> FacetCache::get(const std::string& session, const std::string& key, double now) {
    std::lock_guard lock(mu_);
    auto it = by_key_.find(session + '\x1f' + key);
    if (it == by_key_.end()) return std::nullopt;
    if (now - it->second->created > ttl_) {
        erase(it->second);
        return std::nullopt;
    }
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->facets;
}

void FacetCache::put(const std::string& session, const std::string& key, FacetList facets, double now) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mu_);
    const std::string full = session + '\x1f' + key;
    if (auto it = by_key_.find(full); it != by_key_.end()) erase(it->second);
    lru_.push_front(Entry{session, key, std::move(facets), now});
    by_key_[full] = lru_.begin();
    while (lru_.size() > capacity_) erase(std::prev(lru_.end()));
}

void FacetCache::invalidate_session(const std::string& session) {
    std::lock_guard lock(mu_);
    for (auto it = lru_.begin(); it != lru_.end();) {
        auto next = std::next(it);
        if (it->session == session) erase(it);
        it = next;
    }
}

std::size_t FacetCache::size() const {
    std::lock_guard lock(mu_);
    return lru_.size();
}

void FacetCache::erase(std::list<Entry>::iterator it) {
    by_key_.erase(it->session + '\x1f' + it->key);
    lru_.erase(it);
}

// ---- service ----

FacetService::FacetService(const Environment& env, PolicyParams params, ServiceConfig config, Clock clock)
    : env_(env),
      params_(std::move(params)),
      config_(std::move(config)),
      clock_(std::move(clock)),
      cache_(config_.cache_ttl_seconds, config_.cache_capacity) {}

void FacetService::expire_idle(double now) {
    std::lock_guard lock(sessions_mu_);
    if (now - last_sweep_ < 60.0) return;
    last_sweep_ = now;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::unique_lock slot_lock(it->second->mu, std::try_to_lock);
        if (slot_lock.owns_lock() && now - it->second->state.updated > config_.session_idle_seconds) {
            cache_.invalidate_session(it->first);
            slot_lock.unlock();
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
}

std::shared_ptr<FacetService::Slot> FacetService::slot(const std::string& session_id, bool create) {
    const double now = clock_();
    expire_idle(now);
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(session_id);
    if (it != sessions_.end()) {
        // An idle session that the sweep has not reached yet is already gone.
        std::unique_lock slot_lock(it->second->mu, std::try_to_lock);
        if (slot_lock.owns_lock() && now - it->second->state.updated > config_.session_idle_seconds) {
            cache_.invalidate_session(session_id);
            slot_lock.unlock();
            sessions_.erase(it);
            it = sessions_.end();
        }
    }
    if (it == sessions_.end()) {
        if (!create) throw ServiceError(404, "unknown session '" + session_id + "'");
        auto s = std::make_shared<Slot>();
        s->state.session_id = session_id;
        s->state.created = s->state.updated = now;
        it = sessions_.emplace(session_id, std::move(s)).first;
    }
    return it->second;
}

FacetList FacetService::generate(SessionState& s, const std::string& query, bool* hit) {
    const double now = clock_();
    const auto ctx = assemble_generation_context(query, s.profile, s.behaviors, env_.kg(), env_.provider(),
                                                 config_.provider_deadline);
    for (const auto& w : ctx.warnings) log::warn(w);
    const std::string key = query + '\x1f' + hex(context_hash(ctx));
    if (auto cached = cache_.get(s.session_id, key, now)) {
        if (hit) *hit = true;
        return *cached;
    }
    if (hit) *hit = false;
    const auto cands = mine_candidates(ctx, env_.kg(), env_.index(), env_.catalog(), config_.result_depth);
    auto facets = rank_facets(params_.facet, cands, config_.facet_count);
    cache_.put(s.session_id, key, facets, now);
    return facets;
}

FacetsReply FacetService::facets(const std::string& session_id, const std::string& query, const UserContext* user) {
    const std::string q = trim(query);
    if (q.empty()) throw ServiceError(400, "query must not be empty");
    if (session_id.empty()) throw ServiceError(400, "session_id must not be empty");
    auto sl = slot(session_id, true);
    std::lock_guard lock(sl->mu);
    SessionState& s = sl->state;
    if (user) {
        s.profile = user->profile;
        s.behaviors = user->behaviors;
    }
    if (q != s.query) s.chain_start = s.click_history.size();
    FacetsReply out;
    out.facets = generate(s, q, &out.cache_hit);
    s.query = q;
    s.last_facets = out.facets;
    s.updated = clock_();
    return out;
}

SelectReply FacetService::select(const std::string& session_id, const std::string& facet, const std::string& value) {
    auto sl = slot(session_id, false);
    std::lock_guard lock(sl->mu);
    SessionState& s = sl->state;
    auto shown = std::find_if(s.last_facets.begin(), s.last_facets.end(), [&](auto& f) { return f.name == facet; });
    if (shown == s.last_facets.end()) throw ServiceError(409, "facet '" + facet + "' was not in the last facet list");
    if (std::find(shown->values.begin(), shown->values.end(), value) == shown->values.end())
        throw ServiceError(409, "value '" + value + "' was not offered for facet '" + facet + "'");

    const FacetSelection sel{facet, value};
    SelectReply out;
    const std::vector<FacetSelection> chain(s.click_history.begin() + static_cast<std::ptrdiff_t>(s.chain_start),
                                            s.click_history.end());
    if (s.mode == RetrievalMode::boolean) {
        std::vector<FacetSelection> all = chain;
        all.push_back(sel);
        out.rewritten_query = s.query;
        out.results = boolean_filter(env_.index(), env_.catalog(), s.query, all, config_.result_depth);
    } else {
        RewriteContext rw{s.query, sel, chain};
        out.rewritten_query = rewrite_query(params_.rewrite, rw, env_.kg(), DecodeMode::argmax).query;
        out.results = genfacet::search(env_.index(), out.rewritten_query, config_.result_depth);
    }
    s.click_history.push_back(sel);
    cache_.invalidate_session(session_id);
    s.query = out.rewritten_query;
    out.facets = generate(s, s.query, nullptr);
    s.last_facets = out.facets;
    s.updated = clock_();
    return out;
}

std::vector<RankedResult> FacetService::search(const std::string& query, std::size_t k) const {
    if (k < 1 || k > 100) throw ServiceError(400, "k must be between 1 and 100");
    return genfacet::search(env_.index(), query, k);
}

void FacetService::set_mode(const std::string& session_id, const std::string& mode) {
    auto m = parse_retrieval_mode(mode);
    if (!m) throw ServiceError(400, "unknown mode '" + mode + "'");
    if (session_id.empty()) throw ServiceError(400, "session_id must not be empty");
    auto sl = slot(session_id, true);
    std::lock_guard lock(sl->mu);
    sl->state.mode = *m;
    sl->state.updated = clock_();
}

std::optional<SessionState> FacetService::session(const std::string& session_id) const {
    std::shared_ptr<Slot> sl;
    {
        std::lock_guard lock(sessions_mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) return std::nullopt;
        sl = it->second;
    }
    std::lock_guard lock(sl->mu);
    return sl->state;
}

std::size_t FacetService::session_count() const {
    std::lock_guard lock(sessions_mu_);
    return sessions_.size();
}

// ---- HTTP layer ----

namespace {

using nlohmann::ordered_json;

ordered_json facets_json(const FacetList& facets) {
    ordered_json arr = ordered_json::array();
    for (const auto& f : facets) arr.push_back({{"name", f.name}, {"values", f.values}, {"score", f.score}});
    return arr;
}

ordered_json results_json(const Catalog& catalog, const std::vector<RankedResult>& results) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : results) {
        const Product* p = catalog.find(r.doc_id);
        arr.push_back({{"id", r.doc_id}, {"title", p ? p->title : std::string()}, {"score", r.score}});
    }
    return arr;
}

nlohmann::json parse_body(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw ServiceError(400, "request body is not valid JSON");
    }
    if (!j.is_object()) throw ServiceError(400, "request body must be a JSON object");
    return j;
}

std::string string_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ServiceError(400, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

HttpResponse ok(const ordered_json& j) { return {200, j.dump()}; }

HttpResponse route(FacetService& service, const HttpRequest& req) {
    const bool post = req.method == "POST", get = req.method == "GET";
    if (req.path == "/healthz") {
        if (!get) throw ServiceError(405, "use GET");
        return ok({{"status", "ok"}});
    }
    if (req.path == "/v1/facets") {
        if (!post) throw ServiceError(405, "use POST");
        const auto j = parse_body(req.body);
        const auto session_id = string_field(j, "session_id");
        const auto query = string_field(j, "query");
        std::optional<UserContext> user;
        if (j.contains("profile") || j.contains("behaviors")) {
            user.emplace();
            try {
                if (j.contains("profile"))
                    for (const auto& p : j.at("profile"))
                        user->profile.emplace_back(p.at(0).get<std::string>(), p.at(1).get<double>());
                if (j.contains("behaviors"))
                    for (const auto& b : j.at("behaviors")) {
                        const auto kind = b.at(0).get<std::string>();
                        if (kind != "click" && kind != "cart") throw ServiceError(400, "unknown behavior kind " + kind);
                        user->behaviors.push_back(
                            {kind == "cart" ? EventKind::cart : EventKind::click, b.at(1).get<std::string>()});
                    }
            } catch (const nlohmann::json::exception&) {
                throw ServiceError(400, "profile is [[tag, weight]], behaviors is [[kind, product_id]]");
            }
        }
        const auto reply = service.facets(session_id, query, user ? &*user : nullptr);
        return ok({{"facets", facets_json(reply.facets)}, {"cache", reply.cache_hit ? "hit" : "miss"}});
    }
    if (req.path == "/v1/select") {
        if (!post) throw ServiceError(405, "use POST");
        const auto j = parse_body(req.body);
        const auto reply =
            service.select(string_field(j, "session_id"), string_field(j, "facet_name"), string_field(j, "value"));
        return ok({{"rewritten_query", reply.rewritten_query},
                   {"results", results_json(service.env().catalog(), reply.results)},
                   {"facets", facets_json(reply.facets)}});
    }
    if (req.path == "/v1/search") {
        if (!get) throw ServiceError(405, "use GET");
        auto q = req.params.find("q");
        if (q == req.params.end()) throw ServiceError(400, "missing parameter q");
        std::size_t k = 10;
        if (auto ks = req.params.find("k"); ks != req.params.end()) {
            const auto& s = ks->second;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
            if (ec != std::errc() || p != s.data() + s.size()) throw ServiceError(400, "k must be an integer");
        }
        return ok({{"results", results_json(service.env().catalog(), service.search(q->second, k))}});
    }
    if (req.path == "/v1/mode") {
        if (!post) throw ServiceError(405, "use POST");
        const auto j = parse_body(req.body);
        const auto session_id = string_field(j, "session_id");
        const auto mode = string_field(j, "mode");
        service.set_mode(session_id, mode);
        return ok({{"session_id", session_id}, {"mode", mode}});
    }
    throw ServiceError(404, "no route for " + req.path);
}

}  // namespace

HttpResponse dispatch(FacetService& service, const HttpRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    HttpResponse resp;
    try {
        resp = route(service, request);
    } catch (const ServiceError& e) {
        resp = {e.status(), ordered_json{{"error", e.what()}}.dump()};
    } catch (const std::exception& e) {
        resp = {500, ordered_json{{"error", e.what()}}.dump()};
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, " %d %.3f ms", resp.status, ms);
    log::info(request.method + " " + request.path + buf);
    return resp;
}

struct HttpServer::Impl {
    FacetService& service;
    httplib::Server server;
    explicit Impl(FacetService& s) : service(s) {}
};

HttpServer::HttpServer(FacetService& service) : impl_(std::make_unique<Impl>(service)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        HttpRequest r{req.method, req.path, req.body, {}};
        for (const auto& [k, v] : req.params) r.params.emplace(k, v);
        const auto out = dispatch(impl_->service, r);
        res.status = out.status;
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(out.body, "application/json");
    };
    impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    impl_->server.Get(R"((/v1/.*|/healthz))", handler);
    impl_->server.Post(".*", handler);
    impl_->server.Put(".*", handler);
    impl_->server.Delete(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw std::runtime_error("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port))
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::mount_static(const std::filesystem::path& dir) {
    if (!impl_->server.set_mount_point("/", dir.string()))
        throw std::runtime_error("cannot serve static files from " + dir.string());
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace genfacet
