#include "genfacet/usersim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace genfacet {

Environment::Environment(Catalog catalog, KnowledgeGraph kg, std::shared_ptr<const KnowledgeProvider> provider,
                         std::optional<InvertedIndex> index)
    : catalog_(std::move(catalog)), kg_(std::move(kg)), provider_(std::move(provider)) {
    if (index) {
        if (index->doc_count() != catalog_.size())
            throw std::invalid_argument("index does not match the catalog");
        for (const auto& id : index->doc_ids())
            if (!catalog_.find(id)) throw std::invalid_argument("index document " + id + " is not in the catalog");
        index_ = std::move(*index);
    } else {
        index_ = build_index(catalog_);
    }
    for (std::size_t i = 0; i < catalog_.products().size(); ++i)
        by_category_[catalog_.products()[i].category].push_back(i);
    for (const auto& [cat, attrs] : kg_.categories) {
        std::set<std::string> hot;
        if (provider_) {
            for (const auto& t : fetch_external_knowledge(provider_, cat, std::chrono::milliseconds(0)))
                for (const auto& tok : tokenize(t.term))
                    for (const auto& [name, info] : attrs)
                        if (std::find(info.values.begin(), info.values.end(), tok) != info.values.end())
                            hot.insert(name);
        }
        trending_[cat] = std::vector<std::string>(hot.begin(), hot.end());
    }
}

Environment Environment::synthetic(const CatalogConfig& config) {
    auto gen = generate_catalog(config);
    auto provider = std::make_shared<StubKnowledgeProvider>(make_trend_table(gen.kg, config.seed));
    return Environment(std::move(gen.catalog), std::move(gen.kg), std::move(provider));
}

const std::vector<std::size_t>& Environment::products_in(const std::string& category) const {
    static const std::vector<std::size_t> kNone;
    auto it = by_category_.find(category);
    return it == by_category_.end() ? kNone : it->second;
}

const std::vector<std::string>& Environment::trending_attributes(const std::string& category) const {
    static const std::vector<std::string> kNone;
    auto it = trending_.find(category);
    return it == trending_.end() ? kNone : it->second;
}

std::optional<std::string> Environment::category_of_query(const std::string& query) const {
    for (const auto& t : tokenize(query))
        if (kg_.has_category(t)) return t;
    return std::nullopt;
}

SessionContext Environment::context(const std::string& query, const Profile& profile,
                                    const std::vector<BehaviorEvent>& behaviors) const {
    return assemble_generation_context(query, profile, behaviors, kg_, provider_, std::chrono::milliseconds(0));
}

// ---- intents ----

std::vector<std::string> matching_products(const Catalog& catalog, const std::string& category,
                                           const std::map<std::string, std::string>& constraints) {
    std::vector<std::string> out;
    for (const auto& p : catalog.products()) {
        if (p.category != category) continue;
        bool ok = true;
        for (const auto& [a, v] : constraints) {
            auto it = p.attrs.find(a);
            if (it == p.attrs.end() || it->second != v) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(p.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string intent_description(const std::string& category, const std::map<std::string, std::string>& constraints) {
    std::string out = category;
    for (const auto& [a, v] : constraints) out += " " + v;
    return out;
}

namespace {

LatentIntent draw_intent(const Catalog& catalog, const KnowledgeGraph& kg,
                         const std::map<std::string, std::vector<std::size_t>>& by_category,
                         const Environment* trend_src, Rng& rng, double trend_boost) {
    std::vector<std::string> cats;
    for (const auto& [c, items] : by_category)
        if (!items.empty() && kg.has_category(c)) cats.push_back(c);
    if (cats.empty()) throw std::invalid_argument("no product can anchor an intent");

    LatentIntent intent;
    intent.category = cats[rng.below(cats.size())];
    const auto& items = by_category.at(intent.category);
    // Tempered popularity keeps the head from monopolizing the intents.
    std::vector<double> w;
    w.reserve(items.size());
    for (auto i : items) w.push_back(std::sqrt(std::max(catalog.products()[i].popularity, 1e-12)));
    const Product& anchor = catalog.products()[items[rng.weighted(w)]];

    const AttributeMap& attrs = *kg.attributes(intent.category);
    std::vector<std::string> pool;
    for (const auto& [name, info] : attrs)
        if (anchor.attrs.count(name)) pool.push_back(name);
    if (pool.empty()) throw std::invalid_argument("anchor product has no attributes");
    const std::size_t n = rng.between(1, std::min<std::size_t>(3, pool.size()));

    std::vector<std::string> chosen;
    const bool boost = rng.bernoulli(trend_boost);
    if (boost && trend_src) {
        std::vector<std::string> hot;
        for (const auto& a : trend_src->trending_attributes(intent.category))
            if (anchor.attrs.count(a)) hot.push_back(a);
        if (!hot.empty()) chosen.push_back(hot[rng.below(hot.size())]);
    }
    while (chosen.size() < n) {
        std::vector<std::string> rest;
        std::vector<double> pri;
        for (const auto& a : pool)
            if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) {
                rest.push_back(a);
                pri.push_back(attrs.at(a).prior);
            }
        chosen.push_back(rest[rng.weighted(pri)]);
    }
    for (const auto& a : chosen) intent.constraints[a] = anchor.attrs.at(a);
    intent.description = intent_description(intent.category, intent.constraints);
    intent.target_docs = matching_products(catalog, intent.category, intent.constraints);
    return intent;
}

}  // namespace

LatentIntent sample_intent(const Environment& env, Rng& rng, double trend_boost) {
    std::map<std::string, std::vector<std::size_t>> by_cat;
    for (const auto& [cat, _] : env.kg().categories) {
        const auto& items = env.products_in(cat);
        if (!items.empty()) by_cat.emplace(cat, items);
    }
    return draw_intent(env.catalog(), env.kg(), by_cat, &env, rng, trend_boost);
}

LatentIntent sample_intent(const Catalog& catalog, const KnowledgeGraph& kg, Rng& rng) {
    std::map<std::string, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < catalog.products().size(); ++i) by_cat[catalog.products()[i].category].push_back(i);
    return draw_intent(catalog, kg, by_cat, nullptr, rng, 0.0);
}

UserContext sample_user_context(const Environment& env, const LatentIntent& intent, Rng& rng) {
    UserContext u;
    for (const auto& [a, v] : intent.constraints)
        if (rng.bernoulli(0.7)) u.profile.emplace_back(v, rng.uniform(0.5, 1.0));
    const AttributeMap* attrs = env.kg().attributes(intent.category);
    if (attrs && !attrs->empty()) {
        std::vector<const std::pair<const std::string, AttributeInfo>*> all;
        for (const auto& kv : *attrs) all.push_back(&kv);
        const std::size_t noise = rng.between(1, 2);
        for (std::size_t i = 0; i < noise; ++i) {
            const auto& info = all[rng.below(all.size())]->second;
            u.profile.emplace_back(info.values[rng.below(info.values.size())], rng.uniform(0.1, 0.5));
        }
    }
    rng.shuffle(u.profile);

    const auto& items = env.products_in(intent.category);
    const std::size_t nb = rng.between(0, 3);
    for (std::size_t i = 0; i < nb && !items.empty(); ++i) {
        std::string pid;
        if (rng.bernoulli(0.5)) {
            pid = intent.target_docs[rng.below(intent.target_docs.size())];
        } else {
            auto it = intent.constraints.begin();
            std::advance(it, static_cast<std::ptrdiff_t>(rng.below(intent.constraints.size())));
            std::vector<std::size_t> share;
            for (auto idx : items) {
                const auto& p = env.catalog().products()[idx];
                auto f = p.attrs.find(it->first);
                if (f != p.attrs.end() && f->second == it->second) share.push_back(idx);
            }
            pid = env.catalog().products()[share[rng.below(share.size())]].id;
        }
        u.behaviors.push_back({rng.bernoulli(0.3) ? EventKind::cart : EventKind::click, pid});
    }
    return u;
}

// ---- clicks ----

std::vector<std::string> unsatisfied_constraints(const LatentIntent& intent,
                                                 const std::vector<FacetSelection>& history) {
    std::vector<std::string> out;
    for (const auto& [a, v] : intent.constraints) {
        auto last = std::find_if(history.rbegin(), history.rend(), [&](const FacetSelection& s) { return s.name == a; });
        if (last == history.rend() || last->value != v) out.push_back(a);
    }
    return out;
}

std::optional<Click> click_decision(const LatentIntent& intent, const FacetList& facets,
                                    const std::vector<FacetSelection>& history, const ClickModelConfig& config,
                                    Rng& rng) {
    const auto open = unsatisfied_constraints(intent, history);
    for (std::size_t j = 0; j < facets.size(); ++j) {
        const Facet& f = facets[j];
        const bool match = std::find(open.begin(), open.end(), f.name) != open.end();
        const double p = match ? config.p_match * std::pow(config.gamma, static_cast<double>(j)) : config.p_noise;
        if (!rng.bernoulli(p)) continue;
        if (match) return Click{j + 1, {f.name, intent.constraints.at(f.name)}, true};
        if (f.values.empty()) continue;
        return Click{j + 1, {f.name, f.values[rng.below(f.values.size())]}, false};
    }
    return std::nullopt;
}

// ---- sessions ----

std::size_t SessionLog::clicks() const {
    std::size_t n = 0;
    for (const auto& t : turns) n += t.click.has_value();
    return n;
}

namespace {

std::vector<std::string> top_ids(const std::vector<RankedResult>& results, std::size_t k) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < results.size() && i < k; ++i) out.push_back(results[i].doc_id);
    return out;
}

bool hits_target(const std::vector<std::string>& docs, const LatentIntent& intent) {
    return std::any_of(docs.begin(), docs.end(), [&](const std::string& d) {
        return std::binary_search(intent.target_docs.begin(), intent.target_docs.end(), d);
    });
}

/// Baseline facets carry no features; recover them from the mined candidates so
/// impressions can train the click model.
void attach_features(FacetList& facets, const SessionContext& ctx, const Environment& env, std::size_t depth) {
    if (std::all_of(facets.begin(), facets.end(), [](const Facet& f) { return !f.features.empty(); })) return;
    const auto cands = mine_candidates(ctx, env.kg(), env.index(), env.catalog(), depth);
    for (auto& f : facets) {
        if (!f.features.empty()) continue;
        auto it = std::find_if(cands.begin(), cands.end(), [&](const CandidateFacet& c) { return c.name == f.name; });
        if (it != cands.end()) {
            f.features = it->features;
        } else {
            f.features.assign(kFacetFeatureDim, 0.0);
            f.features[kFeatBias] = 1.0;
        }
    }
}

}  // namespace

SessionLog run_session(const Environment& env, const SearchPipeline& pipeline, const LatentIntent& intent,
                       const UserContext& user, const SimulatorConfig& config, Rng& rng) {
    SessionLog log;
    log.intent = intent;
    log.user = user;
    log.initial_query = intent.category;
    std::string query = intent.category;
    std::vector<RankedResult> results = search(env.index(), query, config.result_depth);
    log.initial_docs = top_ids(results, config.conversion_depth);

    std::vector<FacetSelection> history;
    for (std::size_t t = 0; t < config.max_turns; ++t) {
        const SessionContext ctx = env.context(query, user.profile, user.behaviors);
        TurnInput in{env, intent, ctx, history, results, config.facet_count, config.result_depth};
        Turn turn;
        turn.query = query;
        turn.facets = pipeline.facets(in);
        attach_features(turn.facets, ctx, env, config.result_depth);
        turn.click = click_decision(intent, turn.facets, history, config.click, rng);
        if (turn.click) {
            Refinement r = pipeline.refine(in, turn.click->selection);
            history.push_back(turn.click->selection);
            query = std::move(r.query);
            results = std::move(r.results);
        }
        turn.rewritten = query;
        turn.top_docs = top_ids(results, config.conversion_depth);
        turn.converted = hits_target(turn.top_docs, intent);
        log.converted = log.converted || turn.converted;
        log.turns.push_back(std::move(turn));
        if (unsatisfied_constraints(intent, history).empty()) break;
        if (config.stop_on_conversion && log.converted) break;
    }
    return log;
}

std::vector<SessionLog> run_sessions(const Environment& env, const SearchPipeline& pipeline,
                                     const std::vector<SessionSpec>& sessions, const SimulatorConfig& config,
                                     std::uint64_t seed, unsigned threads) {
    std::vector<SessionLog> out(sessions.size());
    auto work = [&](std::size_t i) {
        Rng rng(derive_seed(seed, {i}));
        out[i] = run_session(env, pipeline, sessions[i].intent, sessions[i].user, config, rng);
        out[i].session_id = sessions[i].session_id;
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, sessions.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < sessions.size(); ++i) work(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < sessions.size();) {
                try {
                    work(i);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<SessionSpec> sample_sessions(const Environment& env, std::size_t n, std::uint64_t seed,
                                         double trend_boost) {
    std::vector<SessionSpec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, {0x5e55ULL, i}));
        SessionSpec s;
        char id[32];
        std::snprintf(id, sizeof id, "s%05zu", i);
        s.session_id = id;
        s.intent = sample_intent(env, rng, trend_boost);
        s.user = sample_user_context(env, s.intent, rng);
        out.push_back(std::move(s));
    }
    return out;
}

// ---- flywheel ----

std::vector<PreferencePair> harvest_preferences(const std::vector<SessionLog>& logs) {
    std::vector<PreferencePair> out;
    for (const auto& log : logs)
        for (std::size_t t = 0; t < log.turns.size(); ++t) {
            const Turn& turn = log.turns[t];
            if (!turn.click) continue;
            const std::size_t pos = turn.click->position - 1;
            for (std::size_t j = 0; j < turn.facets.size(); ++j)
                if (j != pos) out.push_back({log.session_id, t, turn.query, turn.facets[pos], turn.facets[j]});
        }
    return out;
}

std::vector<CtrExample> ctr_examples(const std::vector<PreferencePair>& pairs) {
    std::vector<CtrExample> out;
    std::set<std::tuple<std::string, std::size_t, std::string>> seen;
    for (const auto& p : pairs) {
        if (seen.insert({p.session_id, p.turn, "+" + p.positive.name}).second)
            out.push_back({p.positive.features, true});
        if (seen.insert({p.session_id, p.turn, "-" + p.negative.name}).second)
            out.push_back({p.negative.features, false});
    }
    return out;
}

EngagementStats simulated_ctr_ucvr(const std::vector<SessionLog>& logs) {
    std::size_t impressions = 0, clicks = 0, engaged = 0, engaged_converted = 0;
    for (const auto& log : logs) {
        std::size_t c = 0;
        for (const auto& t : log.turns) {
            impressions += t.facets.size();
            c += t.click.has_value();
        }
        clicks += c;
        if (c > 0) {
            ++engaged;
            engaged_converted += log.converted;
        }
    }
    EngagementStats s;
    s.ctr = impressions ? static_cast<double>(clicks) / static_cast<double>(impressions) : 0.0;
    s.ucvr = engaged ? static_cast<double>(engaged_converted) / static_cast<double>(engaged) : 0.0;
    return s;
}

std::string session_logs_to_jsonl(const std::vector<SessionLog>& logs) {
    using nlohmann::ordered_json;
    std::string out;
    auto emit = [&](const std::string& sid, const char* type, ordered_json payload) {
        ordered_json j;
        j["session_id"] = sid;
        j["type"] = type;
        j["payload"] = std::move(payload);
        out += j.dump();
        out += '\n';
    };
    for (const auto& log : logs) {
        ordered_json intent;
        intent["category"] = log.intent.category;
        intent["constraints"] = log.intent.constraints;
        intent["description"] = log.intent.description;
        intent["targets"] = log.intent.target_docs.size();
        emit(log.session_id, "intent", std::move(intent));
        emit(log.session_id, "initial", {{"query", log.initial_query}, {"top_docs", log.initial_docs}});
        for (std::size_t t = 0; t < log.turns.size(); ++t) {
            const Turn& turn = log.turns[t];
            ordered_json p;
            p["turn"] = t;
            p["query"] = turn.query;
            std::vector<std::string> names;
            for (const auto& f : turn.facets) names.push_back(f.name);
            p["facets"] = names;
            if (turn.click)
                p["click"] = {{"position", turn.click->position},
                              {"name", turn.click->selection.name},
                              {"value", turn.click->selection.value}};
            else
                p["click"] = nullptr;
            p["rewritten"] = turn.rewritten;
            p["top_docs"] = turn.top_docs;
            p["converted"] = turn.converted;
            emit(log.session_id, "turn", std::move(p));
        }
        emit(log.session_id, "end", {{"converted", log.converted}, {"clicks", log.clicks()}});
    }
    return out;
}

void save_session_logs(const std::vector<SessionLog>& logs, const std::filesystem::path& path) {
    write_text_file(path, session_logs_to_jsonl(logs));
}

}  // namespace genfacet
