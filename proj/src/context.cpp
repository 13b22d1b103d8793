#include "genfacet/context.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <future>
#include <thread>

#include <json.hpp>

#include "genfacet/log.hpp"

namespace genfacet {

StubKnowledgeProvider::StubKnowledgeProvider(std::map<std::string, std::vector<std::string>> table)
    : table_(std::move(table)) {}

StubKnowledgeProvider StubKnowledgeProvider::from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        return StubKnowledgeProvider(j.get<std::map<std::string, std::vector<std::string>>>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, std::string("malformed trend table: ") + e.what());
    }
}

StubKnowledgeProvider StubKnowledgeProvider::from_file(const std::filesystem::path& path) {
    return from_json(read_text_file(path));
}

std::string StubKnowledgeProvider::to_json() const { return nlohmann::json(table_).dump(1) + "\n"; }

std::vector<TrendTerm> StubKnowledgeProvider::lookup(std::string_view query) const {
    std::vector<TrendTerm> out;
    auto consider = [&](const std::string& key) {
        auto it = table_.find(key);
        if (it == table_.end()) return;
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            const double w = 1.0 / static_cast<double>(i + 1);
            auto hit = std::find_if(out.begin(), out.end(), [&](auto& t) { return t.term == it->second[i]; });
            if (hit == out.end())
                out.push_back({it->second[i], w});
            else
                hit->weight = std::max(hit->weight, w);
        }
    };
    consider(trim(query));
    for (const auto& tok : tokenize(query)) consider(tok);
    return out;
}

namespace {

std::vector<TrendTerm> sanitize(std::vector<TrendTerm> in) {
    std::vector<TrendTerm> out;
    for (auto& t : in) {
        if (t.term.empty() || !std::isfinite(t.weight)) continue;
        if (std::any_of(out.begin(), out.end(), [&](auto& o) { return o.term == t.term; })) continue;
        t.weight = std::clamp(t.weight, 0.0, 1.0);
        out.push_back(std::move(t));
        if (out.size() == kMaxTrendTerms) break;
    }
    return out;
}

void degrade(std::vector<std::string>* warnings, std::string msg) {
    log::warn(msg);
    if (warnings) warnings->push_back(std::move(msg));
}

}  // namespace

std::vector<TrendTerm> fetch_external_knowledge(std::shared_ptr<const KnowledgeProvider> provider,
                                                std::string_view query, std::chrono::milliseconds deadline,
                                                std::vector<std::string>* warnings) {
    if (!provider) return {};
    if (deadline.count() <= 0) {
        // Inline call: offline simulation trades the deadline for determinism and speed.
        try {
            return sanitize(provider->lookup(query));
        } catch (const std::exception& e) {
            degrade(warnings, std::string("knowledge provider failed: ") + e.what());
            return {};
        }
    }
    // The worker owns its inputs; on timeout it finishes in the background and its result is dropped.
    auto promise = std::make_shared<std::promise<std::vector<TrendTerm>>>();
    auto future = promise->get_future();
    std::thread([provider, promise, q = std::string(query)] {
        try {
            promise->set_value(provider->lookup(q));
        } catch (...) {
            promise->set_exception(std::current_exception());
        }
    }).detach();
    if (future.wait_for(deadline) != std::future_status::ready) {
        degrade(warnings, "knowledge provider timed out after " + std::to_string(deadline.count()) + " ms");
        return {};
    }
    try {
        return sanitize(future.get());
    } catch (const std::exception& e) {
        degrade(warnings, std::string("knowledge provider failed: ") + e.what());
    } catch (...) {
        degrade(warnings, "knowledge provider failed");
    }
    return {};
}

SessionContext assemble_generation_context(std::string query, Profile profile, std::vector<BehaviorEvent> behaviors,
                                           const KnowledgeGraph& kg,
                                           std::shared_ptr<const KnowledgeProvider> provider,
                                           std::chrono::milliseconds deadline) {
    SessionContext ctx;
    ctx.query = std::move(query);
    ctx.profile = std::move(profile);
    ctx.behaviors = std::move(behaviors);
    ctx.kg_view = kg_subgraph(kg, tokenize(ctx.query));
    ctx.web_trends = fetch_external_knowledge(std::move(provider), ctx.query, deadline, &ctx.warnings);
    return ctx;
}

// ---- prompts ----

namespace {

std::vector<std::string> scan_slots(const std::string& text) {
    std::vector<std::string> slots;
    std::size_t pos = 0;
    while ((pos = text.find('{', pos)) != std::string::npos) {
        auto end = text.find('}', pos);
        if (end == std::string::npos) break;
        std::string name = text.substr(pos + 1, end - pos - 1);
        if (std::find(slots.begin(), slots.end(), name) == slots.end()) slots.push_back(name);
        pos = end + 1;
    }
    return slots;
}

PromptTemplate make_template(TemplateId id, std::string text) {
    auto slots = scan_slots(text);
    return PromptTemplate{id, std::move(text), std::move(slots)};
}

}  // namespace

const PromptTemplate& PromptTemplate::generation() {
    static const PromptTemplate t = make_template(
        TemplateId::generation,
        "You are an AI assistant for an e-commerce search system. Based on the user's search context, generate a "
        "list of relevant facets (like product attributes) that can help them refine their search.\n"
        "User Query: {query}\n"
        "User Profile Interests: {user_profile}\n"
        "User Session Behaviors (clicks/carts): {user_behavior}\n"
        "Related Product Knowledge Graph: {kg_subgraph}\n"
        "Real-time Web Trends: {web_content}\n"
        "Generate a list of facets in JSON format, each with a name and possible values. Focus on attributes that "
        "are not obvious from the query alone and reflect current trends or specific user needs.\n"
        "Facets:");
    return t;
}

const PromptTemplate& PromptTemplate::rewrite() {
    static const PromptTemplate t = make_template(
        TemplateId::rewrite,
        "You are an AI assistant for an e-commerce search system. A user has just clicked on a facet to refine "
        "their search. Rewrite the original query to better reflect their new intent for the retrieval engine.\n"
        "Original Query: {original_query}\n"
        "Selected Facet: {selected_facet_value} (from facet: {selected_facet_name})\n"
        "User Click History in this session: {click_history}\n"
        "Generate ONLY the rewritten query string that captures the user's refined intent. \n"
        "Rewritten Query:");
    return t;
}

std::string render_prompt(const PromptTemplate& tmpl, const SlotValues& slots) {
    for (const auto& s : tmpl.slots)
        if (!slots.count(s)) throw MissingSlotError(s);
    std::string out;
    out.reserve(tmpl.text.size() + 256);
    std::size_t pos = 0;
    while (pos < tmpl.text.size()) {
        auto open = tmpl.text.find('{', pos);
        if (open == std::string::npos) break;
        auto close = tmpl.text.find('}', open);
        if (close == std::string::npos) break;
        out.append(tmpl.text, pos, open - pos);
        out += slots.at(tmpl.text.substr(open + 1, close - open - 1));
        pos = close + 1;
    }
    out.append(tmpl.text, pos, std::string::npos);
    return out;
}

std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

SlotValues generation_slots(const SessionContext& ctx) {
    std::vector<std::string> parts;
    for (const auto& [tag, w] : ctx.profile) parts.push_back(tag + "=" + format_number(w));
    std::string profile = join(parts, ", ");

    parts.clear();
    for (const auto& b : ctx.behaviors)
        parts.push_back(std::string(b.kind == EventKind::click ? "click" : "cart") + "=" + b.product_id);
    std::string behavior = join(parts, ", ");

    parts.clear();
    for (const auto& [name, info] : ctx.kg_view) parts.push_back(name + "=" + join(info.values, "|"));
    std::string kg = join(parts, ", ");

    parts.clear();
    for (const auto& t : ctx.web_trends) parts.push_back(t.term + "=" + format_number(t.weight));
    std::string web = join(parts, ", ");

    return {{"query", ctx.query},
            {"user_profile", profile},
            {"user_behavior", behavior},
            {"kg_subgraph", kg},
            {"web_content", web}};
}

SlotValues rewrite_slots(const RewriteContext& ctx) {
    std::vector<std::string> parts;
    for (const auto& s : ctx.click_history) parts.push_back(s.name + "=" + s.value);
    return {{"original_query", ctx.original_query},
            {"selected_facet_value", ctx.selection.value},
            {"selected_facet_name", ctx.selection.name},
            {"click_history", join(parts, ", ")}};
}

}  // namespace genfacet
