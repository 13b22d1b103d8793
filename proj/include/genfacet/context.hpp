#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/lexindex.hpp"

namespace genfacet {

struct TrendTerm {
    std::string term;
    double weight = 0.0;

    bool operator==(const TrendTerm&) const = default;
};

enum class EventKind { click, cart };

struct BehaviorEvent {
    EventKind kind = EventKind::click;
    std::string product_id;

    bool operator==(const BehaviorEvent&) const = default;
};

/// (interest tag, weight)
using Profile = std::vector<std::pair<std::string, double>>;

/// Everything facet generation conditions on.
struct SessionContext {
    std::string query;
    Profile profile;
    std::vector<BehaviorEvent> behaviors;  ///< chronological
    AttributeSubgraph kg_view;
    std::vector<TrendTerm> web_trends;
    std::vector<std::string> warnings;  ///< degradations recorded while assembling
};

/// Everything query rewriting conditions on.
struct RewriteContext {
    std::string original_query;
    FacetSelection selection;
    std::vector<FacetSelection> click_history;
};

// ---- external knowledge ----

/// Source of real-time trend terms. Implementations must be thread-safe.
class KnowledgeProvider {
public:
    virtual ~KnowledgeProvider() = default;
    virtual std::vector<TrendTerm> lookup(std::string_view query) const = 0;
};

class NullKnowledgeProvider final : public KnowledgeProvider {
public:
    std::vector<TrendTerm> lookup(std::string_view) const override { return {}; }
};

/// Query-term -> trend strings table. The i-th trend listed for a term gets
/// weight 1/(i+1); a term matched by several query tokens keeps its best weight.
class StubKnowledgeProvider final : public KnowledgeProvider {
public:
    explicit StubKnowledgeProvider(std::map<std::string, std::vector<std::string>> table);
    static StubKnowledgeProvider from_file(const std::filesystem::path& path);
    static StubKnowledgeProvider from_json(const std::string& text);
    std::string to_json() const;

    std::vector<TrendTerm> lookup(std::string_view query) const override;
    const std::map<std::string, std::vector<std::string>>& table() const noexcept { return table_; }

private:
    std::map<std::string, std::vector<std::string>> table_;
};

inline constexpr std::size_t kMaxTrendTerms = 16;
inline constexpr std::chrono::milliseconds kDefaultProviderDeadline{200};

/// Calls the provider under a deadline. Never throws: a missing provider gives [],
/// errors and timeouts give [] plus a message appended to `warnings`.
/// Output is capped at 16 entries with weights clamped into [0,1]. A non-positive
/// deadline calls the provider inline without a timeout.
std::vector<TrendTerm> fetch_external_knowledge(std::shared_ptr<const KnowledgeProvider> provider,
                                                std::string_view query,
                                                std::chrono::milliseconds deadline = kDefaultProviderDeadline,
                                                std::vector<std::string>* warnings = nullptr);

SessionContext assemble_generation_context(std::string query, Profile profile, std::vector<BehaviorEvent> behaviors,
                                           const KnowledgeGraph& kg,
                                           std::shared_ptr<const KnowledgeProvider> provider,
                                           std::chrono::milliseconds deadline = kDefaultProviderDeadline);

// ---- prompts ----

enum class TemplateId { generation, rewrite };

struct PromptTemplate {
    TemplateId id;
    std::string text;                ///< with {slot} placeholders
    std::vector<std::string> slots;  ///< placeholder names, in order of first use

    static const PromptTemplate& generation();
    static const PromptTemplate& rewrite();
};

class MissingSlotError : public std::invalid_argument {
public:
    explicit MissingSlotError(const std::string& slot)
        : std::invalid_argument("prompt slot not filled: " + slot), slot_(slot) {}
    const std::string& slot() const noexcept { return slot_; }

private:
    std::string slot_;
};

using SlotValues = std::map<std::string, std::string>;

/// Single-pass substitution; slot values are never re-expanded.
std::string render_prompt(const PromptTemplate& tmpl, const SlotValues& slots);

/// Slot serialization: lists become comma-separated name=value pairs.
SlotValues generation_slots(const SessionContext& ctx);
SlotValues rewrite_slots(const RewriteContext& ctx);

inline std::string render_prompt(const SessionContext& ctx) {
    return render_prompt(PromptTemplate::generation(), generation_slots(ctx));
}
inline std::string render_prompt(const RewriteContext& ctx) {
    return render_prompt(PromptTemplate::rewrite(), rewrite_slots(ctx));
}

/// Shortest round-trip decimal text for weights inside prompts and hashes.
std::string format_number(double v);

}  // namespace genfacet
