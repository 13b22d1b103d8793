#include "genfacet/rewrite.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "genfacet/lexindex.hpp"
#include "genfacet/llm_client.hpp"

namespace genfacet {

std::string_view to_string(RewriteOp op) {
    switch (op) {
        case RewriteOp::append: return "APPEND";
        case RewriteOp::replace_slot: return "REPLACE_SLOT";
        case RewriteOp::expand_synonym: return "EXPAND_SYNONYM";
        case RewriteOp::replace_query: return "REPLACE_QUERY";
    }
    return "?";
}

std::optional<RewriteOp> parse_rewrite_op(std::string_view s) {
    for (auto op : {RewriteOp::append, RewriteOp::replace_slot, RewriteOp::expand_synonym, RewriteOp::replace_query})
        if (to_string(op) == s) return op;
    return std::nullopt;
}

namespace {

std::vector<std::string> split_words(std::string_view q) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < q.size()) {
        while (i < q.size() && std::isspace(static_cast<unsigned char>(q[i]))) ++i;
        std::size_t j = i;
        while (j < q.size() && !std::isspace(static_cast<unsigned char>(q[j]))) ++j;
        if (j > i) words.emplace_back(q.substr(i, j - i));
        i = j;
    }
    return words;
}

/// Tokens of the required (non '~') words, in order.
std::vector<std::string> hard_tokens(std::string_view q) {
    std::vector<std::string> out;
    for (const auto& w : split_words(q)) {
        if (w.front() == '~') continue;
        for (auto& t : tokenize(w)) out.push_back(std::move(t));
    }
    return out;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

std::string append_word(std::string q, const std::string& word) {
    q = trim(q);
    if (q.empty()) return word;
    return q + " " + word;
}

}  // namespace

bool slot_matches(std::string_view q, const std::string& attribute, const std::string& value,
                  const KnowledgeGraph& kg) {
    const auto values = kg.all_values(attribute);
    std::set<std::string> present;
    for (const auto& t : hard_tokens(q))
        if (contains(values, t)) present.insert(t);
    return present.size() == 1 && *present.begin() == value;
}

std::vector<RewriteAction> enumerate_actions(const RewriteContext& ctx, const KnowledgeGraph& kg) {
    const FacetSelection& sel = ctx.selection;
    const auto values = kg.all_values(sel.name);
    const auto qtokens = hard_tokens(ctx.original_query);
    std::vector<RewriteAction> out;

    out.push_back(RewriteAction{RewriteOp::append, sel.value, {}, {}, {}, {}});

    for (const auto& t : qtokens)
        if (contains(values, t)) {
            out.push_back(RewriteAction{RewriteOp::replace_slot, sel.value, t, {}, {}, {}});
            break;
        }

    if (values.size() >= 2) {
        RewriteAction a{RewriteOp::expand_synonym, sel.value, {}, {}, {}, {}};
        auto it = std::find(values.begin(), values.end(), sel.value);
        const std::size_t start = it == values.end() ? 0 : static_cast<std::size_t>(it - values.begin()) + 1;
        for (std::size_t i = 0; i < values.size() && a.synonyms.size() < kMaxSynonyms; ++i) {
            const auto& v = values[(start + i) % values.size()];
            if (v != sel.value) a.synonyms.push_back(v);
        }
        out.push_back(std::move(a));
    }

    if (!ctx.click_history.empty()) {
        // Canonical rebuild: free-text words, then the latest value of every other clicked attribute.
        std::vector<std::string> parts;
        for (const auto& t : qtokens)
            if (!kg.attribute_of_value(t) && !contains(parts, t)) parts.push_back(t);
        std::vector<std::string> attrs;
        for (const auto& h : ctx.click_history)
            if (h.name != sel.name && !contains(attrs, h.name)) attrs.push_back(h.name);
        for (const auto& a : attrs) {
            auto last = std::find_if(ctx.click_history.rbegin(), ctx.click_history.rend(),
                                     [&](const FacetSelection& h) { return h.name == a; });
            if (!contains(parts, last->value)) parts.push_back(last->value);
        }
        if (!contains(parts, sel.value)) parts.push_back(sel.value);
        out.push_back(RewriteAction{RewriteOp::replace_query, sel.value, {}, {}, join(parts), {}});
    }

    for (auto& a : out) {
        a.features.assign(kRewriteFeatureDim, 0.0);
        a.features[static_cast<std::size_t>(a.op)] = 1.0;
        a.features[kRewriteOpCount] =
            slot_matches(apply_action(ctx.original_query, sel, a), sel.name, sel.value, kg) ? 1.0 : 0.0;
    }
    return out;
}

std::string apply_action(std::string_view q, const FacetSelection& selection, const RewriteAction& action) {
    const std::string& value = action.value.empty() ? selection.value : action.value;
    auto appended = [&] {
        return contains(hard_tokens(q), value) ? trim(q) : append_word(std::string(q), value);
    };
    switch (action.op) {
        case RewriteOp::append: return appended();
        case RewriteOp::replace_slot: {
            auto words = split_words(q);
            for (auto& w : words)
                if (w.front() != '~' && tokenize(w) == std::vector<std::string>{action.slot}) {
                    w = value;
                    return join(words);
                }
            return appended();
        }
        case RewriteOp::expand_synonym: {
            std::string out = appended();
            const auto hard = hard_tokens(out);
            const auto words = split_words(out);
            for (const auto& s : action.synonyms) {
                const std::string soft = "~" + s;
                if (!contains(hard, s) && !contains(words, soft)) out = append_word(out, soft);
            }
            return out;
        }
        case RewriteOp::replace_query:
            return trim(action.query).empty() ? appended() : trim(action.query);
    }
    return appended();
}

FeatureMatrix action_matrix(const std::vector<RewriteAction>& actions) {
    FeatureMatrix rows;
    rows.reserve(actions.size());
    for (const auto& a : actions) rows.push_back(a.features);
    return rows;
}

RewriteSample sample_rewrite(const RewritePolicyParams& params, const std::vector<RewriteAction>& actions, Rng& rng) {
    if (actions.empty()) throw std::invalid_argument("no rewrite actions to choose from");
    const auto rows = action_matrix(actions);
    const auto pick = pl_sample(params, rows, 1, rng);
    return {pick[0], pl_log_prob(params, rows, pick)};
}

RewriteSample argmax_rewrite(const RewritePolicyParams& params, const std::vector<RewriteAction>& actions) {
    if (actions.empty()) throw std::invalid_argument("no rewrite actions to choose from");
    const auto rows = action_matrix(actions);
    const auto pick = pl_argmax(params, rows, 1);
    return {pick[0], pl_log_prob(params, rows, pick)};
}

double rewrite_logprob(const RewritePolicyParams& params, const std::vector<RewriteAction>& actions,
                       std::size_t index) {
    const std::size_t order[1] = {index};
    return pl_log_prob(params, action_matrix(actions), order);
}

RewriteResult rewrite_query(const RewritePolicyParams& params, const RewriteContext& ctx, const KnowledgeGraph& kg,
                            DecodeMode mode, Rng* rng) {
    RewriteResult out;
    out.actions = enumerate_actions(ctx, kg);
    RewriteSample s;
    if (mode == DecodeMode::sample) {
        if (!rng) throw std::invalid_argument("sample mode needs an rng");
        s = sample_rewrite(params, out.actions, *rng);
    } else {
        s = argmax_rewrite(params, out.actions);
    }
    out.action_index = s.index;
    out.log_prob = s.log_prob;
    out.query = apply_action(ctx.original_query, ctx.selection, out.actions[s.index]);
    return out;
}

std::string llm_rewrite_query(LlmClient& client, const RewriteContext& ctx) {
    return trim(client.complete(render_prompt(ctx)));
}

}  // namespace genfacet
