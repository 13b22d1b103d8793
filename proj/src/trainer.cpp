#include "genfacet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "genfacet/log.hpp"

namespace genfacet {

std::vector<double> PolicyParams::flatten() const {
    std::vector<double> out(facet.weights);
    out.insert(out.end(), rewrite.weights.begin(), rewrite.weights.end());
    return out;
}

void PolicyParams::assign(std::span<const double> flat) {
    if (flat.size() != dim()) throw std::invalid_argument("flat parameter vector has wrong size");
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(facet.weights.size()), facet.weights.begin());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(facet.weights.size()), flat.end(), rewrite.weights.begin());
}

bool PolicyParams::finite() const {
    auto ok = [](const LinearPolicy& p) {
        return std::isfinite(p.temperature) &&
               std::all_of(p.weights.begin(), p.weights.end(), [](double w) { return std::isfinite(w); });
    };
    return ok(facet) && ok(rewrite);
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

double binary_entropy(std::size_t pos, std::size_t n) {
    if (n == 0 || pos == 0 || pos == n) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

}  // namespace

// ---- oracle teacher ----

double information_gain(const std::vector<RankedResult>& results, const Catalog& catalog,
                        const std::string& attribute, const std::vector<std::string>& sorted_targets) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> buckets;  // value -> (n, targets); "" = absent
    std::size_t n = 0, pos = 0;
    for (const auto& r : results) {
        const Product* p = catalog.find(r.doc_id);
        if (!p) continue;
        const bool t = std::binary_search(sorted_targets.begin(), sorted_targets.end(), r.doc_id);
        auto it = p->attrs.find(attribute);
        auto& b = buckets[it == p->attrs.end() ? std::string() : it->second];
        ++b.first;
        b.second += t;
        ++n;
        pos += t;
    }
    if (n == 0) return 0.0;
    double cond = 0.0;
    for (const auto& [_, b] : buckets)
        cond += static_cast<double>(b.first) / static_cast<double>(n) * binary_entropy(b.second, b.first);
    return std::max(0.0, binary_entropy(pos, n) - cond);
}

OracleLabel oracle_teacher(const Environment& env, const LatentIntent& intent, const std::string& query,
                           const std::vector<FacetSelection>& history, const RewardConfig& reward,
                           std::size_t result_depth) {
    OracleLabel out;
    const AttributeMap* attrs = env.kg().attributes(intent.category);
    if (!attrs) return out;
    const auto open = unsatisfied_constraints(intent, history);
    if (open.empty()) {
        out.facets = rule_based_facets(env.kg(), intent.category, kDefaultFacetCount);
        return out;
    }

    const auto results = search(env.index(), query, result_depth);
    struct Scored {
        std::string name;
        double ig, gini, prior;
    };
    std::vector<Scored> scored;
    bool informative = false;
    for (const auto& a : open) {
        const double ig = information_gain(results, env.catalog(), a, intent.target_docs);
        informative = informative || ig > 1e-12;
        scored.push_back({a, ig, gini_impurity(results, env.catalog(), a), attrs->at(a).prior});
    }
    if (informative)
        std::sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) {
            if (x.ig != y.ig) return x.ig > y.ig;
            if (x.gini != y.gini) return x.gini > y.gini;
            return x.name < y.name;
        });
    else
        std::sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) {
            return x.prior != y.prior ? x.prior > y.prior : x.name < y.name;
        });
    for (const auto& s : scored) out.facets.push_back(Facet{s.name, attrs->at(s.name).values, s.ig, {}});

    const std::string& top = out.facets.front().name;
    out.selection = FacetSelection{top, intent.constraints.at(top)};
    out.rewrite_context = RewriteContext{query, *out.selection, history};
    out.actions = enumerate_actions(out.rewrite_context, env.kg());
    for (std::size_t i = 0; i < out.actions.size(); ++i) {
        out.action_utilities.push_back(
            r_query(reward, env.index(), apply_action(query, *out.selection, out.actions[i]), intent));
        if (out.action_utilities[i] > out.action_utilities[out.gold_action]) out.gold_action = i;
    }
    return out;
}

FacetList OraclePipeline::facets(const TurnInput& in) const {
    auto f = oracle_teacher(in.env, in.intent, in.ctx.query, in.history, reward_, in.result_depth).facets;
    if (f.size() > in.facet_count) f.resize(in.facet_count);
    return f;
}

Refinement OraclePipeline::refine(const TurnInput& in, const FacetSelection& selection) const {
    RewriteContext rw{in.ctx.query, selection, in.history};
    const auto actions = enumerate_actions(rw, in.env.kg());
    std::string best;
    double best_u = -1.0;
    for (const auto& a : actions) {
        std::string q = apply_action(rw.original_query, selection, a);
        const double u = r_query(reward_, in.env.index(), q, in.intent);
        if (u > best_u) {
            best_u = u;
            best = std::move(q);
        }
    }
    return {best, search(in.env.index(), best, in.result_depth)};
}

// ---- distillation ----

TrainingState sample_training_state(const Environment& env, Rng& rng, const RewardConfig& reward,
                                    double trend_boost) {
    TrainingState st;
    st.session.session_id = "train";
    st.session.intent = sample_intent(env, rng, trend_boost);
    st.session.user = sample_user_context(env, st.session.intent, rng);
    const LatentIntent& intent = st.session.intent;
    st.query = intent.category;

    auto stray = [&] {
        const auto open = unsatisfied_constraints(intent, st.history);
        if (open.empty()) return;
        const std::string& a = open[rng.below(open.size())];
        std::vector<std::string> wrong;
        for (const auto& v : env.kg().attributes(intent.category)->at(a).values)
            if (v != intent.constraints.at(a)) wrong.push_back(v);
        if (wrong.empty()) return;
        FacetSelection sel{a, wrong[rng.below(wrong.size())]};
        st.query = apply_action(st.query, sel, RewriteAction{RewriteOp::append, sel.value, {}, {}, {}, {}});
        st.history.push_back(sel);
    };

    const std::size_t steps = rng.below(intent.constraints.size());
    for (std::size_t s = 0; s < steps; ++s) {
        if (rng.bernoulli(0.2)) stray();
        auto label = oracle_teacher(env, intent, st.query, st.history, reward);
        if (!label.selection) break;
        st.query = apply_action(st.query, *label.selection, label.actions[label.gold_action]);
        st.history.push_back(*label.selection);
    }
    if (rng.bernoulli(0.2)) stray();
    return st;
}

std::string validate_record(const DistillRecord& r, const KnowledgeGraph& kg) {
    const AttributeMap* attrs = kg.attributes(r.intent.category);
    if (!attrs) return "unknown category " + r.intent.category;
    if (r.gold_facets.empty()) return "no gold facets";
    for (std::size_t i = 0; i < r.gold_facets.size(); ++i) {
        const auto& g = r.gold_facets[i];
        if (!attrs->count(g)) return "gold facet " + g + " is not an attribute of " + r.intent.category;
        if (std::find(r.gold_facets.begin(), r.gold_facets.begin() + static_cast<std::ptrdiff_t>(i), g) !=
            r.gold_facets.begin() + static_cast<std::ptrdiff_t>(i))
            return "gold facet " + g + " repeated";
        if (std::none_of(r.candidates.begin(), r.candidates.end(), [&](auto& c) { return c.name == g; }))
            return "gold facet " + g + " is not a candidate";
    }
    for (const auto& c : r.candidates)
        if (c.features.size() != kFacetFeatureDim) return "candidate " + c.name + " has wrong feature size";
    if (r.gold_action >= r.actions.size()) return "gold action out of range";
    for (const auto& a : r.actions)
        if (a.features.size() != kRewriteFeatureDim) return "action has wrong feature size";
    const auto& sel = r.rewrite_context.selection;
    if (!attrs->count(sel.name)) return "selection " + sel.name + " is not an attribute";
    const std::string q = apply_action(r.rewrite_context.original_query, sel, r.actions[r.gold_action]);
    if (trim(q).empty()) return "gold rewrite is empty";
    const auto toks = tokenize(q);
    const auto values = kg.all_values(sel.name);
    if (std::none_of(toks.begin(), toks.end(), [&](auto& t) { return std::find(values.begin(), values.end(), t) != values.end(); }))
        return "gold rewrite drops the selection";
    return {};
}

std::vector<DistillRecord> build_distill_dataset(const Environment& env, std::size_t n, std::uint64_t seed,
                                                 const RewardConfig& reward) {
    std::vector<DistillRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt == 100) throw std::logic_error("could not build a valid distillation record");
            Rng rng(derive_seed(seed, {0xd157ULL, i, attempt}));
            TrainingState st = sample_training_state(env, rng, reward);
            auto label = oracle_teacher(env, st.session.intent, st.query, st.history, reward);
            if (!label.selection) continue;
            DistillRecord r;
            char id[32];
            std::snprintf(id, sizeof id, "d%05zu", i);
            r.session_id = id;
            r.intent = st.session.intent;
            r.context = env.context(st.query, st.session.user.profile, st.session.user.behaviors);
            r.candidates = mine_candidates(r.context, env.kg(), env.index(), env.catalog());
            for (const auto& f : label.facets) r.gold_facets.push_back(f.name);
            r.rewrite_context = label.rewrite_context;
            r.actions = label.actions;
            r.gold_action = label.gold_action;
            auto problem = validate_record(r, env.kg());
            if (!problem.empty()) {
                log::warn("discarding distillation record: " + problem);
                continue;
            }
            out.push_back(std::move(r));
            break;
        }
    }
    return out;
}

namespace {

using nlohmann::json;

json to_json(const std::vector<double>& v) { return json(v); }

json record_to_json(const DistillRecord& r) {
    json j;
    j["session_id"] = r.session_id;
    j["intent"] = {{"category", r.intent.category},
                   {"constraints", r.intent.constraints},
                   {"description", r.intent.description},
                   {"targets", r.intent.target_docs}};
    json profile = json::array();
    for (const auto& [t, w] : r.context.profile) profile.push_back({t, w});
    json behaviors = json::array();
    for (const auto& b : r.context.behaviors)
        behaviors.push_back({b.kind == EventKind::click ? "click" : "cart", b.product_id});
    json kg = json::object();
    for (const auto& [a, info] : r.context.kg_view) kg[a] = {{"values", info.values}, {"prior", info.prior}};
    json trends = json::array();
    for (const auto& t : r.context.web_trends) trends.push_back({t.term, t.weight});
    j["context"] = {{"query", r.context.query},
                    {"profile", profile},
                    {"behaviors", behaviors},
                    {"kg_view", kg},
                    {"web_trends", trends}};
    json cands = json::array();
    for (const auto& c : r.candidates)
        cands.push_back({{"name", c.name}, {"values", c.values}, {"features", to_json(c.features)}});
    j["candidates"] = cands;
    j["gold_facets"] = r.gold_facets;
    json hist = json::array();
    for (const auto& h : r.rewrite_context.click_history) hist.push_back({h.name, h.value});
    j["rewrite_context"] = {{"original_query", r.rewrite_context.original_query},
                            {"selection", {r.rewrite_context.selection.name, r.rewrite_context.selection.value}},
                            {"click_history", hist}};
    json actions = json::array();
    for (const auto& a : r.actions)
        actions.push_back({{"op", std::string(to_string(a.op))},
                           {"value", a.value},
                           {"slot", a.slot},
                           {"synonyms", a.synonyms},
                           {"query", a.query},
                           {"features", to_json(a.features)}});
    j["actions"] = actions;
    j["gold_action"] = r.gold_action;
    return j;
}

DistillRecord record_from_json(const json& j) {
    DistillRecord r;
    r.session_id = j.at("session_id").get<std::string>();
    const auto& in = j.at("intent");
    r.intent.category = in.at("category").get<std::string>();
    r.intent.constraints = in.at("constraints").get<std::map<std::string, std::string>>();
    r.intent.description = in.at("description").get<std::string>();
    r.intent.target_docs = in.at("targets").get<std::vector<std::string>>();
    const auto& c = j.at("context");
    r.context.query = c.at("query").get<std::string>();
    for (const auto& p : c.at("profile")) r.context.profile.emplace_back(p.at(0).get<std::string>(), p.at(1).get<double>());
    for (const auto& b : c.at("behaviors"))
        r.context.behaviors.push_back(
            {b.at(0).get<std::string>() == "cart" ? EventKind::cart : EventKind::click, b.at(1).get<std::string>()});
    for (const auto& [a, info] : c.at("kg_view").items())
        r.context.kg_view[a] = AttributeInfo{info.at("values").get<std::vector<std::string>>(),
                                             info.at("prior").get<double>()};
    for (const auto& t : c.at("web_trends"))
        r.context.web_trends.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
    for (const auto& cand : j.at("candidates"))
        r.candidates.push_back({cand.at("name").get<std::string>(), cand.at("values").get<std::vector<std::string>>(),
                                cand.at("features").get<std::vector<double>>()});
    r.gold_facets = j.at("gold_facets").get<std::vector<std::string>>();
    const auto& rw = j.at("rewrite_context");
    r.rewrite_context.original_query = rw.at("original_query").get<std::string>();
    r.rewrite_context.selection = {rw.at("selection").at(0).get<std::string>(),
                                   rw.at("selection").at(1).get<std::string>()};
    for (const auto& h : rw.at("click_history"))
        r.rewrite_context.click_history.push_back({h.at(0).get<std::string>(), h.at(1).get<std::string>()});
    for (const auto& a : j.at("actions")) {
        RewriteAction act;
        auto op = parse_rewrite_op(a.at("op").get<std::string>());
        if (!op) throw std::invalid_argument("unknown rewrite op " + a.at("op").get<std::string>());
        act.op = *op;
        act.value = a.at("value").get<std::string>();
        act.slot = a.at("slot").get<std::string>();
        act.synonyms = a.at("synonyms").get<std::vector<std::string>>();
        act.query = a.at("query").get<std::string>();
        act.features = a.at("features").get<std::vector<double>>();
        r.actions.push_back(std::move(act));
    }
    r.gold_action = j.at("gold_action").get<std::size_t>();
    return r;
}

}  // namespace

void save_distill_dataset(const std::vector<DistillRecord>& data, const std::filesystem::path& path) {
    std::string out;
    for (const auto& r : data) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<DistillRecord> load_distill_dataset(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<DistillRecord> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (trim(line).empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError(n, e.what());
        }
    }
    return out;
}

// ---- supervised fitting ----

namespace {

double masked_sft_loss(const PolicyParams& params, const DistillRecord& r, double lambda, TaskMask tasks) {
    double loss = 0.0;
    if (tasks != TaskMask::rewrite_only) {
        std::vector<std::string> gold = r.gold_facets;
        loss -= pl_log_prob(params.facet, feature_matrix(r.candidates), candidate_order(r.candidates, gold));
    }
    if (tasks != TaskMask::facet_only) {
        if (r.gold_action >= r.actions.size()) throw std::invalid_argument("gold action not among actions");
        const std::size_t pick[1] = {r.gold_action};
        loss -= lambda * pl_log_prob(params.rewrite, action_matrix(r.actions), pick);
    }
    return loss;
}

void masked_sft_grad(const PolicyParams& params, const DistillRecord& r, double lambda, double scale,
                     std::span<double> grad, TaskMask tasks) {
    const std::size_t df = params.facet.weights.size();
    if (grad.size() != params.dim()) throw std::invalid_argument("gradient buffer has wrong dimension");
    if (tasks != TaskMask::rewrite_only)
        pl_log_prob_grad(params.facet, feature_matrix(r.candidates), candidate_order(r.candidates, r.gold_facets),
                         -scale, grad.subspan(0, df));
    if (tasks != TaskMask::facet_only) {
        if (r.gold_action >= r.actions.size()) throw std::invalid_argument("gold action not among actions");
        const std::size_t pick[1] = {r.gold_action};
        pl_log_prob_grad(params.rewrite, action_matrix(r.actions), pick, -scale * lambda, grad.subspan(df));
    }
}

}  // namespace

double sft_loss(const PolicyParams& params, const DistillRecord& record, double lambda) {
    return masked_sft_loss(params, record, lambda, TaskMask::both);
}

void sft_loss_grad(const PolicyParams& params, const DistillRecord& record, double lambda, double scale,
                   std::span<double> grad) {
    masked_sft_grad(params, record, lambda, scale, grad, TaskMask::both);
}

double mean_sft_loss(const PolicyParams& params, const std::vector<DistillRecord>& data, double lambda,
                     TaskMask tasks) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : data) total += masked_sft_loss(params, r, lambda, tasks);
    return total / static_cast<double>(data.size());
}

SftResult train_sft(const PolicyParams& init, const std::vector<DistillRecord>& data, const SftConfig& config) {
    if (data.empty()) throw std::invalid_argument("SFT needs a non-empty dataset");
    SftResult out;
    out.params = init;
    double loss = mean_sft_loss(init, data, config.lambda, config.tasks);
    out.initial_loss = loss;
    if (!std::isfinite(loss)) throw TrainingDivergence("initial SFT loss is not finite", init, 0);
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (std::size_t it = 0; it < config.iterations; ++it) {
        std::vector<double> grad(init.dim(), 0.0);
        for (const auto& r : data) masked_sft_grad(out.params, r, config.lambda, inv_n, grad, config.tasks);
        // Backtracking keeps every accepted step a descent step.
        double step = config.learning_rate;
        const auto base = out.params.flatten();
        bool accepted = false;
        for (int tries = 0; tries < 40 && !accepted; ++tries, step *= 0.5) {
            auto flat = base;
            for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= step * grad[i];
            PolicyParams trial = out.params;
            trial.assign(flat);
            const double trial_loss = mean_sft_loss(trial, data, config.lambda, config.tasks);
            if (!std::isfinite(trial_loss) || !trial.finite())
                throw TrainingDivergence("SFT loss diverged", out.params, it);
            if (trial_loss <= loss) {
                out.params = trial;
                loss = trial_loss;
                accepted = true;
            }
        }
        if (!accepted) break;  // at a stationary point for this step size
    }
    out.final_loss = loss;
    return out;
}

// ---- group-relative optimization ----

std::vector<double> compute_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) throw std::invalid_argument("advantages need a group of at least 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
    std::vector<double> out(rewards.size(), 0.0);
    if (sd < 1e-12) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    // Absorb the rounding residue in the last entry so the left-to-right sum is exactly 0.
    double head = 0.0;
    for (std::size_t i = 0; i + 1 < out.size(); ++i) head += out[i];
    out.back() = -head;
    return out;
}

double kl_divergence(const LinearPolicy& p, const LinearPolicy& ref, const FeatureMatrix& rows, std::size_t k) {
    return pl_kl(p, ref, rows, k);
}

void GroupRollout::normalize() {
    std::vector<double> r;
    for (const auto& s : samples) r.push_back(s.reward);
    const auto a = compute_advantages(r);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].advantage = a[i];
}

double rollout_logprob(const PolicyParams& params, const GroupRollout& group, const RolloutSample& s) {
    double lp = 0.0;
    if (!s.facet_order.empty()) lp += pl_log_prob(params.facet, group.facet_rows, s.facet_order);
    if (!s.action_rows.empty()) {
        const std::size_t pick[1] = {s.action};
        lp += pl_log_prob(params.rewrite, s.action_rows, pick);
    }
    return lp;
}

void GroupRollout::set_old_policy(const PolicyParams& old) {
    for (auto& s : samples) s.logp_old = rollout_logprob(old, *this, s);
}

namespace {

/// KL of one group; adds scale * d KL into grad when non-empty.
double group_kl(const PolicyParams& params, const PolicyParams& ref, const GroupRollout& g, double scale,
                std::span<double> grad) {
    const std::size_t df = params.facet.weights.size();
    const std::size_t dr = params.rewrite.weights.size();
    std::vector<double> gf(grad.empty() ? 0 : df, 0.0), gr(grad.empty() ? 0 : dr, 0.0);
    double kl = 0.0;
    if (g.facet_k > 0 && !g.facet_rows.empty()) kl += pl_kl(params.facet, ref.facet, g.facet_rows, g.facet_k, gf);
    std::size_t n_rw = 0;
    double kl_rw = 0.0;
    for (const auto& s : g.samples)
        if (!s.action_rows.empty()) {
            ++n_rw;
            kl_rw += pl_kl(params.rewrite, ref.rewrite, s.action_rows, 1, gr);
        }
    if (n_rw > 0) {
        kl += kl_rw / static_cast<double>(n_rw);
        for (auto& x : gr) x /= static_cast<double>(n_rw);
    }
    if (!grad.empty()) {
        for (std::size_t i = 0; i < df; ++i) grad[i] += scale * gf[i];
        for (std::size_t i = 0; i < dr; ++i) grad[df + i] += scale * gr[i];
    }
    return kl;
}

}  // namespace

double grpo_kl(const PolicyParams& params, const PolicyParams& ref, const std::vector<GroupRollout>& groups) {
    if (groups.empty()) return 0.0;
    double kl = 0.0;
    for (const auto& g : groups) kl += group_kl(params, ref, g, 0.0, {});
    return kl / static_cast<double>(groups.size());
}

double grpo_objective(const PolicyParams& params, const PolicyParams& ref, const std::vector<GroupRollout>& groups,
                      double beta, std::optional<double> clip_epsilon, std::span<double> grad) {
    if (groups.empty()) return 0.0;
    if (!grad.empty() && grad.size() != params.dim()) throw std::invalid_argument("gradient buffer has wrong dimension");
    const std::size_t df = params.facet.weights.size();
    const double inv_groups = 1.0 / static_cast<double>(groups.size());
    double total = 0.0;
    for (const auto& g : groups) {
        if (g.samples.empty()) continue;
        const double inv_g = 1.0 / static_cast<double>(g.samples.size());
        double surrogate = 0.0;
        for (const auto& s : g.samples) {
            const double ratio = std::exp(rollout_logprob(params, g, s) - s.logp_old);
            if (!std::isfinite(ratio)) throw std::domain_error("importance ratio is not finite");
            const double plain = ratio * s.advantage;
            double term = plain;
            bool pass_grad = true;
            if (clip_epsilon) {
                const double clipped = std::clamp(ratio, 1.0 - *clip_epsilon, 1.0 + *clip_epsilon) * s.advantage;
                if (clipped < plain) {
                    term = clipped;
                    pass_grad = false;
                }
            }
            surrogate += term;
            if (!grad.empty() && pass_grad && s.advantage != 0.0) {
                // d ratio = ratio * d log pi.
                const double scale = inv_groups * inv_g * ratio * s.advantage;
                if (!s.facet_order.empty())
                    pl_log_prob_grad(params.facet, g.facet_rows, s.facet_order, scale, grad.subspan(0, df));
                if (!s.action_rows.empty()) {
                    const std::size_t pick[1] = {s.action};
                    pl_log_prob_grad(params.rewrite, s.action_rows, pick, scale, grad.subspan(df));
                }
            }
        }
        const double kl = group_kl(params, ref, g, -beta * inv_groups, grad);
        total += (surrogate * inv_g - beta * kl) * inv_groups;
    }
    return total;
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (group_size < 2) throw std::invalid_argument("group size must be >= 2");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning rate must be > 0");
    if (clip_epsilon && !(*clip_epsilon > 0.0)) throw std::invalid_argument("clip epsilon must be > 0");
    if (sessions_per_iteration == 0) throw std::invalid_argument("sessions per iteration must be >= 1");
}

namespace {

struct PreparedSession {
    TrainingState state;
    SessionContext ctx;
    std::vector<CandidateFacet> candidates;
    FeatureMatrix rows;
    std::vector<std::string> gold;
    OracleLabel label;
    double stay_utility = 0.0;  ///< r_query of the unchanged query
};

}  // namespace

std::vector<GroupRollout> collect_rollouts(const PolicyParams& old, const GrpoEnvironment& genv,
                                           const TrainConfig& config, std::size_t iter) {
    const Environment& env = genv.env;
    const std::size_t S = config.sessions_per_iteration, G = config.group_size;
    std::vector<PreparedSession> prep(S);
    parallel_for(S, config.threads, [&](std::size_t s) {
        Rng rng(derive_seed(config.seed, {0x9e7aULL, iter, s}));
        auto& p = prep[s];
        p.state = sample_training_state(env, rng, genv.reward, genv.sim.trend_boost);
        p.ctx = env.context(p.state.query, p.state.session.user.profile, p.state.session.user.behaviors);
        p.candidates = mine_candidates(p.ctx, env.kg(), env.index(), env.catalog(), genv.sim.result_depth);
        p.rows = feature_matrix(p.candidates);
        p.label = oracle_teacher(env, p.state.session.intent, p.state.query, p.state.history, genv.reward,
                                 genv.sim.result_depth);
        for (const auto& f : p.label.facets) p.gold.push_back(f.name);
        if (config.tasks == TaskMask::both)
            p.stay_utility = r_query(genv.reward, env.index(), p.state.query, p.state.session.intent);
    });

    std::vector<GroupRollout> groups(S);
    for (std::size_t s = 0; s < S; ++s) {
        groups[s].samples.resize(G);
        if (config.tasks != TaskMask::rewrite_only) {
            groups[s].facet_rows = prep[s].rows;
            groups[s].facet_k = std::min(config.facet_count, prep[s].candidates.size());
        }
    }
    parallel_for(S * G, config.threads, [&](std::size_t task) {
        const std::size_t s = task / G, i = task % G;
        const PreparedSession& p = prep[s];
        const LatentIntent& intent = p.state.session.intent;
        GroupRollout& g = groups[s];
        RolloutSample& out = g.samples[i];
        Rng rng(derive_seed(config.seed, {iter, s, i}));

        if (config.tasks == TaskMask::rewrite_only) {
            if (!p.label.selection) return;
            auto pick = sample_rewrite(old.rewrite, p.label.actions, rng);
            out.action_rows = action_matrix(p.label.actions);
            out.action = pick.index;
            const auto q = apply_action(p.state.query, *p.label.selection, p.label.actions[pick.index]);
            out.reward = r_query(genv.reward, env.index(), q, intent);
            return;
        }

        auto list = sample_facet_list(old.facet, p.candidates, g.facet_k, rng);
        out.facet_order = list.order;
        const double rf = p.gold.empty() ? 0.0 : r_facet(genv.reward, genv.ctr, list.facets, p.gold);
        if (config.tasks == TaskMask::facet_only) {
            out.reward = rf;
            return;
        }
        double rq = p.stay_utility;
        if (auto click = click_decision(intent, list.facets, p.state.history, genv.sim.click, rng)) {
            RewriteContext rw{p.state.query, click->selection, p.state.history};
            const auto actions = enumerate_actions(rw, env.kg());
            auto pick = sample_rewrite(old.rewrite, actions, rng);
            out.action_rows = action_matrix(actions);
            out.action = pick.index;
            rq = r_query(genv.reward, env.index(), apply_action(rw.original_query, rw.selection, actions[pick.index]),
                         intent);
        }
        out.reward = rf + rq;
    });

    for (auto& g : groups) {
        // Sessions without an open constraint give nothing to learn from in the rewrite task.
        std::erase_if(g.samples, [](const RolloutSample& s) { return s.facet_order.empty() && s.action_rows.empty(); });
        if (g.samples.size() < 2) {
            g.samples.clear();
            continue;
        }
        g.set_old_policy(old);
        g.normalize();
    }
    std::erase_if(groups, [](const GroupRollout& g) { return g.samples.empty(); });
    return groups;
}

GrpoResult train_grpo(const PolicyParams& init, const GrpoEnvironment& genv, const TrainConfig& config) {
    config.validate();
    GrpoResult out;
    out.params = init;
    out.reference = init;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const PolicyParams old = out.params;
        auto groups = collect_rollouts(old, genv, config, it);
        std::vector<double> grad(out.params.dim(), 0.0);
        double objective = 0.0;
        try {
            objective = grpo_objective(out.params, out.reference, groups, config.beta, config.clip_epsilon, grad);
        } catch (const std::domain_error& e) {
            throw TrainingDivergence(e.what(), old, it);
        }
        IterationLog rec;
        rec.iter = it;
        std::size_t n = 0;
        for (const auto& g : groups)
            for (const auto& s : g.samples) {
                rec.mean_reward += s.reward;
                ++n;
            }
        if (n) rec.mean_reward /= static_cast<double>(n);
        rec.kl = grpo_kl(out.params, out.reference, groups);
        rec.loss = -objective;
        auto flat = out.params.flatten();
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += config.learning_rate * grad[i];
        out.params.assign(flat);
        if (!std::isfinite(objective) || !out.params.finite())
            throw TrainingDivergence("GRPO diverged at iteration " + std::to_string(it), old, it);
        out.log.push_back(rec);
    }
    return out;
}

std::string training_log_jsonl(const std::vector<IterationLog>& log) {
    std::string out;
    for (const auto& r : log) {
        nlohmann::ordered_json j;
        j["iter"] = r.iter;
        j["mean_reward"] = r.mean_reward;
        j["kl"] = r.kl;
        j["loss"] = r.loss;
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ---- checkpoints ----

std::string config_hash(const TrainConfig& c) {
    std::string canon = "lambda=" + format_number(c.lambda) + ";G=" + std::to_string(c.group_size) +
                        ";beta=" + format_number(c.beta) + ";lr=" + format_number(c.learning_rate) +
                        ";iters=" + std::to_string(c.iterations) +
                        ";clip=" + (c.clip_epsilon ? format_number(*c.clip_epsilon) : std::string("none")) +
                        ";seed=" + std::to_string(c.seed) + ";S=" + std::to_string(c.sessions_per_iteration) +
                        ";k=" + std::to_string(c.facet_count) + ";tasks=" + std::to_string(static_cast<int>(c.tasks));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {
constexpr const char* kCheckpointMagic = "genfacet-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string numbers(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += format_number(v[i]);
    }
    return out;
}

std::vector<double> parse_numbers(std::istringstream& in, std::size_t line) {
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size()) throw ParseError(line, "bad number '" + tok + "'");
        out.push_back(v);
    }
    return out;
}
}  // namespace

std::string checkpoint_to_text(const Checkpoint& c) {
    std::string out = std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
    out += "config_hash " + (c.config_hash.empty() ? std::string("-") : c.config_hash) + "\n";
    out += "facet_temperature " + format_number(c.params.facet.temperature) + "\n";
    out += "facet_weights " + numbers(c.params.facet.weights) + "\n";
    out += "rewrite_temperature " + format_number(c.params.rewrite.temperature) + "\n";
    out += "rewrite_weights " + numbers(c.params.rewrite.weights) + "\n";
    out += "ctr_weights " + numbers(c.ctr.weights) + "\n";
    return out;
}

Checkpoint checkpoint_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    Checkpoint c;
    std::map<std::string, std::vector<double>> fields;
    std::size_t n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (!header) {
            int version = 0;
            if (key != kCheckpointMagic || !(ls >> version)) throw ParseError(n, "not a checkpoint file");
            if (version != kCheckpointVersion) throw ParseError(n, "unsupported checkpoint version");
            header = true;
            continue;
        }
        if (key == "config_hash") {
            ls >> c.config_hash;
            if (c.config_hash == "-") c.config_hash.clear();
            continue;
        }
        fields[key] = parse_numbers(ls, n);
    }
    if (!header) throw ParseError(1, "empty checkpoint");
    auto need = [&](const char* k) -> const std::vector<double>& {
        auto it = fields.find(k);
        if (it == fields.end()) throw ParseError(n, std::string("checkpoint lacks ") + k);
        return it->second;
    };
    auto scalar = [&](const char* k) {
        const auto& v = need(k);
        if (v.size() != 1) throw ParseError(n, std::string(k) + " must be a single number");
        return v[0];
    };
    c.params.facet = {need("facet_weights"), scalar("facet_temperature")};
    c.params.rewrite = {need("rewrite_weights"), scalar("rewrite_temperature")};
    c.ctr.weights = need("ctr_weights");
    c.params.facet.validate();
    c.params.rewrite.validate();
    if (c.params.facet.weights.size() != kFacetFeatureDim || c.params.rewrite.weights.size() != kRewriteFeatureDim ||
        c.ctr.weights.size() != kFacetFeatureDim)
        throw ParseError(n, "checkpoint dimensions do not match the feature layout");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    write_text_file(path, checkpoint_to_text(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_text(read_text_file(path)); }

}  // namespace genfacet
