#include "genfacet/config.hpp"

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "genfacet/text.hpp"

namespace genfacet {

namespace {

using nlohmann::json;

/// Reads the keys of one object, remembering which were consumed.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
    }
    ~Section() = default;

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name_ + "." + key + " has the wrong type");
        }
    }
    void get_path(const char* key, std::filesystem::path& out) {
        std::string s = out.string();
        get(key, s);
        out = s;
    }
    std::optional<Section> sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return std::nullopt;
        return Section(*it, name_.empty() ? key : name_ + "." + key);
    }
    bool has(const char* key) const { return j_.contains(key); }
    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key " + (name_.empty() ? k : name_ + "." + k));
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void read_reward(Section s, RewardConfig& r) {
    s.get("alpha", r.alpha);
    s.get("w_recall", r.w_recall);
    s.get("w_sem", r.w_sem);
    s.get("k_eval", r.k_eval);
    s.finish();
}

void read_sft(Section s, SftConfig& c) {
    s.get("lambda", c.lambda);
    s.get("learning_rate", c.learning_rate);
    s.get("iterations", c.iterations);
    s.finish();
}

void read_train(Section s, TrainConfig& c) {
    s.get("lambda", c.lambda);
    s.get("group_size", c.group_size);
    s.get("beta", c.beta);
    s.get("learning_rate", c.learning_rate);
    s.get("iterations", c.iterations);
    double clip = c.clip_epsilon.value_or(0.0);
    s.get("clip_epsilon", clip);
    c.clip_epsilon = clip > 0.0 ? std::optional<double>(clip) : std::nullopt;
    s.get("seed", c.seed);
    s.get("sessions_per_iteration", c.sessions_per_iteration);
    s.get("facet_count", c.facet_count);
    s.finish();
}

void read_sim(Section s, SimulatorConfig& c) {
    s.get("p_match", c.click.p_match);
    s.get("gamma", c.click.gamma);
    s.get("p_noise", c.click.p_noise);
    s.get("max_turns", c.max_turns);
    s.get("conversion_depth", c.conversion_depth);
    s.get("facet_count", c.facet_count);
    s.get("result_depth", c.result_depth);
    s.get("stop_on_conversion", c.stop_on_conversion);
    s.get("trend_boost", c.trend_boost);
    s.finish();
}

void validate(const AppConfig& c) {
    try {
        c.reward.validate();
        c.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.sft.iterations > 0 && !(c.sft.learning_rate > 0.0)) throw ConfigError("sft.learning_rate must be > 0");
    if (c.sim.click.p_match < 0 || c.sim.click.p_match > 1 || c.sim.click.p_noise < 0 || c.sim.click.p_noise > 1 ||
        c.sim.click.gamma < 0 || c.sim.click.gamma > 1)
        throw ConfigError("click probabilities must lie in [0,1]");
    if (c.service.result_depth == 0 || c.service.result_depth > 100)
        throw ConfigError("service.result_depth must be in [1,100]");
    if (c.service.facet_count == 0) throw ConfigError("service.facet_count must be >= 1");
    if (!(c.service.cache_ttl_seconds > 0)) throw ConfigError("service.cache_ttl_seconds must be > 0");
    if (c.service.port < 0 || c.service.port > 65535) throw ConfigError("service.port out of range");
}

}  // namespace

AppConfig config_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    AppConfig c;
    Section top(root, "");
    top.get("threads", c.threads);
    if (auto s = top.sub("paths")) {
        s->get_path("catalog", c.paths.catalog);
        s->get_path("kg", c.paths.kg);
        s->get_path("trends", c.paths.trends);
        s->get_path("index", c.paths.index);
        s->get_path("distill", c.paths.distill);
        s->get_path("params", c.paths.params);
        s->finish();
    }
    if (auto s = top.sub("catalog")) {
        s->get("products", c.catalog.num_products);
        s->get("categories", c.catalog.num_categories);
        s->get("attrs_min", c.catalog.attrs_min);
        s->get("attrs_max", c.catalog.attrs_max);
        s->get("values_min", c.catalog.values_min);
        s->get("values_max", c.catalog.values_max);
        s->get("seed", c.catalog.seed);
        s->finish();
    }
    if (auto s = top.sub("reward")) read_reward(*s, c.reward);
    if (auto s = top.sub("sft")) read_sft(*s, c.sft);
    if (auto s = top.sub("train")) read_train(*s, c.train);
    if (auto s = top.sub("simulator")) read_sim(*s, c.sim);
    if (auto s = top.sub("experiment")) {
        s->get("benchmark_sessions", c.experiment.benchmark_sessions);
        s->get("flywheel_sessions", c.experiment.flywheel_sessions);
        s->get("distill_records", c.experiment.distill_records);
        s->get("reward_eval_sessions", c.experiment.reward_eval_sessions);
        s->finish();
    }
    if (auto s = top.sub("service")) {
        s->get("host", c.service.host);
        s->get("port", c.service.port);
        s->get("cache_ttl_seconds", c.service.cache_ttl_seconds);
        s->get("cache_capacity", c.service.cache_capacity);
        s->get("session_idle_seconds", c.service.session_idle_seconds);
        s->get("facet_count", c.service.facet_count);
        s->get("result_depth", c.service.result_depth);
        long long ms = c.service.provider_deadline.count();
        s->get("provider_deadline_ms", ms);
        c.service.provider_deadline = std::chrono::milliseconds(ms);
        s->finish();
    }
    if (auto s = top.sub("llm")) {
        LlmEndpoint e;
        s->get("url", e.url);
        s->get("model", e.model);
        std::string key_env;
        s->get("api_key_env", key_env);
        if (!key_env.empty())
            if (const char* v = std::getenv(key_env.c_str())) e.api_key = v;
        long long ms = e.timeout.count();
        s->get("timeout_ms", ms);
        e.timeout = std::chrono::milliseconds(ms);
        s->finish();
        if (e.url.empty()) throw ConfigError("llm.url is required when llm is configured");
        c.llm = e;
    }
    top.finish();
    c.experiment.catalog = c.catalog;
    c.experiment.sft = c.sft;
    c.experiment.train = c.train;
    c.experiment.sim = c.sim;
    c.experiment.reward = c.reward;
    c.experiment.threads = c.threads;
    validate(c);
    return c;
}

std::string config_to_json(const AppConfig& c) {
    nlohmann::ordered_json j;
    j["threads"] = c.threads;
    j["paths"] = {{"catalog", c.paths.catalog.string()}, {"kg", c.paths.kg.string()},
                  {"trends", c.paths.trends.string()},   {"index", c.paths.index.string()},
                  {"distill", c.paths.distill.string()}, {"params", c.paths.params.string()}};
    j["catalog"] = {{"products", c.catalog.num_products},     {"categories", c.catalog.num_categories},
                    {"attrs_min", c.catalog.attrs_min},       {"attrs_max", c.catalog.attrs_max},
                    {"values_min", c.catalog.values_min},     {"values_max", c.catalog.values_max},
                    {"seed", c.catalog.seed}};
    j["reward"] = {{"alpha", c.reward.alpha}, {"w_recall", c.reward.w_recall}, {"w_sem", c.reward.w_sem},
                   {"k_eval", c.reward.k_eval}};
    j["sft"] = {{"lambda", c.sft.lambda}, {"learning_rate", c.sft.learning_rate}, {"iterations", c.sft.iterations}};
    j["train"] = {{"lambda", c.train.lambda},
                  {"group_size", c.train.group_size},
                  {"beta", c.train.beta},
                  {"learning_rate", c.train.learning_rate},
                  {"iterations", c.train.iterations},
                  {"clip_epsilon", c.train.clip_epsilon.value_or(0.0)},
                  {"seed", c.train.seed},
                  {"sessions_per_iteration", c.train.sessions_per_iteration},
                  {"facet_count", c.train.facet_count}};
    j["simulator"] = {{"p_match", c.sim.click.p_match},
                      {"gamma", c.sim.click.gamma},
                      {"p_noise", c.sim.click.p_noise},
                      {"max_turns", c.sim.max_turns},
                      {"conversion_depth", c.sim.conversion_depth},
                      {"facet_count", c.sim.facet_count},
                      {"result_depth", c.sim.result_depth},
                      {"stop_on_conversion", c.sim.stop_on_conversion},
                      {"trend_boost", c.sim.trend_boost}};
    j["experiment"] = {{"benchmark_sessions", c.experiment.benchmark_sessions},
                       {"flywheel_sessions", c.experiment.flywheel_sessions},
                       {"distill_records", c.experiment.distill_records},
                       {"reward_eval_sessions", c.experiment.reward_eval_sessions}};
    j["service"] = {{"host", c.service.host},
                    {"port", c.service.port},
                    {"cache_ttl_seconds", c.service.cache_ttl_seconds},
                    {"cache_capacity", c.service.cache_capacity},
                    {"session_idle_seconds", c.service.session_idle_seconds},
                    {"facet_count", c.service.facet_count},
                    {"result_depth", c.service.result_depth},
                    {"provider_deadline_ms", c.service.provider_deadline.count()}};
    if (c.llm)
        j["llm"] = {{"url", c.llm->url}, {"model", c.llm->model}, {"timeout_ms", c.llm->timeout.count()}};
    return j.dump(2) + "\n";
}

AppConfig load_config(const std::optional<std::filesystem::path>& explicit_path) {
    std::optional<std::filesystem::path> path = explicit_path;
    if (!path)
        if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = std::filesystem::path(env);
    if (!path) return config_from_json("{}");
    std::string text;
    try {
        text = read_text_file(*path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot read config " + path->string() + ": " + e.what());
    }
    return config_from_json(text);
}

}  // namespace genfacet
