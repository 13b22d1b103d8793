#include "genfacet/llm_client.hpp"

#include <httplib.h>
#include <json.hpp>

namespace genfacet {

HttpChatClient::HttpChatClient(LlmEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    const std::string& url = endpoint_.url;
    const std::string http = "http://";
    if (url.rfind(http, 0) != 0)
        throw std::invalid_argument("LLM endpoint must be an http:// URL (TLS is not compiled in): " + url);
    auto slash = url.find('/', http.size());
    scheme_host_port_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

std::string HttpChatClient::complete(const std::string& prompt) {
    httplib::Client cli(scheme_host_port_);
    const auto secs = endpoint_.timeout.count() / 1000;
    const auto usecs = (endpoint_.timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    if (!endpoint_.api_key.empty()) cli.set_bearer_token_auth(endpoint_.api_key);

    nlohmann::json req = {{"model", endpoint_.model},
                          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                          {"temperature", 0}};
    auto res = cli.Post(path_, req.dump(), "application/json");
    if (!res) throw LlmTransportError("LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw LlmTransportError("LLM endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded()) throw LlmTransportError("LLM response is not JSON");
    try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw LlmTransportError("LLM response lacks choices[0].message.content");
    }
}

}  // namespace genfacet
