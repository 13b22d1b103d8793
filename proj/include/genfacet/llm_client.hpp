#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace genfacet {

class LlmTransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text-in, text-out completion backend.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

struct LlmEndpoint {
    std::string url;  ///< e.g. http://localhost:8000/v1/chat/completions
    std::string model;
    std::string api_key;  ///< sent as a bearer token when non-empty
    std::chrono::milliseconds timeout{30000};
};

/// Chat-completion client: POSTs {"model", "messages":[{"role":"user","content":prompt}]}
/// and returns choices[0].message.content.
class HttpChatClient final : public LlmClient {
public:
    explicit HttpChatClient(LlmEndpoint endpoint);
    std::string complete(const std::string& prompt) override;

    const LlmEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    LlmEndpoint endpoint_;
    std::string scheme_host_port_;
    std::string path_;
};

}  // namespace genfacet
