#ifndef SIFOTL_PROVIDER_HTTP_HPP
#define SIFOTL_PROVIDER_HTTP_HPP

// Chat-completions provider over HTTP(S). Needs cpp-httplib on the include
// path; https additionally needs CPPHTTPLIB_OPENSSL_SUPPORT and OpenSSL.

#include <sifotl/provider.hpp>

#include <httplib.h>

#include <cstdlib>
#include <string>

namespace sifotl {

struct HttpProviderConfig {
    std::string endpoint; ///< full URL, e.g. https://host/v1/chat/completions
    std::string model;
    std::string api_key;
    int timeout_seconds = 60;

    /// SIFOTL_LLM_ENDPOINT, SIFOTL_LLM_MODEL, SIFOTL_LLM_API_KEY.
    static HttpProviderConfig from_env() {
        auto get = [](const char* name) {
            const char* v = std::getenv(name);
            return v ? std::string(v) : std::string();
        };
        HttpProviderConfig c{get("SIFOTL_LLM_ENDPOINT"), get("SIFOTL_LLM_MODEL"), get("SIFOTL_LLM_API_KEY")};
        if (c.endpoint.empty() || c.model.empty())
            throw ValidationError("live provider needs SIFOTL_LLM_ENDPOINT and SIFOTL_LLM_MODEL in the environment");
        return c;
    }
};

class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
        const auto scheme_end = cfg_.endpoint.find("://");
        if (scheme_end == std::string::npos) throw ValidationError("provider endpoint must be an absolute URL");
        const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
        base_ = cfg_.endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
    }

    std::string complete(const std::string& prompt) override {
        httplib::Client cli(base_);
        cli.set_connection_timeout(cfg_.timeout_seconds, 0);
        cli.set_read_timeout(cfg_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
        const nlohmann::json body{{"model", cfg_.model},
                                  {"temperature", 0},
                                  {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
        auto res = cli.Post(path_, headers, body.dump(), "application/json");
        if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500) throw TransportError("HTTP " + std::to_string(res->status));
        if (res->status != 200) throw ProviderError("HTTP " + std::to_string(res->status) + ": " + res->body);
        auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw ProviderError("provider returned a non-JSON body");
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ProviderError("provider response has no choices[0].message.content");
        }
    }

    std::string model_id() const override { return cfg_.model; }

private:
    HttpProviderConfig cfg_;
    std::string base_;
    std::string path_;
};

} // namespace sifotl

#endif // SIFOTL_PROVIDER_HTTP_HPP
