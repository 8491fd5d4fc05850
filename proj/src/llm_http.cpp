// SPDX-License-Identifier: Apache-2.0
#include "capy/llm.hpp"

#include "capy/text.hpp"

#include <httplib.h>

#include <cstdlib>

namespace capy::llm
{

namespace
{

struct SplitUrl
{
    std::string origin; // scheme://host[:port]
    std::string path;   // prefix without trailing slash
};

SplitUrl split_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    SplitUrl out;
    if (path_start == std::string::npos)
    {
        out.origin = url;
    }
    else
    {
        out.origin = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    while (!out.path.empty() && out.path.back() == '/')
        out.path.pop_back();
    return out;
}

std::string env_or(const char* name, const char* fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

} // namespace

HttpChatProvider::HttpChatProvider(ProviderKind kind, HttpEndpoint endpoint): _kind(kind), _endpoint(std::move(endpoint))
{
}

std::shared_ptr<HttpChatProvider> HttpChatProvider::from_environment(ProviderKind kind)
{
    HttpEndpoint ep;
    if (kind == ProviderKind::anthropic_compatible)
    {
        ep.base_url = env_or("CAPY_ANTHROPIC_BASE", "https://api.anthropic.com/v1");
        ep.api_key = env_or("CAPY_ANTHROPIC_KEY", "");
    }
    else
    {
        ep.base_url = env_or("CAPY_OPENAI_BASE", "https://api.openai.com/v1");
        ep.api_key = env_or("CAPY_OPENAI_KEY", "");
    }
    return std::make_shared<HttpChatProvider>(kind, std::move(ep));
}

json HttpChatProvider::request_body(const ModelRef& model, std::span<const ChatMessage> messages) const
{
    if (_kind == ProviderKind::anthropic_compatible)
    {
        // Leading system messages form the system prompt; later ones are
        // passed as user turns because the API only accepts one system field.
        std::string system;
        json msgs = json::array();
        bool leading = true;
        for (const auto& m: messages)
        {
            if (m.role == Role::system && leading)
            {
                if (!system.empty())
                    system += "\n\n";
                system += m.content;
                continue;
            }
            leading = false;
            json content = json::array();
            for (const auto& a: m.attachments)
                content.push_back({{"type", "image"},
                                   {"source",
                                    {{"type", "base64"},
                                     {"media_type", a.mime_type},
                                     {"data", text::base64_encode(a.bytes)}}}});
            auto body = m.role == Role::system ? "[system]\n" + m.content : m.content;
            content.push_back({{"type", "text"}, {"text", body}});
            msgs.push_back({{"role", m.role == Role::assistant ? "assistant" : "user"}, {"content", content}});
        }
        json req{{"model", model.model_name}, {"max_tokens", 4096}, {"messages", msgs}};
        if (!system.empty())
            req["system"] = system;
        return req;
    }

    json msgs = json::array();
    for (const auto& m: messages)
    {
        if (m.attachments.empty())
        {
            msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
            continue;
        }
        json parts = json::array({{{"type", "text"}, {"text", m.content}}});
        for (const auto& a: m.attachments)
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:" + a.mime_type + ";base64," + text::base64_encode(a.bytes)}}}});
        msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", parts}});
    }
    return json{{"model", model.model_name}, {"messages", msgs}};
}

std::string HttpChatProvider::reply_text(const json& body) const
{
    try
    {
        if (_kind == ProviderKind::anthropic_compatible)
        {
            std::string out;
            for (const auto& block: body.at("content"))
                if (block.value("type", "") == "text")
                    out += block.at("text").get<std::string>();
            return out;
        }
        const auto& content = body.at("choices").at(0).at("message").at("content");
        if (content.is_string())
            return content.get<std::string>();
        std::string out;
        for (const auto& part: content)
            if (part.value("type", "") == "text")
                out += part.at("text").get<std::string>();
        return out;
    }
    catch (const json::exception& e)
    {
        throw ProviderError(std::string("unexpected response shape: ") + e.what());
    }
}

std::string HttpChatProvider::complete(const ModelRef& model, std::span<const ChatMessage> messages)
{
    auto url = split_url(_endpoint.base_url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(_endpoint.timeout);
    client.set_write_timeout(std::chrono::seconds(60));

    httplib::Headers headers;
    std::string path;
    if (_kind == ProviderKind::anthropic_compatible)
    {
        headers.emplace("x-api-key", _endpoint.api_key);
        headers.emplace("anthropic-version", "2023-06-01");
        path = url.path + "/messages";
    }
    else
    {
        if (!_endpoint.api_key.empty())
            headers.emplace("Authorization", "Bearer " + _endpoint.api_key);
        path = url.path + "/chat/completions";
    }

    auto body = request_body(model, messages).dump(-1, ' ', false, json::error_handler_t::replace);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res)
        throw TransportError("request to " + url.origin + path + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + url.origin);
    if (res->status < 200 || res->status >= 300)
        throw ProviderError("HTTP " + std::to_string(res->status) + ": " +
                            std::string(text::utf8_prefix(res->body, 500)));

    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded())
        throw ProviderError("response body is not JSON");
    return reply_text(parsed);
}

} // namespace capy::llm
