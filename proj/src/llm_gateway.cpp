// SPDX-License-Identifier: Apache-2.0
#include "capy/llm.hpp"

#include "capy/prompts.hpp"

#include <fstream>
#include <sstream>
#include <thread>

namespace capy::llm
{

std::string_view to_string(Role r)
{
    switch (r)
    {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(ProviderKind k)
{
    switch (k)
    {
        case ProviderKind::openai_compatible: return "openai_compatible";
        case ProviderKind::anthropic_compatible: return "anthropic_compatible";
        case ProviderKind::scripted: return "scripted";
    }
    return "scripted";
}

std::optional<ProviderKind> parse_provider_kind(std::string_view s)
{
    if (s == "openai_compatible" || s == "openai")
        return ProviderKind::openai_compatible;
    if (s == "anthropic_compatible" || s == "anthropic")
        return ProviderKind::anthropic_compatible;
    if (s == "scripted")
        return ProviderKind::scripted;
    return std::nullopt;
}

json to_json(const ModelRef& m)
{
    json j{{"provider", std::string(to_string(m.provider))}, {"model", m.model_name}};
    if (!m.transcript.empty())
        j["transcript"] = m.transcript;
    return j;
}

ModelRef model_ref_from_json(const json& j)
{
    if (!j.is_object())
        throw ValidationError("model reference must be an object");
    ModelRef m;
    auto provider = j.value("provider", std::string("openai_compatible"));
    auto kind = parse_provider_kind(provider);
    if (!kind)
        throw ValidationError("unknown provider '" + provider + "'");
    m.provider = *kind;
    m.model_name = j.value("model", std::string());
    m.transcript = j.value("transcript", std::string());
    if (m.provider == ProviderKind::scripted && m.transcript.empty())
        throw ValidationError("scripted provider requires a transcript");
    if (m.provider != ProviderKind::scripted && m.model_name.empty())
        throw ValidationError("model reference needs a model name");
    return m;
}

std::string flatten_prompt(std::span<const ChatMessage> messages)
{
    std::string out;
    for (const auto& m: messages)
    {
        out += "[";
        out += to_string(m.role);
        out += "]\n";
        out += m.content;
        out += "\n";
        for (const auto& a: m.attachments)
            out += "[attachment " + a.mime_type + ", " + std::to_string(a.bytes.size()) + " bytes]\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

ScriptedProvider::ScriptedProvider(std::vector<ScriptEntry> entries): _entries(std::move(entries))
{
}

std::vector<ScriptEntry> ScriptedProvider::parse_transcript(const json& j)
{
    if (!j.is_array())
        throw ValidationError("transcript must be a JSON array");
    std::vector<ScriptEntry> entries;
    for (const auto& e: j)
    {
        if (!e.is_object() || !e.contains("reply") || !e["reply"].is_string())
            throw ValidationError("transcript entries need a string 'reply'");
        ScriptEntry entry;
        entry.reply = e["reply"].get<std::string>();
        if (e.contains("expect_substring") && !e["expect_substring"].is_null())
            entry.expect_substring = e["expect_substring"].get<std::string>();
        entry.delay_ms = e.value("delay_ms", 0);
        if (e.contains("fail") && e["fail"].is_string())
            entry.fail = e["fail"].get<std::string>();
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open transcript " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded())
        throw ValidationError("transcript " + path + " is not valid JSON");
    return std::make_shared<ScriptedProvider>(parse_transcript(j));
}

std::string ScriptedProvider::complete(const ModelRef&, std::span<const ChatMessage> messages)
{
    ScriptEntry entry;
    auto prompt = flatten_prompt(messages);
    {
        std::lock_guard lock(_mutex);
        _prompts.push_back(prompt);
        if (_next >= _entries.size())
            throw StubExhausted("scripted transcript exhausted after " + std::to_string(_entries.size()) + " replies");
        entry = _entries[_next++];
    }
    if (entry.delay_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(entry.delay_ms));
    if (entry.fail == "transport")
        throw TransportError("scripted transport failure");
    if (entry.fail == "provider")
        throw ProviderError("scripted provider failure");
    if (entry.expect_substring && prompt.find(*entry.expect_substring) == std::string::npos)
        throw StubExpectationFailed("outgoing prompt does not contain expected substring: \"" +
                                    *entry.expect_substring + "\"");
    return entry.reply;
}

std::size_t ScriptedProvider::consumed() const
{
    std::lock_guard lock(_mutex);
    return _next;
}

std::size_t ScriptedProvider::remaining() const
{
    std::lock_guard lock(_mutex);
    return _entries.size() - _next;
}

std::vector<std::string> ScriptedProvider::prompts() const
{
    std::lock_guard lock(_mutex);
    return _prompts;
}

// ---------------------------------------------------------------------------

void CallLedger::record(CallRecord r)
{
    std::lock_guard lock(_mutex);
    r.seq = _records.size();
    _records.push_back(std::move(r));
}

std::size_t CallLedger::count() const
{
    std::lock_guard lock(_mutex);
    return _records.size();
}

std::size_t CallLedger::count_for(std::string_view role_tag) const
{
    std::lock_guard lock(_mutex);
    std::size_t n = 0;
    for (const auto& r: _records)
        n += r.role_tag == role_tag;
    return n;
}

std::vector<CallRecord> CallLedger::records() const
{
    std::lock_guard lock(_mutex);
    return _records;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(RetryPolicy retry): _retry(retry)
{
}

void Gateway::set_provider(ProviderKind kind, std::shared_ptr<ChatProvider> provider)
{
    std::lock_guard lock(_mutex);
    _providers[kind] = std::move(provider);
}

void Gateway::register_script(std::string key, std::shared_ptr<ScriptedProvider> provider)
{
    std::lock_guard lock(_mutex);
    _scripts[std::move(key)] = std::move(provider);
}

std::shared_ptr<ChatProvider> Gateway::provider_for(const ModelRef& model)
{
    std::lock_guard lock(_mutex);
    if (auto it = _providers.find(model.provider); it != _providers.end())
        return it->second;

    if (model.provider == ProviderKind::scripted)
    {
        if (model.transcript.empty())
            throw ProviderError("scripted model without transcript");
        auto& slot = _scripts[model.transcript];
        if (!slot)
            slot = ScriptedProvider::load(model.transcript);
        return slot;
    }
    auto provider = HttpChatProvider::from_environment(model.provider);
    _providers[model.provider] = provider;
    return provider;
}

bool Gateway::concurrent_safe(const ModelRef& model)
{
    return provider_for(model)->concurrent_safe();
}

std::string Gateway::complete(const ModelRef& model, std::span<const ChatMessage> messages, std::string_view role_tag)
{
    if (messages.empty())
        throw ProviderError("complete() needs at least one message");
    auto provider = provider_for(model);
    for (int attempt = 0;; ++attempt)
    {
        auto start = std::chrono::steady_clock::now();
        try
        {
            auto reply = provider->complete(model, messages);
            auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            _ledger.record({0, std::string(role_tag), model.model_name, ms});
            return reply;
        }
        catch (const StubExhausted&)
        {
            throw;
        }
        catch (const TransportError&)
        {
            if (attempt >= _retry.max_retries)
                throw;
            std::this_thread::sleep_for(_retry.base_backoff * (1 << attempt));
        }
    }
}

ChatMessage Gateway::repair_message(std::string_view error, std::string_view schema)
{
    return ChatMessage::system(prompts::render("json_repair", {{"error", std::string(error)}, {"schema", std::string(schema)}}));
}

AgentEnvelope Gateway::request_envelope(const ModelRef& model, std::vector<ChatMessage> messages,
                                        std::string_view role_tag)
{
    return request_structured<AgentEnvelope>(model, std::move(messages), role_tag, parse_envelope, kEnvelopeSchema);
}

} // namespace capy::llm
