// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/errors.hpp"
#include "capy/notebook.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capy::llm
{

enum class Role
{
    system,
    user,
    assistant
};

std::string_view to_string(Role r);

struct Attachment
{
    std::string mime_type;
    std::string bytes;
};

struct ChatMessage
{
    Role role = Role::user;
    std::string content;
    std::vector<Attachment> attachments;

    static ChatMessage system(std::string text) { return {Role::system, std::move(text), {}}; }
    static ChatMessage user(std::string text) { return {Role::user, std::move(text), {}}; }
    static ChatMessage assistant(std::string text) { return {Role::assistant, std::move(text), {}}; }
};

enum class ProviderKind
{
    openai_compatible,
    anthropic_compatible,
    scripted
};

std::string_view to_string(ProviderKind k);
std::optional<ProviderKind> parse_provider_kind(std::string_view s);

struct ModelRef
{
    ProviderKind provider = ProviderKind::openai_compatible;
    std::string model_name;
    /// Scripted provider only: transcript file path, or a key registered
    /// with Gateway::register_script.
    std::string transcript;

    friend bool operator==(const ModelRef&, const ModelRef&) = default;
};

json to_json(const ModelRef& m);
/// Throws ValidationError on unknown provider or a scripted ref without transcript.
ModelRef model_ref_from_json(const json& j);

// ---------------------------------------------------------------------------
// Structured replies

struct AgentEnvelope
{
    CellKind cell_kind = CellKind::markdown;
    std::string content;
    bool done = false;

    friend bool operator==(const AgentEnvelope&, const AgentEnvelope&) = default;
};

inline constexpr std::string_view kEnvelopeSchema =
    R"({"type": "code" | "markdown", "content": "<nonempty cell source>", "done": true | false})";

/// Validates one JSON value against an expected shape. Returns an error
/// description, or nullopt when the value is acceptable.
using JsonCheck = std::function<std::optional<std::string>(const json&)>;

/// Finds the first JSON object in free-form model text (prose, code fences,
/// unescaped newlines inside strings are tolerated) that passes `check`.
/// Returns the object, or the reason nothing matched.
struct Extraction
{
    std::optional<json> value;
    std::string error;
};
Extraction extract_json_object(std::string_view raw, const JsonCheck& check);

std::optional<std::string> check_envelope(const json& j);
AgentEnvelope envelope_from_json(const json& j);
json envelope_to_json(const AgentEnvelope& e);

/// Throws EnvelopeParseError when no envelope can be recovered.
AgentEnvelope parse_envelope(std::string_view raw);

/// Canonical wire form: {"content":...,"done":...,"type":...}.
std::string serialize_envelope(const AgentEnvelope& e);

// ---------------------------------------------------------------------------
// Providers

class ChatProvider
{
public:
    virtual ~ChatProvider() = default;

    /// Raw reply text. Throws TransportError (retryable) or ProviderError.
    virtual std::string complete(const ModelRef& model, std::span<const ChatMessage> messages) = 0;

    /// False when calls must be issued one at a time in a fixed order.
    [[nodiscard]] virtual bool concurrent_safe() const { return true; }
};

struct ScriptEntry
{
    std::optional<std::string> expect_substring;
    std::string reply;
    /// Extension: sleep this long before replying (progress/latency tests).
    int delay_ms = 0;
    /// Extension: "transport" or "provider" makes the entry fail instead.
    std::optional<std::string> fail;
};

/// Deterministic provider replaying an ordered transcript. Each call consumes
/// one entry; when the entry carries `expect_substring`, the outgoing prompt
/// must contain it or the call fails with StubExpectationFailed.
class ScriptedProvider: public ChatProvider
{
public:
    explicit ScriptedProvider(std::vector<ScriptEntry> entries);

    /// Transcript file: JSON array of {expect_substring?, reply, delay_ms?, fail?}.
    static std::shared_ptr<ScriptedProvider> load(const std::string& path);
    static std::vector<ScriptEntry> parse_transcript(const json& j);

    std::string complete(const ModelRef& model, std::span<const ChatMessage> messages) override;
    [[nodiscard]] bool concurrent_safe() const override { return false; }

    [[nodiscard]] std::size_t consumed() const;
    [[nodiscard]] std::size_t remaining() const;
    /// Every prompt sent so far, flattened to text, in call order.
    [[nodiscard]] std::vector<std::string> prompts() const;

private:
    mutable std::mutex _mutex;
    std::vector<ScriptEntry> _entries;
    std::size_t _next = 0;
    std::vector<std::string> _prompts;
};

struct HttpEndpoint
{
    std::string base_url;
    std::string api_key;
    std::chrono::seconds timeout{300};
};

/// Chat-completion client for OpenAI- or Anthropic-compatible HTTP APIs.
class HttpChatProvider: public ChatProvider
{
public:
    HttpChatProvider(ProviderKind kind, HttpEndpoint endpoint);

    /// Endpoint from CAPY_OPENAI_BASE/KEY or CAPY_ANTHROPIC_BASE/KEY.
    static std::shared_ptr<HttpChatProvider> from_environment(ProviderKind kind);

    std::string complete(const ModelRef& model, std::span<const ChatMessage> messages) override;

    /// Request body for the configured API dialect; exposed for tests.
    [[nodiscard]] json request_body(const ModelRef& model, std::span<const ChatMessage> messages) const;
    /// Extracts the reply text from a response body. Throws ProviderError.
    [[nodiscard]] std::string reply_text(const json& body) const;

private:
    ProviderKind _kind;
    HttpEndpoint _endpoint;
};

/// Flattens messages into the text a stub matches `expect_substring` against.
std::string flatten_prompt(std::span<const ChatMessage> messages);

// ---------------------------------------------------------------------------
// Gateway

struct CallRecord
{
    std::size_t seq = 0;
    std::string role_tag;
    std::string model;
    double wall_ms = 0;
};

/// Append-only log of successful completions.
class CallLedger
{
public:
    void record(CallRecord r);
    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] std::size_t count_for(std::string_view role_tag) const;
    [[nodiscard]] std::vector<CallRecord> records() const;

private:
    mutable std::mutex _mutex;
    std::vector<CallRecord> _records;
};

struct RetryPolicy
{
    int max_retries = 2;
    std::chrono::milliseconds base_backoff{250};
};

class Gateway
{
public:
    explicit Gateway(RetryPolicy retry = {});

    /// Replaces the provider used for every ModelRef of `kind`.
    void set_provider(ProviderKind kind, std::shared_ptr<ChatProvider> provider);

    /// Makes scripted refs whose transcript equals `key` use `provider`.
    void register_script(std::string key, std::shared_ptr<ScriptedProvider> provider);

    /// One completion with transport retries; records the call on success.
    std::string complete(const ModelRef& model, std::span<const ChatMessage> messages, std::string_view role_tag = {});

    [[nodiscard]] bool concurrent_safe(const ModelRef& model);

    [[nodiscard]] CallLedger& ledger() noexcept { return _ledger; }
    [[nodiscard]] const CallLedger& ledger() const noexcept { return _ledger; }

    /// complete + parse; on a parse failure issues exactly one repair re-ask
    /// (the bad reply plus a corrective system message restating `schema`)
    /// and parses again. The parser signals failure by throwing capy::Error;
    /// the second failure propagates.
    template <typename T>
    T request_structured(const ModelRef& model, std::vector<ChatMessage> messages, std::string_view role_tag,
                         const std::function<T(std::string_view)>& parse, std::string_view schema)
    {
        auto raw = complete(model, messages, role_tag);
        try
        {
            return parse(raw);
        }
        catch (const Error& first)
        {
            messages.push_back(ChatMessage::assistant(raw));
            messages.push_back(repair_message(first.what(), schema));
            auto second = complete(model, messages, role_tag);
            return parse(second);
        }
    }

    /// request_structured specialised for cell envelopes.
    AgentEnvelope request_envelope(const ModelRef& model, std::vector<ChatMessage> messages,
                                   std::string_view role_tag = "initial_respondent");

    static ChatMessage repair_message(std::string_view error, std::string_view schema);

private:
    std::shared_ptr<ChatProvider> provider_for(const ModelRef& model);

    RetryPolicy _retry;
    CallLedger _ledger;
    std::mutex _mutex;
    std::map<ProviderKind, std::shared_ptr<ChatProvider>> _providers;
    std::map<std::string, std::shared_ptr<ScriptedProvider>> _scripts;
};

} // namespace capy::llm
