// SPDX-License-Identifier: Apache-2.0
#include "capy/llm.hpp"

namespace capy::llm
{

namespace
{

// Index one past the '}' that closes the object opening at `open`, or npos.
std::size_t balanced_end(std::string_view s, std::size_t open)
{
    int depth = 0;
    bool in_str = false;
    bool esc = false;
    for (std::size_t i = open; i < s.size(); ++i)
    {
        char c = s[i];
        if (in_str)
        {
            if (esc)
                esc = false;
            else if (c == '\\')
                esc = true;
            else if (c == '"')
                in_str = false;
            continue;
        }
        if (c == '"')
            in_str = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return i + 1;
    }
    return std::string_view::npos;
}

// Models often emit literal newlines/tabs inside JSON strings.
std::string escape_raw_controls(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    bool in_str = false;
    bool esc = false;
    for (char c: s)
    {
        if (in_str)
        {
            if (esc)
            {
                esc = false;
                out += c;
                continue;
            }
            if (c == '\\')
                esc = true;
            else if (c == '"')
                in_str = false;
            else if (c == '\n')
            {
                out += "\\n";
                continue;
            }
            else if (c == '\r')
            {
                out += "\\r";
                continue;
            }
            else if (c == '\t')
            {
                out += "\\t";
                continue;
            }
        }
        else if (c == '"')
        {
            in_str = true;
        }
        out += c;
    }
    return out;
}

std::optional<json> try_parse(std::string_view candidate)
{
    auto parsed = json::parse(candidate, nullptr, false);
    if (!parsed.is_discarded())
        return parsed;
    parsed = json::parse(escape_raw_controls(candidate), nullptr, false);
    if (!parsed.is_discarded())
        return parsed;
    return std::nullopt;
}

constexpr std::size_t kMaxCandidates = 256;

} // namespace

Extraction extract_json_object(std::string_view raw, const JsonCheck& check)
{
    std::string last_rejection;
    std::size_t tried = 0;
    for (auto open = raw.find('{'); open != std::string_view::npos && tried < kMaxCandidates;
         open = raw.find('{', open + 1))
    {
        auto end = balanced_end(raw, open);
        if (end == std::string_view::npos)
            continue;
        ++tried;
        auto parsed = try_parse(raw.substr(open, end - open));
        if (!parsed || !parsed->is_object())
            continue;
        if (auto why = check(*parsed); why)
            last_rejection = *why;
        else
            return {std::move(parsed), {}};
    }
    if (tried == 0)
        return {std::nullopt, "no JSON object found in reply"};
    if (last_rejection.empty())
        return {std::nullopt, "reply contains no parseable JSON object"};
    return {std::nullopt, last_rejection};
}

std::optional<std::string> check_envelope(const json& j)
{
    if (!j.is_object())
        return "envelope must be a JSON object";
    if (!j.contains("type") || !j["type"].is_string())
        return "envelope needs a string field \"type\"";
    auto type = j["type"].get<std::string>();
    if (!parse_cell_kind(type))
        return "envelope \"type\" must be \"code\" or \"markdown\", got \"" + type + "\"";
    if (!j.contains("content") || !j["content"].is_string())
        return "envelope needs a string field \"content\"";
    if (j["content"].get<std::string>().empty())
        return "envelope \"content\" must not be empty";
    if (j.contains("done") && !j["done"].is_boolean())
        return "envelope \"done\" must be a boolean";
    return std::nullopt;
}

AgentEnvelope envelope_from_json(const json& j)
{
    if (auto why = check_envelope(j))
        throw EnvelopeParseError(*why);
    AgentEnvelope e;
    e.cell_kind = *parse_cell_kind(j["type"].get<std::string>());
    e.content = j["content"].get<std::string>();
    e.done = j.value("done", false);
    return e;
}

json envelope_to_json(const AgentEnvelope& e)
{
    return json{{"type", std::string(to_string(e.cell_kind))}, {"content", e.content}, {"done", e.done}};
}

AgentEnvelope parse_envelope(std::string_view raw)
{
    auto found = extract_json_object(raw, check_envelope);
    if (!found.value)
        throw EnvelopeParseError(found.error);
    return envelope_from_json(*found.value);
}

std::string serialize_envelope(const AgentEnvelope& e)
{
    return envelope_to_json(e).dump(-1, ' ', false, json::error_handler_t::replace);
}

} // namespace capy::llm
