// SPDX-License-Identifier: Apache-2.0
#include "capy/critique.hpp"

#include "capy/errors.hpp"
#include "capy/prompts.hpp"
#include "capy/text.hpp"

#include <algorithm>
#include <future>

namespace capy
{

namespace
{

constexpr std::pair<AgentRole, std::string_view> kRoleNames[] = {
    {AgentRole::initial_respondent, "initial_respondent"},
    {AgentRole::refiner, "refiner"},
    {AgentRole::critic_plan, "critic_plan"},
    {AgentRole::critic_code, "critic_code"},
    {AgentRole::critic_visualization, "critic_visualization"},
    {AgentRole::critic_interpretation, "critic_interpretation"},
    {AgentRole::critic_semantic, "critic_semantic"},
    {AgentRole::critic_rhetorical, "critic_rhetorical"},
    {AgentRole::critic_pragmatic, "critic_pragmatic"},
};

std::set<Dimension> dimensions_of(AgentRole r)
{
    switch (r)
    {
        case AgentRole::initial_respondent:
        case AgentRole::refiner:
        case AgentRole::critic_interpretation:
            return {Dimension::semantic, Dimension::rhetorical, Dimension::pragmatic};
        case AgentRole::critic_plan: return {Dimension::rhetorical};
        case AgentRole::critic_code:
        case AgentRole::critic_visualization: return {Dimension::semantic, Dimension::rhetorical};
        case AgentRole::critic_semantic: return {Dimension::semantic};
        case AgentRole::critic_rhetorical: return {Dimension::rhetorical};
        case AgentRole::critic_pragmatic: return {Dimension::pragmatic};
    }
    return {};
}

constexpr std::string_view kCritiqueSchema =
    R"({"summary": "<notebook summary>", "applicable": true | false, "ready": true | false, "items": [{"issue": "...", "suggestion": "..."}]})";

constexpr std::string_view kDecisionShape =
    R"({"accepted": ["<ref>", ...], "rejected": [{"ref": "<ref>", "rationale": "<nonempty>"}], "revised": <response>})";

std::optional<std::string> check_critique_json(const json& j)
{
    if (!j.contains("applicable") || !j["applicable"].is_boolean())
        return "'applicable' must be a boolean";
    if (!j["applicable"].get<bool>())
        return std::nullopt;
    if (!j.contains("ready") || !j["ready"].is_boolean())
        return "'ready' must be a boolean";
    if (j.contains("items") && !j["items"].is_null())
    {
        if (!j["items"].is_array())
            return "'items' must be a list";
        for (const auto& it: j["items"])
            if (!it.is_object() || !it.contains("issue") || !it["issue"].is_string() ||
                text::trim(it["issue"].get<std::string>()).empty())
                return "every item needs a nonempty 'issue'";
    }
    return std::nullopt;
}

std::string render_critiques(const std::vector<Critique>& critiques)
{
    std::string out;
    for (const auto& c: critiques)
    {
        out += "### " + std::string(to_string(c.role));
        if (!c.applicable)
        {
            out += " (not applicable)\n";
            continue;
        }
        out += c.ready ? " (ready)\n" : " (not ready)\n";
        for (std::size_t i = 0; i < c.items.size(); ++i)
        {
            out += "- ref " + item_ref(c.role, i + 1) + ": " + c.items[i].issue;
            if (!c.items[i].suggestion.empty())
                out += " Suggestion: " + c.items[i].suggestion;
            out += "\n";
        }
    }
    return out;
}

std::string render_rationales(const std::vector<std::string>& rationales)
{
    if (rationales.empty())
        return "(none)";
    std::string out;
    for (const auto& r: rationales)
        out += "- " + r + "\n";
    return out;
}

const Critique* critique_for_ref(const std::vector<Critique>& critiques, const std::string& ref,
                                 std::size_t* index = nullptr)
{
    auto hash = ref.rfind('#');
    if (hash == std::string::npos)
        return nullptr;
    auto role = parse_agent_role(std::string_view(ref).substr(0, hash));
    if (!role)
        return nullptr;
    std::size_t n = 0;
    try
    {
        n = std::stoul(ref.substr(hash + 1));
    }
    catch (const std::exception&)
    {
        return nullptr;
    }
    for (const auto& c: critiques)
        if (c.role == *role && c.applicable && n >= 1 && n <= c.items.size())
        {
            if (index)
                *index = n - 1;
            return &c;
        }
    return nullptr;
}

std::optional<CellKind> envelope_kind(const json& j)
{
    if (j.is_object() && j.contains("type") && j["type"].is_string())
        return parse_cell_kind(j["type"].get<std::string>());
    return std::nullopt;
}

} // namespace

std::string_view to_string(AgentRole r)
{
    for (const auto& [role, name]: kRoleNames)
        if (role == r)
            return name;
    return "unknown";
}

std::optional<AgentRole> parse_agent_role(std::string_view s)
{
    for (const auto& [role, name]: kRoleNames)
        if (name == s)
            return role;
    return std::nullopt;
}

bool is_critic(AgentRole r)
{
    return r != AgentRole::initial_respondent && r != AgentRole::refiner;
}

std::string_view to_string(Dimension d)
{
    switch (d)
    {
        case Dimension::semantic: return "semantic";
        case Dimension::rhetorical: return "rhetorical";
        case Dimension::pragmatic: return "pragmatic";
    }
    return "semantic";
}

std::optional<Dimension> parse_dimension(std::string_view s)
{
    for (auto d: kDimensions)
        if (to_string(d) == s)
            return d;
    return std::nullopt;
}

std::string_view to_string(TaskKind t)
{
    return t == TaskKind::eda_turn ? "eda_turn" : "story_draft";
}

std::string_view to_string(Termination t)
{
    switch (t)
    {
        case Termination::all_ready: return "all_ready";
        case Termination::round_cap: return "round_cap";
        case Termination::aborted: return "aborted";
    }
    return "aborted";
}

std::vector<AgentRole> default_roles(TaskKind task)
{
    if (task == TaskKind::eda_turn)
        return {AgentRole::initial_respondent, AgentRole::refiner,     AgentRole::critic_plan,
                AgentRole::critic_code,        AgentRole::critic_visualization, AgentRole::critic_interpretation};
    return {AgentRole::initial_respondent, AgentRole::refiner, AgentRole::critic_semantic, AgentRole::critic_rhetorical,
            AgentRole::critic_pragmatic};
}

const llm::ModelRef& ProtocolConfig::model_for(AgentRole r) const
{
    auto it = models.find(r);
    return it == models.end() ? default_model : it->second;
}

std::map<Dimension, std::set<AgentRole>> coverage_table(const ProtocolConfig& config)
{
    auto allowed = default_roles(config.task);
    std::map<Dimension, std::set<AgentRole>> table;
    for (auto d: kDimensions)
        table[d];
    for (auto role: config.roles)
    {
        if (std::find(allowed.begin(), allowed.end(), role) == allowed.end())
            throw InvalidConfig("role " + std::string(to_string(role)) + " does not belong to a " +
                                std::string(to_string(config.task)) + " roster");
        for (auto d: dimensions_of(role))
            table[d].insert(role);
    }
    if (config.strict_coverage)
        for (const auto& [d, roles]: table)
            if (roles.size() < 3)
                throw InvalidConfig("dimension " + std::string(to_string(d)) + " is covered by only " +
                                    std::to_string(roles.size()) + " roles");
    return table;
}

std::string item_ref(AgentRole role, std::size_t n)
{
    return std::string(to_string(role)) + "#" + std::to_string(n);
}

json to_json(const CritiqueTranscript& t)
{
    json rounds = json::array();
    for (const auto& r: t.rounds)
    {
        json critiques = json::array();
        for (const auto& c: r.critiques)
        {
            json items = json::array();
            for (const auto& it: c.items)
                items.push_back({{"issue", it.issue}, {"suggestion", it.suggestion}});
            critiques.push_back({{"role", std::string(to_string(c.role))},
                                 {"applicable", c.applicable},
                                 {"ready", c.ready},
                                 {"summary", c.summary},
                                 {"items", items}});
        }
        json round{{"critiques", critiques}, {"decision", nullptr}};
        if (r.decision)
        {
            json rejected = json::array();
            for (const auto& x: r.decision->rejected)
                rejected.push_back({{"ref", x.ref}, {"rationale", x.rationale}});
            round["decision"] = {{"accepted", r.decision->accepted},
                                 {"rejected", rejected},
                                 {"revised", r.decision->revised},
                                 {"kind_changed", r.decision->kind_changed}};
        }
        rounds.push_back(round);
    }
    json j{{"initial", t.initial},
           {"rounds", rounds},
           {"termination", std::string(to_string(t.termination))},
           {"wave_count", t.wave_count},
           {"degraded", t.degraded}};
    if (!t.error.empty())
        j["error"] = t.error;
    return j;
}

std::optional<std::string> check_decision(const RefinerDecision& d, const std::vector<Critique>& critiques)
{
    std::set<std::string> seen;
    auto visit = [&](const std::string& ref) -> std::optional<std::string> {
        if (!critique_for_ref(critiques, ref))
            return "unknown critique ref '" + ref + "'";
        if (!seen.insert(ref).second)
            return "critique ref '" + ref + "' decided twice";
        return std::nullopt;
    };
    for (const auto& ref: d.accepted)
        if (auto err = visit(ref))
            return err;
    for (const auto& r: d.rejected)
    {
        if (auto err = visit(r.ref))
            return err;
        if (text::trim(r.rationale).empty())
            return "rejected critique '" + r.ref + "' has no rationale";
    }
    for (const auto& c: critiques)
    {
        if (!c.applicable)
            continue;
        for (std::size_t i = 0; i < c.items.size(); ++i)
            if (!seen.contains(item_ref(c.role, i + 1)))
                return "critique '" + item_ref(c.role, i + 1) + "' is neither accepted nor rejected";
    }
    return std::nullopt;
}

Critique parse_critique(std::string_view raw, AgentRole role)
{
    auto found = llm::extract_json_object(raw, check_critique_json);
    if (!found.value)
        throw EnvelopeParseError("critique: " + found.error);
    const auto& j = *found.value;
    Critique c;
    c.role = role;
    c.applicable = j["applicable"].get<bool>();
    c.summary = j.value("summary", std::string());
    if (!c.applicable)
    {
        c.ready = true;
        return c;
    }
    c.ready = j["ready"].get<bool>();
    if (j.contains("items") && j["items"].is_array())
        for (const auto& it: j["items"])
        {
            CritiqueItem item;
            item.issue = it["issue"].get<std::string>();
            if (it.contains("suggestion") && it["suggestion"].is_string())
                item.suggestion = it["suggestion"].get<std::string>();
            c.items.push_back(std::move(item));
        }
    return c;
}

ProtocolTask eda_protocol_task(std::string query, std::string context, std::vector<llm::ChatMessage> initial_messages)
{
    ProtocolTask t;
    t.kind = TaskKind::eda_turn;
    t.description = std::move(query);
    t.context = std::move(context);
    t.initial_messages = std::move(initial_messages);
    t.response_schema = std::string(llm::kEnvelopeSchema);
    t.parse_response = [](std::string_view raw) { return llm::envelope_to_json(llm::parse_envelope(raw)); };
    t.render_response = [](const json& j) {
        auto e = llm::envelope_from_json(j);
        return "A new " + std::string(to_string(e.cell_kind)) + " cell" + (e.done ? " (marked as final)" : "") +
               ":\n" + e.content;
    };
    return t;
}

namespace
{

class Run
{
public:
    Run(llm::Gateway& gw, const ProtocolTask& task, const ProtocolConfig& config, const ProtocolHooks& hooks)
        : _gw(gw), _task(task), _config(config), _hooks(hooks)
    {
    }

    ProtocolResult go()
    {
        validate();
        ProtocolResult result;
        auto& tr = result.transcript;

        progress("initial", 0);
        tr.wave_count = 1;
        result.response = _gw.request_structured<json>(_config.model_for(AgentRole::initial_respondent),
                                                       _task.initial_messages, "initial_respondent",
                                                       _task.parse_response, _task.response_schema);
        tr.initial = result.response;

        std::vector<std::string> rationales;
        for (int round = 1; round <= _config.max_rounds; ++round)
        {
            if (cancelled(tr))
                return result;
            progress("critics", round);
            ++tr.wave_count;
            ProtocolRound pr;
            try
            {
                pr.critiques = critic_wave(result.response, rationales);
            }
            catch (const Error& e)
            {
                abort(tr, e.what());
                return result;
            }
            bool all_ready = std::all_of(pr.critiques.begin(), pr.critiques.end(),
                                         [](const Critique& c) { return c.ready; });
            if (all_ready)
            {
                tr.rounds.push_back(std::move(pr));
                tr.termination = Termination::all_ready;
                return result;
            }

            if (cancelled(tr))
            {
                tr.rounds.push_back(std::move(pr));
                return result;
            }
            progress("refiner", round);
            ++tr.wave_count;
            try
            {
                auto decision = refine(result.response, pr.critiques, rationales);
                for (const auto& r: decision.rejected)
                {
                    std::size_t idx = 0;
                    auto* c = critique_for_ref(pr.critiques, r.ref, &idx);
                    rationales.push_back(r.ref + " (" + (c ? c->items[idx].issue : std::string("?")) +
                                         ") rejected: " + r.rationale);
                }
                result.response = decision.revised;
                pr.decision = std::move(decision);
                tr.rounds.push_back(std::move(pr));
            }
            catch (const Error& e)
            {
                tr.rounds.push_back(std::move(pr));
                abort(tr, e.what());
                return result;
            }
        }
        tr.termination = Termination::round_cap;
        return result;
    }

private:
    void validate() const
    {
        if (_config.max_rounds < 1)
            throw InvalidConfig("max_rounds must be at least 1");
        if (_config.task != _task.kind)
            throw InvalidConfig("config is for " + std::string(to_string(_config.task)) + " but the task is " +
                                std::string(to_string(_task.kind)));
        auto expected = default_roles(_config.task);
        auto have = _config.roles;
        std::sort(expected.begin(), expected.end());
        std::sort(have.begin(), have.end());
        if (have != expected)
            throw InvalidConfig("roster does not match the " + std::string(to_string(_config.task)) + " roles");
        coverage_table(_config);
    }

    void progress(const char* stage, int round) const
    {
        if (_hooks.on_progress)
            _hooks.on_progress({{"stage", stage}, {"round", round}});
    }

    bool cancelled(CritiqueTranscript& tr) const
    {
        if (_hooks.cancelled && _hooks.cancelled())
        {
            tr.termination = Termination::aborted;
            tr.degraded = true;
            tr.error = "cancelled";
            return true;
        }
        return false;
    }

    static void abort(CritiqueTranscript& tr, std::string message)
    {
        tr.termination = Termination::aborted;
        tr.degraded = true;
        tr.error = std::move(message);
    }

    std::vector<AgentRole> critics() const
    {
        std::vector<AgentRole> out;
        for (auto r: _config.roles)
            if (is_critic(r))
                out.push_back(r);
        return out;
    }

    Critique ask_critic(AgentRole role, const json& response, const std::vector<std::string>& rationales) const
    {
        std::string system = prompts::get("critic_common") + "\n\n" + prompts::get(std::string(to_string(role)));
        auto user = llm::ChatMessage::user(prompts::render("critic_turn", {{"task", _task.description},
                                                                           {"context", _task.context},
                                                                           {"response", _task.render_response(response)},
                                                                           {"prior_rationales", render_rationales(rationales)}}));
        if (role == AgentRole::critic_visualization && _config.visualization_images)
            user.attachments = _task.figures;
        std::function<Critique(std::string_view)> parse = [role](std::string_view raw) {
            return parse_critique(raw, role);
        };
        return _gw.request_structured<Critique>(_config.model_for(role), {llm::ChatMessage::system(system), user},
                                                to_string(role), parse, kCritiqueSchema);
    }

    std::vector<Critique> critic_wave(const json& response, const std::vector<std::string>& rationales) const
    {
        auto roster = critics();
        bool concurrent = true;
        for (auto r: roster)
            concurrent = concurrent && _gw.concurrent_safe(_config.model_for(r));

        std::vector<Critique> out;
        if (!concurrent)
        {
            for (auto r: roster)
                out.push_back(ask_critic(r, response, rationales));
            return out;
        }
        std::vector<std::future<Critique>> futures;
        for (auto r: roster)
            futures.push_back(std::async(std::launch::async, [this, r, &response, &rationales] {
                return ask_critic(r, response, rationales);
            }));
        std::optional<std::string> first_error;
        for (auto& f: futures)
        {
            try
            {
                out.push_back(f.get());
            }
            catch (const Error& e)
            {
                if (!first_error)
                    first_error = e.what();
            }
        }
        if (first_error)
            throw ProviderError(*first_error);
        return out;
    }

    RefinerDecision refine(const json& response, const std::vector<Critique>& critiques,
                           const std::vector<std::string>& rationales) const
    {
        auto system = prompts::render("refiner_system", {{"response_schema", _task.response_schema}});
        auto user = prompts::render("refiner_turn", {{"task", _task.description},
                                                     {"context", _task.context},
                                                     {"response", _task.render_response(response)},
                                                     {"critiques", render_critiques(critiques)},
                                                     {"prior_rationales", render_rationales(rationales)}});
        auto before_kind = envelope_kind(response);
        std::function<RefinerDecision(std::string_view)> parse = [&](std::string_view raw) {
            auto check = [](const json& j) -> std::optional<std::string> {
                if (!j.contains("revised"))
                    return "missing 'revised'";
                if (j.contains("accepted") && !j["accepted"].is_array())
                    return "'accepted' must be a list";
                if (j.contains("rejected") && !j["rejected"].is_array())
                    return "'rejected' must be a list";
                return std::nullopt;
            };
            auto found = llm::extract_json_object(raw, check);
            if (!found.value)
                throw EnvelopeParseError("refiner: " + found.error);
            const auto& j = *found.value;
            RefinerDecision d;
            if (j.contains("accepted"))
                for (const auto& a: j["accepted"])
                {
                    if (!a.is_string())
                        throw EnvelopeParseError("refiner: accepted refs must be strings");
                    d.accepted.push_back(a.get<std::string>());
                }
            if (j.contains("rejected"))
                for (const auto& r: j["rejected"])
                {
                    if (!r.is_object() || !r.contains("ref") || !r["ref"].is_string())
                        throw EnvelopeParseError("refiner: rejected entries need a 'ref'");
                    d.rejected.push_back({r["ref"].get<std::string>(),
                                          r.contains("rationale") && r["rationale"].is_string()
                                              ? r["rationale"].get<std::string>()
                                              : std::string()});
                }
            if (auto err = check_decision(d, critiques))
                throw EnvelopeParseError("refiner: " + *err);
            const auto& rev = j["revised"];
            d.revised = _task.parse_response(rev.is_string() ? rev.get<std::string>() : rev.dump());
            auto after_kind = envelope_kind(d.revised);
            d.kind_changed = before_kind && after_kind && *before_kind != *after_kind;
            return d;
        };
        std::string schema = std::string(kDecisionShape) + "\n<response>: " + _task.response_schema;
        return _gw.request_structured<RefinerDecision>(_config.model_for(AgentRole::refiner),
                                                       {llm::ChatMessage::system(system), llm::ChatMessage::user(user)},
                                                       "refiner", parse, schema);
    }

    llm::Gateway& _gw;
    const ProtocolTask& _task;
    const ProtocolConfig& _config;
    const ProtocolHooks& _hooks;
};

} // namespace

ProtocolResult run_protocol(llm::Gateway& gateway, const ProtocolTask& task, const ProtocolConfig& config,
                            const ProtocolHooks& hooks)
{
    return Run(gateway, task, config, hooks).go();
}

} // namespace capy
