// SPDX-License-Identifier: Apache-2.0
#include "capy/settings.hpp"

#include "capy/errors.hpp"

#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace capy
{

namespace
{

AgentMode mode_from(const json& j, const char* key)
{
    if (!j.is_string())
        throw ValidationError(std::string(key) + " must be \"single\" or \"multi\"");
    auto m = parse_agent_mode(j.get<std::string>());
    if (!m)
        throw ValidationError(std::string(key) + " must be \"single\" or \"multi\"");
    return *m;
}

long long int_from(const json& j, const std::string& key)
{
    if (!j.is_number_integer())
        throw ValidationError(key + " must be an integer");
    return j.get<long long>();
}

json toml_to_json(const toml::node& n)
{
    if (auto t = n.as_table())
    {
        json out = json::object();
        for (const auto& [k, v]: *t)
            out[std::string(k.str())] = toml_to_json(v);
        return out;
    }
    if (auto a = n.as_array())
    {
        json out = json::array();
        for (const auto& v: *a)
            out.push_back(toml_to_json(v));
        return out;
    }
    if (auto s = n.as_string())
        return s->get();
    if (auto i = n.as_integer())
        return i->get();
    if (auto f = n.as_floating_point())
        return f->get();
    if (auto b = n.as_boolean())
        return b->get();
    throw ValidationError("unsupported value type in configuration");
}

} // namespace

const llm::ModelRef& Settings::model_for(AgentRole r) const
{
    auto it = model_by_role.find(r);
    return it == model_by_role.end() ? default_model : it->second;
}

ProtocolConfig Settings::protocol(TaskKind task) const
{
    ProtocolConfig c;
    c.task = task;
    c.roles = default_roles(task);
    c.default_model = default_model;
    c.max_rounds = max_rounds;
    c.visualization_images = visualization_images;
    for (const auto& [role, model]: model_by_role)
        if (std::find(c.roles.begin(), c.roles.end(), role) != c.roles.end())
            c.models[role] = model;
    return c;
}

EdaRunConfig Settings::eda_config() const
{
    EdaRunConfig c;
    c.mode = eda_mode;
    c.budget = budget;
    c.protocol = protocol(TaskKind::eda_turn);
    return c;
}

StoryConfig Settings::story_config() const
{
    StoryConfig c;
    c.mode = story_mode;
    c.protocol = protocol(TaskKind::story_draft);
    c.max_annotations_per_block = max_annotations_per_block;
    c.context_budget = budget.context_budget;
    return c;
}

void validate(const Settings& s)
{
    if (s.max_rounds < 1)
        throw ValidationError("max_rounds must be at least 1");
    if (s.budget.max_cells < 1 || s.budget.max_consecutive_error_repairs < 1 || s.budget.context_budget < 1 ||
        s.budget.cell_timeout_ms < 1)
        throw ValidationError("budget fields must be positive");
    if (s.max_annotations_per_block < 1)
        throw ValidationError("max_annotations_per_block must be at least 1");
    auto check_model = [](const llm::ModelRef& m, const std::string& who) {
        if (m.provider == llm::ProviderKind::scripted && m.transcript.empty())
            throw ValidationError(who + ": scripted model needs a transcript");
        if (m.provider != llm::ProviderKind::scripted && m.model_name.empty())
            throw ValidationError(who + ": model_name is required");
    };
    check_model(s.default_model, "default_model");
    for (const auto& [role, m]: s.model_by_role)
        check_model(m, std::string(to_string(role)));
}

json to_json(const Settings& s)
{
    json models = json::object();
    for (const auto& [role, m]: s.model_by_role)
        models[std::string(to_string(role))] = llm::to_json(m);
    return {{"eda_mode", std::string(to_string(s.eda_mode))},
            {"story_mode", std::string(to_string(s.story_mode))},
            {"default_model", llm::to_json(s.default_model)},
            {"model_by_role", models},
            {"max_rounds", s.max_rounds},
            {"budget",
             {{"max_cells", s.budget.max_cells},
              {"max_consecutive_error_repairs", s.budget.max_consecutive_error_repairs},
              {"context_budget", s.budget.context_budget},
              {"cell_timeout_ms", s.budget.cell_timeout_ms}}},
            {"max_annotations_per_block", s.max_annotations_per_block},
            {"visualization_images", s.visualization_images}};
}

Settings settings_from_json(const json& j, const Settings& base)
{
    if (!j.is_object())
        throw ValidationError("settings must be an object");
    Settings s = base;
    for (const auto& [key, v]: j.items())
    {
        if (key == "eda_mode")
            s.eda_mode = mode_from(v, "eda_mode");
        else if (key == "story_mode")
            s.story_mode = mode_from(v, "story_mode");
        else if (key == "default_model")
            s.default_model = llm::model_ref_from_json(v);
        else if (key == "model_by_role" || key == "models")
        {
            if (!v.is_object())
                throw ValidationError(key + " must be an object");
            for (const auto& [role_name, m]: v.items())
            {
                auto role = parse_agent_role(role_name);
                if (!role)
                    throw ValidationError("unknown agent role '" + role_name + "'");
                if (m.is_null())
                    s.model_by_role.erase(*role);
                else
                    s.model_by_role[*role] = llm::model_ref_from_json(m);
            }
        }
        else if (key == "max_rounds")
            s.max_rounds = static_cast<int>(int_from(v, key));
        else if (key == "budget")
        {
            if (!v.is_object())
                throw ValidationError("budget must be an object");
            for (const auto& [bk, bv]: v.items())
            {
                auto n = int_from(bv, "budget." + bk);
                if (n < 1)
                    throw ValidationError("budget." + bk + " must be positive");
                if (bk == "max_cells")
                    s.budget.max_cells = static_cast<int>(n);
                else if (bk == "max_consecutive_error_repairs")
                    s.budget.max_consecutive_error_repairs = static_cast<int>(n);
                else if (bk == "context_budget")
                    s.budget.context_budget = static_cast<std::size_t>(n);
                else if (bk == "cell_timeout_ms")
                    s.budget.cell_timeout_ms = static_cast<int>(n);
                else
                    throw ValidationError("unknown budget field '" + bk + "'");
            }
        }
        else if (key == "max_annotations_per_block")
        {
            auto n = int_from(v, key);
            if (n < 1)
                throw ValidationError("max_annotations_per_block must be at least 1");
            s.max_annotations_per_block = static_cast<std::size_t>(n);
        }
        else if (key == "visualization_images")
        {
            if (!v.is_boolean())
                throw ValidationError("visualization_images must be a boolean");
            s.visualization_images = v.get<bool>();
        }
        else
            throw ValidationError("unknown settings field '" + key + "'");
    }
    validate(s);
    return s;
}

Settings settings_from_toml(std::string_view toml_text, const Settings& base)
{
    try
    {
        auto table = toml::parse(toml_text);
        return settings_from_json(toml_to_json(table), base);
    }
    catch (const toml::parse_error& e)
    {
        std::ostringstream msg;
        msg << "configuration: " << e.description() << " at line " << e.source().begin.line;
        throw ValidationError(msg.str());
    }
}

Settings settings_from_toml_file(const std::string& path, const Settings& base)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open configuration file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return settings_from_toml(buf.str(), base);
}

} // namespace capy
