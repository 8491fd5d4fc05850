// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/critique.hpp"
#include "capy/eda.hpp"
#include "capy/story.hpp"

#include <map>
#include <string>

namespace capy
{

struct Settings
{
    AgentMode eda_mode = AgentMode::single;
    AgentMode story_mode = AgentMode::single;
    /// Used by every role without an entry in model_by_role.
    llm::ModelRef default_model{llm::ProviderKind::openai_compatible, "gpt-4o", {}};
    std::map<AgentRole, llm::ModelRef> model_by_role;
    int max_rounds = 2;
    LoopBudget budget;
    std::size_t max_annotations_per_block = 2;
    bool visualization_images = false;

    [[nodiscard]] const llm::ModelRef& model_for(AgentRole r) const;
    [[nodiscard]] ProtocolConfig protocol(TaskKind task) const;
    [[nodiscard]] EdaRunConfig eda_config() const;
    [[nodiscard]] StoryConfig story_config() const;

    friend bool operator==(const Settings&, const Settings&) = default;
};

/// Throws ValidationError on any invariant violation.
void validate(const Settings& s);

json to_json(const Settings& s);

/// Overlays the keys present in `j` on `base` and validates the result.
/// Unknown keys are rejected. Throws ValidationError.
Settings settings_from_json(const json& j, const Settings& base = {});

/// Same keys as the JSON form; `[default_model]`, `[models.<role>]` and
/// `[budget]` are tables. Throws ValidationError.
Settings settings_from_toml(std::string_view toml_text, const Settings& base = {});
Settings settings_from_toml_file(const std::string& path, const Settings& base = {});

} // namespace capy
