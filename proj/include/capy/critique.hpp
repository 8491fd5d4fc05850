// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/llm.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace capy
{

enum class AgentRole
{
    initial_respondent,
    refiner,
    critic_plan,
    critic_code,
    critic_visualization,
    critic_interpretation,
    critic_semantic,
    critic_rhetorical,
    critic_pragmatic
};

std::string_view to_string(AgentRole r);
std::optional<AgentRole> parse_agent_role(std::string_view s);
bool is_critic(AgentRole r);

enum class Dimension
{
    semantic,
    rhetorical,
    pragmatic
};

std::string_view to_string(Dimension d);
std::optional<Dimension> parse_dimension(std::string_view s);
inline constexpr Dimension kDimensions[] = {Dimension::semantic, Dimension::rhetorical, Dimension::pragmatic};

enum class TaskKind
{
    eda_turn,
    story_draft
};

std::string_view to_string(TaskKind t);

/// The exact role roster each task kind runs with.
std::vector<AgentRole> default_roles(TaskKind task);

struct ProtocolConfig
{
    TaskKind task = TaskKind::eda_turn;
    std::vector<AgentRole> roles = default_roles(TaskKind::eda_turn);
    /// Per-role model; roles without an entry use `default_model`.
    std::map<AgentRole, llm::ModelRef> models;
    llm::ModelRef default_model;
    int max_rounds = 2;
    /// Reject rosters that leave a dimension with fewer than three roles.
    bool strict_coverage = true;
    /// Send the latest figure to the visualization critic as an image.
    bool visualization_images = false;

    [[nodiscard]] const llm::ModelRef& model_for(AgentRole r) const;
};

/// Static routing of design-space dimensions to roles for the config's
/// roster. Throws InvalidConfig for roles foreign to the task, and in strict
/// mode when any dimension is covered by fewer than three roles.
std::map<Dimension, std::set<AgentRole>> coverage_table(const ProtocolConfig& config);

struct CritiqueItem
{
    std::string issue;
    std::string suggestion;
};

struct Critique
{
    AgentRole role = AgentRole::critic_plan;
    bool applicable = true;
    bool ready = true;
    std::vector<CritiqueItem> items;
    std::string summary;
};

struct Rejection
{
    std::string ref;
    std::string rationale;
};

struct RefinerDecision
{
    std::vector<std::string> accepted;
    std::vector<Rejection> rejected;
    json revised;
    /// EDA only: the revision targets a different cell kind than its input.
    bool kind_changed = false;
};

struct ProtocolRound
{
    std::vector<Critique> critiques;
    std::optional<RefinerDecision> decision;
};

enum class Termination
{
    all_ready,
    round_cap,
    aborted
};

std::string_view to_string(Termination t);

struct CritiqueTranscript
{
    json initial;
    std::vector<ProtocolRound> rounds;
    Termination termination = Termination::all_ready;
    int wave_count = 0;
    bool degraded = false;
    std::string error;
};

json to_json(const CritiqueTranscript& t);

/// Reference of the n-th (1-based) item of a critic: "critic_code#2".
std::string item_ref(AgentRole role, std::size_t n);

/// Checks a refiner decision against the critiques it answers: every item
/// of every applicable critique is accepted or rejected exactly once, refs
/// are known, and rejections carry a rationale.
std::optional<std::string> check_decision(const RefinerDecision& d, const std::vector<Critique>& critiques);

/// Parses a critic reply; throws EnvelopeParseError on schema violations.
Critique parse_critique(std::string_view raw, AgentRole role);

/// What run_protocol needs to know about the response type.
struct ProtocolTask
{
    TaskKind kind = TaskKind::eda_turn;
    /// User request or storytelling instructions, shown to critics and refiner.
    std::string description;
    /// Notebook rendering shown to critics and refiner.
    std::string context;
    /// Messages for the initial respondent.
    std::vector<llm::ChatMessage> initial_messages;
    /// Human-readable schema of a response, restated on repair.
    std::string response_schema;
    /// Raw reply (or dumped JSON) to canonical response JSON. Throws capy::Error.
    std::function<json(std::string_view)> parse_response;
    /// Response as shown to critics.
    std::function<std::string(const json&)> render_response;
    /// Latest figure, sent to the visualization critic when enabled.
    std::vector<llm::Attachment> figures;
};

/// Task adapter for one EDA turn; responses are envelopes.
ProtocolTask eda_protocol_task(std::string query, std::string context, std::vector<llm::ChatMessage> initial_messages);

struct ProtocolResult
{
    json response;
    CritiqueTranscript transcript;
};

struct ProtocolHooks
{
    /// Called at each wave boundary with {"stage", "round", "wave"}.
    std::function<void(const json&)> on_progress;
    /// Polled between waves; true ends the run as aborted.
    std::function<bool()> cancelled;
};

/// Initial respondent, then up to max_rounds of (critic wave, refiner wave).
/// Errors from the initial respondent propagate; later errors end the run
/// with the best response so far and transcript.degraded set.
ProtocolResult run_protocol(llm::Gateway& gateway, const ProtocolTask& task, const ProtocolConfig& config,
                            const ProtocolHooks& hooks = {});

} // namespace capy
