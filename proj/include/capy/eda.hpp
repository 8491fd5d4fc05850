// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/critique.hpp"
#include "capy/executor.hpp"
#include "capy/llm.hpp"
#include "capy/notebook.hpp"

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace capy
{

enum class LoopEventKind
{
    cell_appended,
    execution_started,
    execution_finished,
    repair_attempt,
    loop_done,
    loop_stopped,
    loop_failed
};

std::string_view to_string(LoopEventKind k);
std::optional<LoopEventKind> parse_loop_event_kind(std::string_view s);
bool is_terminal(LoopEventKind k);

struct LoopEvent
{
    LoopEventKind kind = LoopEventKind::loop_done;
    /// Kind-specific fields: cell_id, cell_type, status, attempt, reason, ...
    json payload = json::object();
};

/// {"kind": ..., payload fields...}
json to_json(const LoopEvent& e);

struct LoopBudget
{
    int max_cells = 12;
    int max_consecutive_error_repairs = 3;
    std::size_t context_budget = 24'000;
    int cell_timeout_ms = kDefaultCellTimeoutMs;

    friend bool operator==(const LoopBudget&, const LoopBudget&) = default;
};

enum class AgentMode
{
    single,
    multi
};

std::string_view to_string(AgentMode m);
std::optional<AgentMode> parse_agent_mode(std::string_view s);

struct EdaRunConfig
{
    AgentMode mode = AgentMode::single;
    LoopBudget budget;
    /// Roster, per-role models and max_rounds. Single mode only uses the
    /// initial respondent's model.
    ProtocolConfig protocol;
};

using LoopEventSink = std::function<void(const LoopEvent&)>;
using ProgressSink = std::function<void(const json&)>;

/// The observe-act loop: each model turn becomes one assistant cell; code
/// cells run and their result feeds the next turn.
class EdaAgent
{
public:
    EdaAgent(llm::Gateway& gateway, CodeExecutor& executor, SharedNotebook& notebook);

    /// Blocks until the run ends and returns the terminal event. Every event,
    /// terminal included, is also passed to `sink` in order.
    LoopEvent run_query(const std::string& query, const EdaRunConfig& config, const LoopEventSink& sink = {},
                        const ProgressSink& progress = {});

    /// Requests a stop of the active run: the running cell is interrupted and
    /// the loop ends with loop_stopped once the current call returns. No-op
    /// when idle.
    void stop();

    [[nodiscard]] bool running() const { return _running; }

    /// Critique transcripts of the latest multi-mode run, one per turn.
    [[nodiscard]] std::vector<CritiqueTranscript> transcripts() const;

private:
    llm::Gateway& _gateway;
    CodeExecutor& _executor;
    SharedNotebook& _notebook;
    std::atomic<bool> _running{false};
    std::atomic<bool> _stop{false};
    mutable std::mutex _mutex;
    std::vector<CritiqueTranscript> _transcripts;
};

/// Text of an execution result as fed back to the model.
std::string describe_result(const ExecutionResult& r, std::size_t limit = 4000);

} // namespace capy
