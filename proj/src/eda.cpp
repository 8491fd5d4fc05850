// SPDX-License-Identifier: Apache-2.0
#include "capy/eda.hpp"

#include "capy/errors.hpp"
#include "capy/prompts.hpp"
#include "capy/text.hpp"

namespace capy
{

namespace
{

constexpr std::pair<LoopEventKind, std::string_view> kEventNames[] = {
    {LoopEventKind::cell_appended, "cell_appended"},
    {LoopEventKind::execution_started, "execution_started"},
    {LoopEventKind::execution_finished, "execution_finished"},
    {LoopEventKind::repair_attempt, "repair_attempt"},
    {LoopEventKind::loop_done, "loop_done"},
    {LoopEventKind::loop_stopped, "loop_stopped"},
    {LoopEventKind::loop_failed, "loop_failed"},
};

int max_execution_count(const Notebook& nb)
{
    int n = 0;
    for (const auto& c: nb.cells())
        if (c.execution_count)
            n = std::max(n, *c.execution_count);
    return n;
}

std::vector<llm::Attachment> latest_figure(const Notebook& nb)
{
    for (auto it = nb.cells().rbegin(); it != nb.cells().rend(); ++it)
        for (auto o = it->outputs.rbegin(); o != it->outputs.rend(); ++o)
            if (o->is_image() && o->mime_type == "image/png")
                if (auto bytes = text::base64_decode(o->text))
                    return {{o->mime_type, *bytes}};
    return {};
}

} // namespace

std::string_view to_string(LoopEventKind k)
{
    for (const auto& [kind, name]: kEventNames)
        if (kind == k)
            return name;
    return "loop_failed";
}

std::optional<LoopEventKind> parse_loop_event_kind(std::string_view s)
{
    for (const auto& [kind, name]: kEventNames)
        if (name == s)
            return kind;
    return std::nullopt;
}

bool is_terminal(LoopEventKind k)
{
    return k == LoopEventKind::loop_done || k == LoopEventKind::loop_stopped || k == LoopEventKind::loop_failed;
}

json to_json(const LoopEvent& e)
{
    json j = e.payload.is_object() ? e.payload : json::object();
    j["kind"] = std::string(to_string(e.kind));
    return j;
}

std::string_view to_string(AgentMode m)
{
    return m == AgentMode::single ? "single" : "multi";
}

std::optional<AgentMode> parse_agent_mode(std::string_view s)
{
    if (s == "single")
        return AgentMode::single;
    if (s == "multi")
        return AgentMode::multi;
    return std::nullopt;
}

std::string describe_result(const ExecutionResult& r, std::size_t limit)
{
    std::string out = "status: " + std::string(to_string(r.status)) + " (" + std::to_string(r.duration_ms) + " ms)\n";
    if (r.outputs.empty())
        out += "(no output)\n";
    for (const auto& o: r.outputs)
    {
        out += render_output(o);
        if (!out.ends_with('\n'))
            out += '\n';
    }
    if (out.size() > limit)
        out = std::string(text::utf8_prefix(out, limit)) + "\n...[result truncated]\n";
    return out;
}

EdaAgent::EdaAgent(llm::Gateway& gateway, CodeExecutor& executor, SharedNotebook& notebook)
    : _gateway(gateway), _executor(executor), _notebook(notebook)
{
}

std::vector<CritiqueTranscript> EdaAgent::transcripts() const
{
    std::lock_guard lock(_mutex);
    return _transcripts;
}

void EdaAgent::stop()
{
    if (!_running)
        return;
    _stop = true;
    _executor.interrupt();
}

LoopEvent EdaAgent::run_query(const std::string& query, const EdaRunConfig& config, const LoopEventSink& sink,
                              const ProgressSink& progress)
{
    if (text::trim(query).empty())
        throw ValidationError("query must be nonempty");
    if (config.budget.max_cells < 1 || config.budget.max_consecutive_error_repairs < 1 ||
        config.budget.context_budget < 1 || config.budget.cell_timeout_ms < 1)
        throw ValidationError("loop budget fields must be positive");
    if (_running.exchange(true))
        throw ValidationError("a run is already active");
    _stop = false;
    struct Done
    {
        std::atomic<bool>& flag;
        ~Done() { flag = false; }
    } done_guard{_running};
    {
        std::lock_guard lock(_mutex);
        _transcripts.clear();
    }

    auto emit = [&](LoopEventKind kind, json payload = json::object()) {
        LoopEvent e{kind, std::move(payload)};
        if (sink)
            sink(e);
        return e;
    };
    auto fail = [&](std::string_view reason, const std::string& message) {
        return emit(LoopEventKind::loop_failed, {{"reason", reason}, {"message", message}});
    };

    int cells = 0;
    int consecutive_errors = 0;
    int exec_count = max_execution_count(_notebook.snapshot());
    std::string last_result = "(nothing has been executed yet)";

    while (true)
    {
        if (_stop)
            return emit(LoopEventKind::loop_stopped, {{"cells", cells}});
        if (cells >= config.budget.max_cells)
            return fail("budget_exhausted", "reached max_cells=" + std::to_string(config.budget.max_cells));

        auto snapshot = _notebook.snapshot();
        auto context = render_context(snapshot, config.budget.context_budget);
        std::vector<llm::ChatMessage> messages = {
            llm::ChatMessage::system(prompts::render("eda_system", {{"language", snapshot.kernel_language()}})),
            llm::ChatMessage::user(prompts::render(
                "eda_turn", {{"query", query}, {"notebook_context", context.empty() ? "(empty notebook)" : context},
                             {"last_result", last_result}})),
        };

        llm::AgentEnvelope envelope;
        json protocol_summary;
        try
        {
            if (config.mode == AgentMode::single)
            {
                envelope = _gateway.request_envelope(config.protocol.model_for(AgentRole::initial_respondent),
                                                     std::move(messages));
            }
            else
            {
                auto task = eda_protocol_task(query, context, std::move(messages));
                if (config.protocol.visualization_images)
                    task.figures = latest_figure(snapshot);
                ProtocolConfig pc = config.protocol;
                pc.task = TaskKind::eda_turn;
                ProtocolHooks hooks;
                hooks.cancelled = [this] { return _stop.load(); };
                if (progress)
                    hooks.on_progress = [&, turn = cells + 1](const json& p) {
                        json ev = p;
                        ev["turn"] = turn;
                        progress(ev);
                    };
                auto result = run_protocol(_gateway, task, pc, hooks);
                envelope = llm::envelope_from_json(result.response);
                protocol_summary = {{"wave_count", result.transcript.wave_count},
                                    {"termination", std::string(to_string(result.transcript.termination))},
                                    {"degraded", result.transcript.degraded}};
                std::lock_guard lock(_mutex);
                _transcripts.push_back(std::move(result.transcript));
            }
        }
        catch (const EnvelopeParseError& e)
        {
            return fail("envelope_parse_failed", e.what());
        }
        catch (const InvalidConfig&)
        {
            throw;
        }
        catch (const Error& e)
        {
            return fail("model_unavailable", e.what());
        }

        // A stop that arrived while the model was thinking discards the reply.
        if (_stop)
            return emit(LoopEventKind::loop_stopped, {{"cells", cells}});

        auto id = _notebook.append_cell(envelope.cell_kind, envelope.content, Provenance::assistant);
        ++cells;
        json appended{{"cell_id", id},
                      {"cell_type", std::string(to_string(envelope.cell_kind))},
                      {"source", envelope.content},
                      {"done", envelope.done}};
        if (!protocol_summary.is_null())
            appended["protocol"] = protocol_summary;
        emit(LoopEventKind::cell_appended, appended);

        if (envelope.cell_kind == CellKind::code)
        {
            emit(LoopEventKind::execution_started, {{"cell_id", id}});
            ExecutionResult result;
            try
            {
                result = _executor.execute(envelope.content, config.budget.cell_timeout_ms);
            }
            catch (const WorkerDead& e)
            {
                return fail("worker_dead", e.what());
            }
            catch (const SpawnError& e)
            {
                return fail("worker_dead", e.what());
            }
            _notebook.set_execution(id, result.outputs, ++exec_count);
            emit(LoopEventKind::execution_finished, {{"cell_id", id},
                                                     {"status", std::string(to_string(result.status))},
                                                     {"duration_ms", result.duration_ms},
                                                     {"execution_count", exec_count},
                                                     {"outputs", to_json(result)["outputs"]}});

            if (_stop || result.status == ExecStatus::interrupted)
                return emit(LoopEventKind::loop_stopped, {{"cells", cells}});

            if (result.status == ExecStatus::error || result.status == ExecStatus::timeout)
            {
                ++consecutive_errors;
                if (consecutive_errors > config.budget.max_consecutive_error_repairs)
                    return fail("repair_exhausted", std::to_string(consecutive_errors) + " consecutive failing cells");
                if (!envelope.done)
                    emit(LoopEventKind::repair_attempt, {{"attempt", consecutive_errors}, {"cell_id", id}});
            }
            else
            {
                consecutive_errors = 0;
            }
            last_result = describe_result(result);
        }
        else
        {
            last_result = "(the last cell was markdown; nothing was executed)";
        }

        if (envelope.done)
            return emit(LoopEventKind::loop_done, {{"cells", cells}});
    }
}

} // namespace capy
