// SPDX-License-Identifier: Apache-2.0
#include "capy/service.hpp"

#include "capy/clarify.hpp"
#include "capy/eda.hpp"
#include "capy/errors.hpp"
#include "capy/insights.hpp"
#include "capy/story.hpp"
#include "capy/text.hpp"

#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace capy
{

namespace
{

using Clock = std::chrono::steady_clock;

struct SseEvent
{
    std::size_t id = 0;
    std::string name;
    json data;
};

/// Ordered, append-only event log of one run.
struct RunLog
{
    int run = 0;
    Clock::time_point started = Clock::now();
    std::mutex mutex;
    std::condition_variable cv;
    std::vector<SseEvent> events;
    bool finished = false;
    std::string stage = "starting";

    void push(std::string name, json data, bool last = false)
    {
        std::lock_guard lock(mutex);
        if (finished)
            return;
        data["run"] = run;
        events.push_back({events.size() + 1, std::move(name), std::move(data)});
        finished = last;
        cv.notify_all();
    }
};

enum class RunState
{
    idle,
    running,
    stopping
};

std::string_view to_string(RunState s)
{
    switch (s)
    {
        case RunState::idle: return "idle";
        case RunState::running: return "running";
        case RunState::stopping: return "stopping";
    }
    return "idle";
}

struct Session
{
    explicit Session(std::vector<ClarifyThread> threads): clarify(std::move(threads)) {}

    std::string id;
    std::string dir;

    mutable std::mutex mutex;
    SharedNotebook notebook;
    Settings settings;
    ClarifyStore clarify;
    std::optional<StoryDocument> story;
    std::optional<InsightGraph> insights;
    RunState run_state = RunState::idle;
    std::vector<std::shared_ptr<RunLog>> runs;

    std::unique_ptr<CodeExecutor> executor;
    std::unique_ptr<EdaAgent> agent;
    std::atomic<bool> stop_requested{false};
    std::thread worker;
};

struct HttpError
{
    int status;
    std::string code;
    std::string message;
};

int status_for(const Error& e)
{
    const auto& c = e.code();
    if (c == "validation_error" || c == "invalid_anchor" || c == "invalid_config" || c == "malformed_file" ||
        c == "unsupported_version" || c == "missing_figure")
        return 422;
    if (c == "unknown_cell" || c == "unknown_block")
        return 404;
    return 502;
}

void reply_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
{
    reply_json(res, status, {{"code", code}, {"message", message}});
}

json body_json(const httplib::Request& req)
{
    if (req.body.empty())
        return json::object();
    try
    {
        return json::parse(req.body);
    }
    catch (const json::exception& e)
    {
        throw HttpError{400, "bad_request", std::string("request body is not JSON: ") + e.what()};
    }
}

std::string require_text(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key) || !j[key].is_string())
        throw ValidationError(std::string("'") + key + "' must be a string");
    return j[key].get<std::string>();
}

std::string new_session_id()
{
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

std::string format_sse(const SseEvent& e)
{
    return "id: " + std::to_string(e.id) + "\nevent: " + e.name + "\ndata: " + e.data.dump() + "\n\n";
}

json story_state(const StoryDocument& s)
{
    auto j = to_json(s);
    j["instructions"] = s.instructions;
    return j;
}

} // namespace

ListenAddress parse_listen_addr(std::string_view s)
{
    ListenAddress a;
    if (s.empty())
        return a;
    auto colon = s.rfind(':');
    if (colon == std::string_view::npos)
    {
        a.host = std::string(s);
        return a;
    }
    if (colon > 0)
        a.host = std::string(s.substr(0, colon));
    auto port_text = std::string(s.substr(colon + 1));
    try
    {
        std::size_t used = 0;
        a.port = std::stoi(port_text, &used);
        if (used != port_text.size() || a.port < 0 || a.port > 65535)
            throw std::invalid_argument(port_text);
    }
    catch (const std::exception&)
    {
        throw ValidationError("invalid listen address '" + std::string(s) + "'");
    }
    return a;
}

ServiceOptions service_options_from_environment()
{
    ServiceOptions o;
    if (const char* dir = std::getenv("CAPY_STATE_DIR"))
        o.state_dir = dir;
    return o;
}

struct SessionService::Impl
{
    llm::Gateway& gateway;
    ServiceOptions options;
    httplib::Server server;
    std::thread server_thread;

    mutable std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<Session>> sessions;

    Impl(llm::Gateway& gw, ServiceOptions opts): gateway(gw), options(std::move(opts))
    {
        if (!options.executor_factory)
            options.executor_factory = [] { return std::make_unique<Executor>(); };
        restore();
        routes();
    }

    // -- sessions -----------------------------------------------------------

    std::shared_ptr<Session> make_session(std::string id, Notebook nb, Settings settings,
                                          std::vector<ClarifyThread> threads = {})
    {
        auto s = std::make_shared<Session>(std::move(threads));
        s->id = std::move(id);
        if (!options.state_dir.empty())
        {
            s->dir = (fs::path(options.state_dir) / s->id).string();
            fs::create_directories(s->dir);
        }
        s->settings = std::move(settings);
        s->notebook.replace(std::move(nb));
        if (!s->dir.empty())
        {
            auto path = (fs::path(s->dir) / "notebook.ipynb").string();
            s->notebook.set_commit_hook([path](const Notebook& n) { save_notebook_atomic(n, path); });
            save_notebook_atomic(s->notebook.snapshot(), path);
        }
        s->executor = options.executor_factory();
        s->agent = std::make_unique<EdaAgent>(gateway, *s->executor, s->notebook);
        return s;
    }

    // Caller holds s.mutex.
    void persist_state(const Session& s)
    {
        if (s.dir.empty())
            return;
        json threads = json::array();
        for (const auto& t: s.clarify.threads())
            threads.push_back(to_json(t));
        json state{{"id", s.id},
                   {"settings", to_json(s.settings)},
                   {"threads", threads},
                   {"story", s.story ? story_state(*s.story) : json(nullptr)},
                   {"insights", s.insights ? to_json(*s.insights) : json(nullptr)}};
        write_file_atomic((fs::path(s.dir) / "state.json").string(), state.dump(1) + "\n");
    }

    void restore()
    {
        if (options.state_dir.empty() || !fs::is_directory(options.state_dir))
            return;
        for (const auto& entry: fs::directory_iterator(options.state_dir))
        {
            auto nb_path = entry.path() / "notebook.ipynb";
            if (!entry.is_directory() || !fs::exists(nb_path))
                continue;
            try
            {
                auto nb = load_notebook(nb_path.string());
                json state = json::object();
                if (std::ifstream in(entry.path() / "state.json"); in)
                    state = json::parse(in);
                auto settings = state.contains("settings") ? settings_from_json(state["settings"], options.default_settings)
                                                           : options.default_settings;
                auto id = entry.path().filename().string();
                std::vector<ClarifyThread> threads;
                for (const auto& t: state.value("threads", json::array()))
                    threads.push_back(clarify_thread_from_json(t));
                auto s = make_session(id, std::move(nb), std::move(settings), std::move(threads));
                if (state.contains("story") && !state["story"].is_null())
                    s->story = story_from_state(state["story"]);
                if (state.contains("insights") && !state["insights"].is_null())
                    s->insights = graph_from_json(state["insights"]);
                sessions[id] = s;
            }
            catch (const std::exception& e)
            {
                std::fprintf(stderr, "capy: skipping session %s: %s\n", entry.path().c_str(), e.what());
            }
        }
    }

    std::shared_ptr<Session> find(const std::string& id)
    {
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end())
            throw HttpError{404, "not_found", "no session '" + id + "'"};
        return it->second;
    }

    // -- runs ---------------------------------------------------------------

    void start_run(const std::shared_ptr<Session>& s, const std::string& query, httplib::Response& res)
    {
        std::unique_lock lock(s->mutex);
        if (s->run_state != RunState::idle)
            throw HttpError{409, "conflict", "a run is already active"};
        if (text::trim(query).empty())
            throw ValidationError("query text must be nonempty");
        auto config = s->settings.eda_config();
        if (config.mode == AgentMode::multi)
            coverage_table(config.protocol);
        if (s->worker.joinable())
            s->worker.join();

        auto log = std::make_shared<RunLog>();
        log->run = static_cast<int>(s->runs.size()) + 1;
        s->runs.push_back(log);
        s->run_state = RunState::running;
        s->stop_requested = false;
        log->push("run_started", {{"query", query}, {"mode", std::string(to_string(config.mode))}});
        s->worker = std::thread([this, s, log, query, config] { run(s, log, query, config); });
        reply_json(res, 202, {{"run", log->run}, {"events", "/sessions/" + s->id + "/events?run=" + std::to_string(log->run)}});
    }

    void run(std::shared_ptr<Session> s, std::shared_ptr<RunLog> log, std::string query, EdaRunConfig config)
    {
        std::atomic<bool> done{false};
        std::thread beat([&] { heartbeat(s, log, done); });

        auto sink = [&](const LoopEvent& e) {
            if (is_terminal(e.kind))
                return;
            {
                std::lock_guard lock(log->mutex);
                if (e.kind == LoopEventKind::execution_started)
                    log->stage = "executing";
                else
                    log->stage = "waiting_for_model";
            }
            log->push(std::string(to_string(e.kind)), to_json(e));
        };
        auto progress = [&](const json& p) {
            {
                std::lock_guard lock(log->mutex);
                log->stage = p.value("stage", std::string("model"));
            }
            log->push("progress", p);
        };

        LoopEvent terminal;
        if (s->stop_requested)
            terminal = {LoopEventKind::loop_stopped, {{"cells", 0}}};
        else
        {
            {
                std::lock_guard lock(log->mutex);
                log->stage = "waiting_for_model";
            }
            try
            {
                terminal = s->agent->run_query(query, config, sink, progress);
            }
            catch (const std::exception& e)
            {
                terminal = {LoopEventKind::loop_failed, {{"reason", "model_unavailable"}, {"message", e.what()}}};
            }
        }
        done = true;
        beat.join();

        if (terminal.kind == LoopEventKind::loop_failed && terminal.payload.value("reason", "") == "worker_dead")
        {
            try
            {
                s->executor->reset();
            }
            catch (const std::exception&)
            {
            }
        }
        {
            std::lock_guard lock(s->mutex);
            s->clarify.sync(s->notebook.snapshot());
            persist_state(*s);
            s->run_state = RunState::idle;
        }
        log->push(std::string(to_string(terminal.kind)), to_json(terminal), true);
    }

    void heartbeat(const std::shared_ptr<Session>& s, const std::shared_ptr<RunLog>& log, const std::atomic<bool>& done)
    {
        auto next = Clock::now() + options.heartbeat;
        while (!done)
        {
            // Short ticks so a stop request reaches the agent promptly.
            std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(options.heartbeat, std::chrono::milliseconds(50)));
            if (s->stop_requested && s->agent->running())
                s->agent->stop();
            if (Clock::now() < next || done)
                continue;
            next = Clock::now() + options.heartbeat;
            std::string stage;
            {
                std::lock_guard lock(log->mutex);
                stage = log->stage;
            }
            auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - log->started).count();
            log->push("heartbeat", {{"stage", stage}, {"elapsed_ms", elapsed}});
        }
    }

    void stop_run(const std::shared_ptr<Session>& s, httplib::Response& res)
    {
        std::lock_guard lock(s->mutex);
        if (s->run_state == RunState::idle)
        {
            reply_json(res, 200, {{"run_state", "idle"}});
            return;
        }
        s->run_state = RunState::stopping;
        s->stop_requested = true;
        s->agent->stop();
        reply_json(res, 202, {{"run_state", "stopping"}, {"run", s->runs.back()->run}});
    }

    void stream_events(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res)
    {
        std::shared_ptr<RunLog> log;
        {
            std::lock_guard lock(s->mutex);
            if (s->runs.empty())
                throw HttpError{404, "no_run", "session has no runs yet"};
            if (req.has_param("run"))
            {
                int n = 0;
                try
                {
                    n = std::stoi(req.get_param_value("run"));
                }
                catch (const std::exception&)
                {
                }
                if (n < 1 || n > static_cast<int>(s->runs.size()))
                    throw HttpError{404, "no_run", "no run " + req.get_param_value("run")};
                log = s->runs[static_cast<std::size_t>(n - 1)];
            }
            else
            {
                log = s->runs.back();
            }
        }
        auto cursor = std::make_shared<std::size_t>(0);
        if (req.has_header("Last-Event-ID"))
        {
            try
            {
                *cursor = std::stoul(req.get_header_value("Last-Event-ID"));
            }
            catch (const std::exception&)
            {
            }
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [log, cursor](std::size_t, httplib::DataSink& sink) {
            std::string out;
            bool finished = false;
            {
                std::unique_lock lock(log->mutex);
                log->cv.wait_for(lock, std::chrono::milliseconds(500),
                                 [&] { return log->events.size() > *cursor || log->finished; });
                while (*cursor < log->events.size())
                    out += format_sse(log->events[(*cursor)++]);
                finished = log->finished && *cursor == log->events.size();
            }
            if (!out.empty() && !sink.write(out.data(), out.size()))
                return false;
            if (finished)
                sink.done();
            return true;
        });
    }

    // -- routes -------------------------------------------------------------

    using Handler = std::function<void(const std::shared_ptr<Session>&, const httplib::Request&, httplib::Response&)>;

    /// Wraps a per-session handler with lookup and error mapping.
    httplib::Server::Handler session_route(Handler h)
    {
        return [this, h](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { h(find(req.matches[1]), req, res); });
        };
    }

    template <typename F>
    static void guarded(httplib::Response& res, F&& f)
    {
        try
        {
            f();
        }
        catch (const HttpError& e)
        {
            reply_error(res, e.status, e.code, e.message);
        }
        catch (const Error& e)
        {
            reply_error(res, status_for(e), e.code(), e.what());
        }
        catch (const std::exception& e)
        {
            reply_error(res, 500, "internal_error", e.what());
        }
    }

    void routes()
    {
        server.new_task_queue = [] { return new httplib::ThreadPool(32); };

        server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { create_session(req, res); });
        });

        const std::string sid = "/sessions/([A-Za-z0-9_-]+)";

        server.Get(sid, session_route([this](auto& s, auto&, auto& res) {
                       std::lock_guard lock(s->mutex);
                       json threads = json::array();
                       for (const auto& t: s->clarify.threads())
                           threads.push_back(to_json(t));
                       reply_json(res, 200,
                                  {{"id", s->id},
                                   {"run_state", std::string(to_string(s->run_state))},
                                   {"runs", s->runs.size()},
                                   {"settings", to_json(s->settings)},
                                   {"threads", threads},
                                   {"story", s->story ? story_state(*s->story) : json(nullptr)},
                                   {"insights", s->insights ? to_json(*s->insights) : json(nullptr)}});
                   }));

        server.Get(sid + "/settings", session_route([](auto& s, auto&, auto& res) {
                       std::lock_guard lock(s->mutex);
                       reply_json(res, 200, to_json(s->settings));
                   }));

        server.Put(sid + "/settings", session_route([this](auto& s, auto& req, auto& res) {
                       auto body = body_json(req);
                       std::lock_guard lock(s->mutex);
                       if (s->run_state != RunState::idle)
                           throw HttpError{409, "conflict", "settings cannot change during a run"};
                       s->settings = settings_from_json(body, s->settings);
                       persist_state(*s);
                       reply_json(res, 200, to_json(s->settings));
                   }));

        server.Get(sid + "/notebook", session_route([](auto& s, auto&, auto& res) {
                       res.set_content(serialize_notebook(s->notebook.snapshot()), "application/x-ipynb+json");
                   }));

        server.Post(sid + "/query", session_route([this](auto& s, auto& req, auto& res) {
                        start_run(s, require_text(body_json(req), "text"), res);
                    }));

        server.Delete(sid + "/query", session_route([this](auto& s, auto&, auto& res) { stop_run(s, res); }));

        server.Get(sid + "/events", session_route([this](auto& s, auto& req, auto& res) { stream_events(s, req, res); }));

        server.Post(sid + "/clarify", session_route([this](auto& s, auto& req, auto& res) {
                        auto body = body_json(req);
                        auto cell = require_text(body, "cell_id");
                        auto question = require_text(body, "question");
                        llm::ModelRef model;
                        std::size_t budget = 0;
                        {
                            std::lock_guard lock(s->mutex);
                            model = s->settings.model_for(AgentRole::initial_respondent);
                            budget = s->settings.budget.context_budget;
                        }
                        auto answer = s->clarify.ask(gateway, s->notebook.snapshot(), cell, question, model, budget);
                        std::lock_guard lock(s->mutex);
                        persist_state(*s);
                        reply_json(res, 200, {{"answer", answer}, {"thread", to_json(*s->clarify.thread(cell))}});
                    }));

        server.Post(sid + "/insights", session_route([this](auto& s, auto&, auto& res) {
                        auto [model, budget] = model_and_budget(*s);
                        auto graph = extract_graph(gateway, s->notebook.snapshot(), model, budget);
                        std::lock_guard lock(s->mutex);
                        s->insights = graph;
                        persist_state(*s);
                        reply_json(res, 200, {{"graph", to_json(graph)}, {"mermaid", to_mermaid(graph)}});
                    }));

        server.Post(sid + "/insights/resolve", session_route([this](auto& s, auto& req, auto& res) {
                        auto body = body_json(req);
                        if (!body.contains("element"))
                            throw ValidationError("'element' is required");
                        auto element = element_from_json(body["element"]);
                        InsightGraph graph;
                        {
                            std::lock_guard lock(s->mutex);
                            if (!s->insights)
                                throw HttpError{409, "no_insights", "extract insights first"};
                            graph = *s->insights;
                        }
                        auto [model, budget] = model_and_budget(*s);
                        auto cell = resolve_cell(gateway, graph, element, s->notebook.snapshot(), model, budget);
                        reply_json(res, 200, {{"cell_id", cell}});
                    }));

        server.Post(sid + "/story", session_route([this](auto& s, auto& req, auto& res) {
                        auto body = body_json(req);
                        std::string instructions;
                        if (body.contains("instructions"))
                            instructions = require_text(body, "instructions");
                        StoryConfig config;
                        {
                            std::lock_guard lock(s->mutex);
                            config = s->settings.story_config();
                        }
                        if (config.mode == AgentMode::multi)
                            coverage_table(config.protocol);
                        auto out = generate_story(gateway, s->notebook.snapshot(), instructions, config);
                        std::lock_guard lock(s->mutex);
                        s->story = out.story;
                        persist_state(*s);
                        json reply{{"story", story_state(out.story)}, {"dropped", out.dropped}};
                        if (out.transcript)
                            reply["transcript"] = to_json(*out.transcript);
                        reply_json(res, 200, reply);
                    }));

        server.Post(sid + "/story/feedback", session_route([this](auto& s, auto& req, auto& res) {
                        auto body = body_json(req);
                        if (!body.contains("items") || !body["items"].is_array())
                            throw ValidationError("'items' must be a list");
                        std::vector<Feedback> items;
                        for (const auto& i: body["items"])
                            items.push_back(feedback_from_json(i));
                        StoryDocument story;
                        StoryConfig config;
                        {
                            std::lock_guard lock(s->mutex);
                            if (!s->story)
                                throw HttpError{409, "no_story", "generate a story first"};
                            story = *s->story;
                            config = s->settings.story_config();
                        }
                        auto out = apply_feedback(gateway, story, items, s->notebook.snapshot(), config);
                        std::lock_guard lock(s->mutex);
                        s->story = out.story;
                        persist_state(*s);
                        reply_json(res, 200, {{"story", story_state(out.story)}, {"dropped", out.dropped}});
                    }));

        server.Put(sid + "/story/blocks", session_route([this](auto& s, auto& req, auto& res) {
                       auto body = body_json(req);
                       if (!body.contains("blocks") || !body["blocks"].is_array())
                           throw ValidationError("'blocks' must be a list of {id, text}");
                       std::vector<BlockEdit> edits;
                       for (const auto& b: body["blocks"])
                           edits.push_back({require_text(b, "id"), require_text(b, "text")});
                       std::lock_guard lock(s->mutex);
                       if (!s->story)
                           throw HttpError{409, "no_story", "generate a story first"};
                       std::vector<std::string> dropped;
                       s->story = update_blocks(*s->story, edits, &dropped);
                       persist_state(*s);
                       reply_json(res, 200, {{"story", story_state(*s->story)}, {"dropped", dropped}});
                   }));

        server.Get(sid + "/story/export.html", session_route([](auto& s, auto&, auto& res) {
                       StoryDocument story;
                       {
                           std::lock_guard lock(s->mutex);
                           if (!s->story)
                               throw HttpError{404, "no_story", "generate a story first"};
                           story = *s->story;
                       }
                       res.set_content(export_html(story, s->notebook.snapshot()), "text/html; charset=utf-8");
                   }));
    }

    std::pair<llm::ModelRef, std::size_t> model_and_budget(const Session& s)
    {
        std::lock_guard lock(s.mutex);
        return {s.settings.model_for(AgentRole::initial_respondent), s.settings.budget.context_budget};
    }

    void create_session(const httplib::Request& req, httplib::Response& res)
    {
        Notebook nb;
        Settings settings = options.default_settings;
        if (!req.body.empty())
        {
            auto body = body_json(req);
            if (!body.is_object())
                throw ValidationError("body must be a notebook or {notebook, settings}");
            if (body.contains("cells"))
                nb = parse_notebook(req.body);
            else
            {
                if (body.contains("notebook") && !body["notebook"].is_null())
                    nb = parse_notebook(body["notebook"].is_string() ? body["notebook"].get<std::string>()
                                                                     : body["notebook"].dump());
                if (body.contains("settings"))
                    settings = settings_from_json(body["settings"], settings);
            }
        }
        validate(settings);
        auto s = make_session(new_session_id(), std::move(nb), std::move(settings));
        {
            std::lock_guard lock(s->mutex);
            persist_state(*s);
        }
        {
            std::lock_guard lock(sessions_mutex);
            sessions[s->id] = s;
        }
        reply_json(res, 201, {{"id", s->id}, {"settings", to_json(s->settings)}});
    }

    void shutdown()
    {
        std::vector<std::shared_ptr<Session>> all;
        {
            std::lock_guard lock(sessions_mutex);
            for (auto& [_, s]: sessions)
                all.push_back(s);
        }
        for (auto& s: all)
        {
            s->stop_requested = true;
            s->agent->stop();
        }
        for (auto& s: all)
            if (s->worker.joinable())
                s->worker.join();
        server.stop();
        if (server_thread.joinable())
            server_thread.join();
    }
};

SessionService::SessionService(llm::Gateway& gateway, ServiceOptions options)
    : _impl(std::make_unique<Impl>(gateway, std::move(options)))
{
}

SessionService::~SessionService()
{
    stop();
}

int SessionService::start(const std::string& host, int port)
{
    int bound = port == 0 ? _impl->server.bind_to_any_port(host) : (_impl->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0)
        throw ValidationError("cannot bind " + host + ":" + std::to_string(port));
    _impl->server_thread = std::thread([this] { _impl->server.listen_after_bind(); });
    _impl->server.wait_until_ready();
    return bound;
}

bool SessionService::listen(const std::string& host, int port)
{
    return _impl->server.listen(host, port);
}

void SessionService::stop()
{
    if (_impl)
        _impl->shutdown();
}

std::size_t SessionService::session_count() const
{
    std::lock_guard lock(_impl->sessions_mutex);
    return _impl->sessions.size();
}

} // namespace capy
