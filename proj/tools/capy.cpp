// SPDX-License-Identifier: Apache-2.0
// capy: headless driver for queries, stories, insight graphs, protocol
// replays and the session service.

#include "capy/errors.hpp"
#include "capy/insights.hpp"
#include "capy/prompts.hpp"
#include "capy/service.hpp"
#include "capy/settings.hpp"
#include "capy/story.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

using namespace capy;

namespace
{

struct Common
{
    std::string config;
    std::string stub;
    std::string notebook;
    bool multi = false;
    int max_rounds = 0;
};

Settings load_settings(const Common& c)
{
    Settings s;
    auto path = c.config;
    if (path.empty() && std::filesystem::exists("capy.toml"))
        path = "capy.toml";
    if (!path.empty())
        s = settings_from_toml_file(path, s);
    if (!c.stub.empty())
    {
        // A transcript answers for every role.
        s.default_model = {llm::ProviderKind::scripted, "stub", c.stub};
        s.model_by_role.clear();
    }
    if (c.max_rounds != 0)
        s.max_rounds = c.max_rounds;
    validate(s);
    return s;
}

Notebook load_or_empty(const std::string& path)
{
    if (!std::filesystem::exists(path))
        return Notebook{};
    return load_notebook(path);
}

int cmd_query(const Common& c, const std::string& query, const std::string& out)
{
    auto settings = load_settings(c);
    if (c.multi)
        settings.eda_mode = AgentMode::multi;
    auto config = settings.eda_config();
    if (config.mode == AgentMode::multi)
        coverage_table(config.protocol);

    llm::Gateway gw;
    Executor executor;
    SharedNotebook nb;
    nb.replace(load_or_empty(c.notebook));
    auto target = out.empty() ? c.notebook : out;
    nb.set_commit_hook([&](const Notebook& n) { save_notebook_atomic(n, target); });

    EdaAgent agent(gw, executor, nb);
    auto last = agent.run_query(query, config, [](const LoopEvent& e) { std::cout << to_json(e).dump() << "\n" << std::flush; });
    save_notebook_atomic(nb.snapshot(), target);
    std::cerr << "capy: " << to_string(last.kind) << ", " << gw.ledger().count() << " model calls\n";
    return last.kind == LoopEventKind::loop_done ? 0 : 1;
}

int cmd_story(const Common& c, const std::string& instructions, const std::string& out, const std::string& json_out)
{
    auto settings = load_settings(c);
    if (c.multi)
        settings.story_mode = AgentMode::multi;
    auto config = settings.story_config();
    if (config.mode == AgentMode::multi)
        coverage_table(config.protocol);

    llm::Gateway gw;
    auto nb = load_notebook(c.notebook);
    auto outcome = generate_story(gw, nb, instructions, config);
    for (const auto& d: outcome.dropped)
        std::cerr << "capy: dropped annotation " << d << "\n";
    write_file_atomic(out, export_html(outcome.story, nb));
    if (!json_out.empty())
    {
        auto j = to_json(outcome.story);
        if (outcome.transcript)
            j["transcript"] = to_json(*outcome.transcript);
        write_file_atomic(json_out, j.dump(2) + "\n");
    }
    std::cerr << "capy: story with " << outcome.story.blocks.size() << " blocks and "
              << outcome.story.annotations.size() << " annotations\n";
    return 0;
}

int cmd_insights(const Common& c, const std::string& out, const std::string& json_out)
{
    auto settings = load_settings(c);
    llm::Gateway gw;
    auto nb = load_notebook(c.notebook);
    auto graph = extract_graph(gw, nb, settings.model_for(AgentRole::initial_respondent), settings.budget.context_budget);
    write_file_atomic(out, to_mermaid(graph));
    if (!json_out.empty())
        write_file_atomic(json_out, to_json(graph).dump(2) + "\n");
    std::cerr << "capy: " << graph.questions.size() << " questions\n";
    return 0;
}

void print_accounting(const CritiqueTranscript& t, const ProtocolConfig& pc, const llm::CallLedger& ledger)
{
    std::size_t critics = 0;
    for (auto r: pc.roles)
        critics += r != AgentRole::initial_respondent && r != AgentRole::refiner;
    std::size_t decisions = 0;
    for (const auto& r: t.rounds)
        decisions += r.decision.has_value();
    auto expected = 1 + t.rounds.size() * critics + decisions;

    std::cout << "task: " << to_string(pc.task) << "\n"
              << "rounds: " << t.rounds.size() << "\n"
              << "waves: " << t.wave_count << "\n"
              << "termination: " << to_string(t.termination) << "\n"
              << "decisions: " << decisions << "\n"
              << "calls: " << ledger.count() << " (1 + " << t.rounds.size() << "*" << critics << " + " << decisions
              << " = " << expected << ")\n";
    std::map<std::string, std::size_t> per_role;
    for (const auto& rec: ledger.records())
        ++per_role[rec.role_tag];
    for (const auto& [role, n]: per_role)
        std::cout << "  " << role << ": " << n << "\n";
    if (t.degraded)
        std::cout << "degraded: " << t.error << "\n";
}

int cmd_replay(Common c, const std::string& transcript, const std::string& task, const std::string& query)
{
    c.stub = transcript;
    auto settings = load_settings(c);
    llm::Gateway gw;
    auto nb = c.notebook.empty() ? Notebook{} : load_notebook(c.notebook);

    if (task == "story")
    {
        auto config = settings.story_config();
        config.mode = AgentMode::multi;
        auto outcome = generate_story(gw, nb, query, config);
        print_accounting(*outcome.transcript, config.protocol, gw.ledger());
        return 0;
    }

    auto pc = settings.protocol(TaskKind::eda_turn);
    auto context = render_context(nb, settings.budget.context_budget);
    std::vector<llm::ChatMessage> messages = {
        llm::ChatMessage::system(prompts::render("eda_system", {{"language", nb.kernel_language()}})),
        llm::ChatMessage::user(prompts::render(
            "eda_turn", {{"query", query},
                         {"notebook_context", context.empty() ? "(empty notebook)" : context},
                         {"last_result", "(nothing has been executed yet)"}})),
    };
    auto result = run_protocol(gw, eda_protocol_task(query, context, std::move(messages)), pc);
    print_accounting(result.transcript, pc, gw.ledger());
    return 0;
}

SessionService* g_service = nullptr;

void on_signal(int)
{
    if (g_service)
        std::thread([] { g_service->stop(); }).detach();
}

int cmd_serve(const Common& c, std::string listen, const std::string& state_dir)
{
    auto options = service_options_from_environment();
    options.default_settings = load_settings(c);
    if (!state_dir.empty())
        options.state_dir = state_dir;
    if (listen.empty())
        if (const char* env = std::getenv("CAPY_LISTEN_ADDR"))
            listen = env;
    auto addr = parse_listen_addr(listen);

    llm::Gateway gw;
    SessionService service(gw, options);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "capy: serving on " << addr.host << ":" << addr.port << "\n";
    bool ok = service.listen(addr.host, addr.port);
    g_service = nullptr;
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Notebook analysis and storytelling agents"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config, "Settings file (default: ./capy.toml when present)");

    auto add_common = [&](CLI::App* sub, bool notebook_required) {
        auto* n = sub->add_option("-n,--notebook", common.notebook, "Notebook file");
        if (notebook_required)
            n->required();
        sub->add_option("--stub", common.stub, "Scripted transcript answering every model call");
        sub->add_option("--max-rounds", common.max_rounds, "Critique rounds in multi-agent mode")
            ->check(CLI::PositiveNumber);
    };

    std::string query, out, json_out, instructions, transcript, task = "eda", listen, state_dir;

    auto* q = app.add_subcommand("query", "Run a query and append the resulting cells to the notebook");
    add_common(q, true);
    q->add_option("-q,--query", query, "Question for the agent")->required();
    q->add_flag("--multi", common.multi, "Use the critic/refiner protocol for every turn");
    q->add_option("-o,--output", out, "Write the notebook here instead of in place");

    auto* s = app.add_subcommand("story", "Generate an annotated story and export it as HTML");
    add_common(s, true);
    s->add_option("-i,--instructions", instructions, "Storytelling instructions");
    s->add_option("-o,--output", out, "HTML output file")->required();
    s->add_option("--json", json_out, "Also write the story document as JSON");
    s->add_flag("--multi", common.multi, "Refine the draft with critics");

    auto* ins = app.add_subcommand("insights", "Summarize the notebook as an insight graph");
    add_common(ins, true);
    ins->add_option("-o,--output", out, "Mermaid output file")->required();
    ins->add_option("--json", json_out, "Also write the graph as JSON");

    auto* r = app.add_subcommand("replay", "Run one critique protocol against a transcript and print its accounting");
    r->add_option("-t,--transcript", transcript, "Scripted transcript")->required()->check(CLI::ExistingFile);
    r->add_option("-n,--notebook", common.notebook, "Notebook for context");
    r->add_option("-q,--query", query, "Query or storytelling instructions");
    r->add_option("--task", task, "eda or story")->check(CLI::IsMember({"eda", "story"}));
    r->add_option("--max-rounds", common.max_rounds, "Critique round cap")->check(CLI::PositiveNumber);

    auto* sv = app.add_subcommand("serve", "Run the HTTP session service");
    sv->add_option("--listen", listen, "host:port (default CAPY_LISTEN_ADDR or 127.0.0.1:8765)");
    sv->add_option("--state-dir", state_dir, "Session directory (default CAPY_STATE_DIR)");
    sv->add_option("--stub", common.stub, "Scripted transcript answering every model call");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (q->parsed())
            return cmd_query(common, query, out);
        if (s->parsed())
            return cmd_story(common, instructions, out, json_out);
        if (ins->parsed())
            return cmd_insights(common, out, json_out);
        if (r->parsed())
            return cmd_replay(common, transcript, task, query);
        return cmd_serve(common, listen, state_dir);
    }
    catch (const Error& e)
    {
        std::cerr << "capy: " << e.code() << ": " << e.what() << "\n";
    }
    catch (const std::exception& e)
    {
        std::cerr << "capy: " << e.what() << "\n";
    }
    return 1;
}
