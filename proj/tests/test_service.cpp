// SPDX-License-Identifier: Apache-2.0
#include "capy/errors.hpp"
#include "capy/service.hpp"
#include "support/fake_executor.hpp"
#include "support/mermaid_oracle.hpp"
#include "support/scripts.hpp"

#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <thread>

using namespace capy;
using namespace capy::testing;
using namespace std::chrono_literals;

namespace
{

using Clock = std::chrono::steady_clock;

struct ReceivedEvent
{
    std::size_t id = 0;
    std::string name;
    json data;
    Clock::time_point at;
};

bool terminal_name(const std::string& n)
{
    return n == "loop_done" || n == "loop_stopped" || n == "loop_failed";
}

/// Reads an SSE stream until a terminal event arrives or the server closes it.
std::vector<ReceivedEvent> read_events(int port, const std::string& path, const std::string& last_id = {})
{
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(30s);
    httplib::Headers headers;
    if (!last_id.empty())
        headers.emplace("Last-Event-ID", last_id);
    std::vector<ReceivedEvent> out;
    std::string buf;
    cli.Get(path, headers, [&](const char* data, std::size_t n) {
        buf.append(data, n);
        std::size_t end;
        while ((end = buf.find("\n\n")) != std::string::npos)
        {
            auto frame = buf.substr(0, end);
            buf.erase(0, end + 2);
            ReceivedEvent e;
            e.at = Clock::now();
            std::istringstream lines(frame);
            for (std::string line; std::getline(lines, line);)
            {
                if (line.rfind("id: ", 0) == 0)
                    e.id = std::stoul(line.substr(4));
                else if (line.rfind("event: ", 0) == 0)
                    e.name = line.substr(7);
                else if (line.rfind("data: ", 0) == 0)
                    e.data = json::parse(line.substr(6));
            }
            out.push_back(e);
            if (terminal_name(e.name))
                return false;
        }
        return true;
    });
    return out;
}

std::vector<std::string> names(const std::vector<ReceivedEvent>& evs, bool skip_heartbeats = true)
{
    std::vector<std::string> out;
    for (const auto& e: evs)
        if (!skip_heartbeats || e.name != "heartbeat")
            out.push_back(e.name);
    return out;
}

Settings stub_settings()
{
    Settings s;
    s.default_model = stub_model();
    return s;
}

struct Harness
{
    llm::Gateway gw;
    std::unique_ptr<SessionService> service;
    int port = 0;
    std::unique_ptr<httplib::Client> cli;

    explicit Harness(ServiceOptions opts = {})
    {
        opts.default_settings = stub_settings();
        if (!opts.executor_factory)
            opts.executor_factory = [] {
                return std::make_unique<FakeExecutor>([](const std::string&) { return ok_result("aviation 0.31\n"); });
            };
        service = std::make_unique<SessionService>(gw, opts);
        port = service->start("127.0.0.1", 0);
        cli = std::make_unique<httplib::Client>("127.0.0.1", port);
        cli->set_read_timeout(30s);
    }

    std::string create(const json& body = json::object())
    {
        auto r = cli->Post("/sessions", body.dump(), "application/json");
        REQUIRE(r);
        REQUIRE(r->status == 201);
        return json::parse(r->body)["id"].get<std::string>();
    }

    httplib::Result post(const std::string& path, const json& body)
    {
        return cli->Post(path, body.dump(), "application/json");
    }

    httplib::Result put(const std::string& path, const json& body)
    {
        return cli->Put(path, body.dump(), "application/json");
    }

    json get_json(const std::string& path)
    {
        auto r = cli->Get(path);
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return json::parse(r->body);
    }
};

std::vector<llm::ScriptEntry> three_turns(int delay_ms = 0)
{
    std::vector<llm::ScriptEntry> s = {entry(envelope("markdown", "## Plan\nGroup by sector.", false)),
                                       entry(envelope("code", "df.groupby('sector').gap.median()", false)),
                                       entry(envelope("markdown", "Aviation has the largest gap.", true))};
    for (auto& e: s)
        e.delay_ms = delay_ms;
    return s;
}

const std::string kPng = "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==";

Notebook analysed_notebook()
{
    Notebook nb;
    nb.append_cell(CellKind::markdown, "# Gender pay gap", Provenance::user);
    auto c = nb.append_cell(CellKind::code, "gap.plot.bar()", Provenance::assistant);
    nb.set_execution(c, {Output::display("image/png", kPng)}, 1);
    auto t = nb.append_cell(CellKind::code, "gap.describe()", Provenance::assistant);
    nb.set_execution(t, {Output::stdout_text("median gap 0.17 aviation widest\n")}, 2);
    return nb;
}

std::filesystem::path fresh_dir(const std::string& name)
{
    auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    return d;
}

} // namespace

TEST_CASE("listen address parsing")
{
    CHECK(parse_listen_addr("").port == 8765);
    auto a = parse_listen_addr("0.0.0.0:9000");
    CHECK(a.host == "0.0.0.0");
    CHECK(a.port == 9000);
    CHECK(parse_listen_addr(":81").host == "127.0.0.1");
    CHECK(parse_listen_addr("localhost").host == "localhost");
    CHECK_THROWS_AS(parse_listen_addr("host:http"), ValidationError);
    CHECK_THROWS_AS(parse_listen_addr("host:70000"), ValidationError);
}

TEST_CASE("sessions: create, read the notebook, error mapping")
{
    Harness h;
    auto empty = h.create();
    auto nb = json::parse(h.cli->Get("/sessions/" + empty + "/notebook")->body);
    CHECK(nb["nbformat"] == 4);
    CHECK(nb["cells"].empty());

    auto original = analysed_notebook();
    auto raw = h.cli->Post("/sessions", serialize_notebook(original), "application/json");
    REQUIRE(raw->status == 201);
    auto id = json::parse(raw->body)["id"].get<std::string>();
    CHECK(h.cli->Get("/sessions/" + id + "/notebook")->body == serialize_notebook(original));

    auto wrapped = h.create({{"notebook", json::parse(serialize_notebook(original))}, {"settings", {{"max_rounds", 3}}}});
    CHECK(h.get_json("/sessions/" + wrapped + "/settings")["max_rounds"] == 3);
    CHECK(h.service->session_count() == 3);

    CHECK(h.cli->Get("/sessions/nope")->status == 404);
    CHECK(h.cli->Post("/sessions", "{broken", "application/json")->status == 400);
    CHECK(h.post("/sessions", {{"settings", {{"max_rounds", 0}}}})->status == 422);
    CHECK(h.cli->Post("/sessions", R"({"nbformat": 3, "cells": []})", "application/json")->status == 422);
    CHECK(h.cli->Get("/sessions/" + id + "/events")->status == 404);
    auto bad = h.post("/sessions/" + id + "/query", {{"text", ""}});
    CHECK(bad->status == 422);
    CHECK(json::parse(bad->body)["code"] == "validation_error");
    CHECK(h.post("/sessions/" + id + "/query", {{"q", "x"}})->status == 422);
}

TEST_CASE("a query run streams its events and appends the cells")
{
    Harness h;
    install(h.gw, three_turns());
    auto id = h.create();
    auto r = h.post("/sessions/" + id + "/query", {{"text", "What is the median gap?"}});
    REQUIRE(r->status == 202);
    CHECK(json::parse(r->body)["run"] == 1);

    auto evs = read_events(h.port, "/sessions/" + id + "/events");
    CHECK(names(evs) == std::vector<std::string>{"run_started", "cell_appended", "cell_appended", "execution_started",
                                                 "execution_finished", "cell_appended", "loop_done"});
    for (std::size_t i = 0; i < evs.size(); ++i)
    {
        CHECK(evs[i].id == i + 1);
        CHECK(evs[i].data["run"] == 1);
    }
    CHECK(evs.front().data["query"] == "What is the median gap?");

    auto nb = parse_notebook(h.cli->Get("/sessions/" + id + "/notebook")->body);
    CHECK(nb.size() == 3);
    CHECK(h.get_json("/sessions/" + id)["run_state"] == "idle");
}

TEST_CASE("late subscribers replay the whole run in order")
{
    Harness h;
    install(h.gw, three_turns(300));
    auto id = h.create();
    REQUIRE(h.post("/sessions/" + id + "/query", {{"text", "gap?"}})->status == 202);

    std::this_thread::sleep_for(450ms);
    auto mid = read_events(h.port, "/sessions/" + id + "/events?run=1");
    auto after = read_events(h.port, "/sessions/" + id + "/events?run=1");
    REQUIRE_FALSE(after.empty());
    CHECK(after.back().name == "loop_done");
    CHECK(names(mid, false) == names(after, false));
    for (std::size_t i = 0; i < after.size(); ++i)
    {
        CHECK(after[i].id == i + 1);
        CHECK(mid[i].data == after[i].data);
    }

    // Resuming after event 3 yields exactly the remainder.
    auto rest = read_events(h.port, "/sessions/" + id + "/events", "3");
    REQUIRE(rest.size() == after.size() - 3);
    CHECK(rest.front().id == 4);
    CHECK(h.cli->Get("/sessions/" + id + "/events?run=2")->status == 404);
}

TEST_CASE("heartbeats keep the stream alive during a slow model call")
{
    Harness h;
    auto turns = three_turns();
    turns[0].delay_ms = 5500;
    install(h.gw, turns);
    auto id = h.create();
    REQUIRE(h.post("/sessions/" + id + "/query", {{"text", "gap?"}})->status == 202);
    auto start = Clock::now();
    auto evs = read_events(h.port, "/sessions/" + id + "/events");
    REQUIRE_FALSE(evs.empty());
    CHECK(evs.back().name == "loop_done");

    int beats = 0;
    auto prev = start;
    for (const auto& e: evs)
    {
        CHECK(e.at - prev <= 5s);
        prev = e.at;
        if (e.name == "heartbeat")
        {
            ++beats;
            CHECK(e.data["stage"] == "waiting_for_model");
            CHECK(e.data["elapsed_ms"].get<long long>() > 0);
        }
    }
    CHECK(beats >= 2);
}

TEST_CASE("mutations conflict with an active run; stop ends it")
{
    Harness h;
    install(h.gw, three_turns(1500));
    auto id = h.create();
    auto base = "/sessions/" + id;
    REQUIRE(h.post(base + "/query", {{"text", "gap?"}})->status == 202);

    auto again = h.post(base + "/query", {{"text", "again"}});
    CHECK(again->status == 409);
    CHECK(json::parse(again->body)["code"] == "conflict");
    CHECK(h.put(base + "/settings", {{"max_rounds", 3}})->status == 409);
    CHECK(h.get_json(base)["run_state"] == "running");

    auto stop = h.cli->Delete(base + "/query");
    CHECK(stop->status == 202);
    auto evs = read_events(h.port, base + "/events");
    REQUIRE_FALSE(evs.empty());
    CHECK(evs.back().name == "loop_stopped");
    CHECK(h.get_json(base)["run_state"] == "idle");

    CHECK(h.cli->Delete(base + "/query")->status == 200);
    CHECK(h.put(base + "/settings", {{"max_rounds", 0}})->status == 422);
    auto ok = h.put(base + "/settings", {{"max_rounds", 3}, {"eda_mode", "multi"}});
    CHECK(ok->status == 200);
    CHECK(json::parse(ok->body)["max_rounds"] == 3);
}

TEST_CASE("clarify, insights and story routes")
{
    Harness h;
    auto nb = analysed_notebook();
    auto chart = nb.cells()[1].id;
    auto stats = nb.cells()[2].id;
    auto raw = h.cli->Post("/sessions", serialize_notebook(nb), "application/json");
    auto id = json::parse(raw->body)["id"].get<std::string>();
    auto base = "/sessions/" + id;

    InsightGraph g;
    g.questions.push_back({"How large is the gap?",
                           {{"data", "salary records", NodeKind::data_derived},
                            {"widest", "aviation widest", NodeKind::data_derived}},
                           {{"data", "widest", "rank sectors"}}});
    json story{{"blocks",
                {{{"id", "b1"}, {"kind", "heading"}, {"text", "Pay gap"}},
                 {{"id", "b2"}, {"kind", "paragraph"}, {"text", "Aviation pays women far less."}},
                 {{"id", "b3"}, {"kind", "figure_ref"}, {"text", "Median gap by sector"}, {"cell_id", chart}}}},
               {"annotations",
                {{{"block_id", "b2"}, {"start", 0}, {"end", 8}, {"dimension", "semantic"}, {"explanation", "Names it."}}}}};
    json revised = story;
    revised["blocks"][1]["text"] = "Aviation pays women 31% less.";
    install(h.gw, {entry("The chart shows median gaps.", "What does the chart show?"),
                   entry("Bars are sectors.", "The chart shows median gaps."), entry(to_json(g).dump()),
                   entry(json{{"cell_id", stats}}.dump()), entry(story.dump(), "Focus on aviation"),
                   entry(revised.dump(), "far less")});

    auto c1 = h.post(base + "/clarify", {{"cell_id", chart}, {"question", "What does the chart show?"}});
    REQUIRE(c1->status == 200);
    CHECK(json::parse(c1->body)["answer"] == "The chart shows median gaps.");
    auto c2 = h.post(base + "/clarify", {{"cell_id", chart}, {"question", "And the bars?"}});
    CHECK(json::parse(c2->body)["thread"]["turns"].size() == 2);
    CHECK(h.post(base + "/clarify", {{"cell_id", "capy-ffffffff"}, {"question", "?"}})->status == 404);

    CHECK(h.post(base + "/insights/resolve", {{"element", {{"question", 0}, {"node", "data"}}}})->status == 409);
    auto ins = h.post(base + "/insights", json::object());
    REQUIRE(ins->status == 200);
    auto ij = json::parse(ins->body);
    CHECK(graph_from_json(ij["graph"]) == g);
    auto parsed = parse_mermaid(ij["mermaid"].get<std::string>());
    REQUIRE(parsed.questions.size() == 1);
    CHECK(parsed.questions[0].nodes.size() == 2);
    auto res = h.post(base + "/insights/resolve", {{"element", {{"question", 0}, {"node", "widest"}}}});
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["cell_id"] == stats);

    CHECK(h.cli->Get(base + "/story/export.html")->status == 404);
    auto st = h.post(base + "/story", {{"instructions", "Focus on aviation"}});
    REQUIRE(st->status == 200);
    auto sj = json::parse(st->body);
    CHECK(sj["story"]["blocks"].size() == 3);
    CHECK(sj["story"]["instructions"] == "Focus on aviation");

    auto bad = h.post(base + "/story/feedback",
                      {{"items", {{{"scope", "local"}, {"text", "x"}, {"anchor", {{"block_id", "b2"}, {"start", 5}, {"end", 99}}}}}}});
    CHECK(bad->status == 422);
    auto fb = h.post(base + "/story/feedback",
                     {{"items",
                       {{{"scope", "local"}, {"text", "Use the number."}, {"anchor", {{"block_id", "b2"}, {"start", 20}, {"end", 28}}}}}}});
    REQUIRE(fb->status == 200);
    CHECK(json::parse(fb->body)["story"]["blocks"][1]["text"] == "Aviation pays women 31% less.");

    auto ed = h.put(base + "/story/blocks", {{"blocks", {{{"id", "b2"}, {"text", "Pilots earn more."}}}}});
    REQUIRE(ed->status == 200);
    CHECK(json::parse(ed->body)["story"]["annotations"].empty());
    CHECK(h.put(base + "/story/blocks", {{"blocks", {{{"id", "b9"}, {"text", "x"}}}}})->status == 404);

    auto html = h.cli->Get(base + "/story/export.html");
    REQUIRE(html->status == 200);
    CHECK(html->get_header_value("Content-Type").rfind("text/html", 0) == 0);
    CHECK(html->body.find("Pilots earn more.") != std::string::npos);
    CHECK(html->body.find("data:image/png;base64," + kPng) != std::string::npos);
}

TEST_CASE("model failures map to 502 and the session stays usable")
{
    Harness h;
    install(h.gw, {});
    auto id = h.create({{"notebook", json::parse(serialize_notebook(analysed_notebook()))}});
    auto base = "/sessions/" + id;
    auto r = h.post(base + "/insights", json::object());
    CHECK(r->status == 502);
    CHECK(json::parse(r->body)["code"] == "stub_exhausted");
    CHECK(h.post(base + "/story", json::object())->status == 502);
    CHECK(h.post(base + "/clarify", {{"cell_id", "capy-00000000"}, {"question", "?"}})->status == 404);
}

TEST_CASE("sessions persist and are restored")
{
    auto dir = fresh_dir("capy_service_state");
    std::string id;
    std::string chart;
    {
        ServiceOptions opts;
        opts.state_dir = dir.string();
        Harness h(opts);
        install(h.gw, three_turns());
        id = h.create({{"settings", {{"max_rounds", 3}}}});
        REQUIRE(h.post("/sessions/" + id + "/query", {{"text", "gap?"}})->status == 202);
        read_events(h.port, "/sessions/" + id + "/events");
        auto nb = parse_notebook(h.cli->Get("/sessions/" + id + "/notebook")->body);
        chart = nb.cells()[0].id;
        install(h.gw, {entry("It is the plan.")});
        REQUIRE(h.post("/sessions/" + id + "/clarify", {{"cell_id", chart}, {"question", "What is this?"}})->status ==
                200);
        CHECK(std::filesystem::exists(dir / id / "notebook.ipynb"));
        CHECK(std::filesystem::exists(dir / id / "state.json"));
    }
    ServiceOptions opts;
    opts.state_dir = dir.string();
    Harness h(opts);
    CHECK(h.service->session_count() == 1);
    auto s = h.get_json("/sessions/" + id);
    CHECK(s["settings"]["max_rounds"] == 3);
    REQUIRE(s["threads"].size() == 1);
    CHECK(s["threads"][0]["cell_id"] == chart);
    CHECK(s["runs"] == 0);
    auto nb = parse_notebook(h.cli->Get("/sessions/" + id + "/notebook")->body);
    CHECK(nb.size() == 3);
    std::filesystem::remove_all(dir);
}
