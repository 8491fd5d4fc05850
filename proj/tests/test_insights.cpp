// SPDX-License-Identifier: Apache-2.0
#include "capy/errors.hpp"
#include "capy/insights.hpp"
#include "support/generators.hpp"
#include "support/mermaid_oracle.hpp"
#include "support/scripts.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace capy;
using namespace capy::testing;

namespace
{

std::string noisy_label(Rng& rng)
{
    static const std::vector<std::string> extras = {"#", "\"", "|", "<b>", "a > b", "\n", "#35;", "50%", "[x]", "(y)"};
    auto s = random_words(rng, 1, 6);
    if (coin(rng, 0.4))
        s += " " + extras[pick(rng, extras.size())];
    return s;
}

InsightGraph random_graph(Rng& rng)
{
    InsightGraph g;
    auto nq = pick(rng, 4);
    for (std::size_t qi = 0; qi < nq; ++qi)
    {
        InsightQuestion q;
        q.question = noisy_label(rng) + "?";
        auto nn = 1 + pick(rng, 7);
        for (std::size_t i = 0; i < nn; ++i)
            q.nodes.push_back({"n" + std::to_string(i) + (coin(rng, 0.2) ? "_x" : ""), noisy_label(rng),
                               coin(rng, 0.7) ? NodeKind::data_derived : NodeKind::external_knowledge});
        // Edges follow a random topological order, so the result is acyclic.
        std::vector<std::size_t> order(nn);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t a = 0; a < nn; ++a)
            for (std::size_t b = a + 1; b < nn; ++b)
                if (coin(rng, 0.3))
                    q.edges.push_back({q.nodes[order[a]].id, q.nodes[order[b]].id, noisy_label(rng)});
        g.questions.push_back(std::move(q));
    }
    return g;
}

InsightGraph pay_gap_graph()
{
    InsightGraph g;
    g.questions.push_back({"How large is the gender pay gap across industries?",
                           {{"data", "salary records", NodeKind::data_derived},
                            {"gap", "median gap per industry", NodeKind::data_derived},
                            {"widest", "aviation has the widest gap", NodeKind::data_derived},
                            {"context", "aviation pilots are mostly men", NodeKind::external_knowledge}},
                           {{"data", "gap", "group by industry and compare medians"},
                            {"gap", "widest", "rank industries"},
                            {"context", "widest", "explain with workforce composition"}}});
    return g;
}

std::string graph_reply(const InsightGraph& g)
{
    return to_json(g).dump();
}

// Oracle: lower-cased whole-word search, written without the tokenizer.
bool is_word_byte(unsigned char c)
{
    return std::isalnum(c) || c >= 0x80;
}

std::string lower(std::string s)
{
    for (auto& c: s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool contains_word(const std::string& hay, const std::string& word)
{
    for (auto pos = hay.find(word); pos != std::string::npos; pos = hay.find(word, pos + 1))
    {
        bool left = pos == 0 || !is_word_byte(static_cast<unsigned char>(hay[pos - 1]));
        auto end = pos + word.size();
        bool right = end == hay.size() || !is_word_byte(static_cast<unsigned char>(hay[end]));
        if (left && right)
            return true;
    }
    return false;
}

std::string oracle_cell_text(const Cell& c)
{
    std::string s = c.source;
    for (const auto& o: c.outputs)
    {
        s += "\n";
        switch (o.kind)
        {
            case OutputKind::stream_stdout:
            case OutputKind::stream_stderr: s += o.text; break;
            case OutputKind::rich:
                if (!o.mime_type.starts_with("image/"))
                    s += o.text;
                break;
            case OutputKind::error: s += o.ename + " " + o.evalue; break;
        }
    }
    return s;
}

std::string oracle_best_cell(const std::string& query, const Notebook& nb)
{
    std::string spaced = lower(query);
    for (auto& c: spaced)
        if (!is_word_byte(static_cast<unsigned char>(c)))
            c = ' ';
    std::vector<std::string> words;
    std::istringstream in(spaced);
    for (std::string w; in >> w;)
        if (std::find(words.begin(), words.end(), w) == words.end())
            words.push_back(w);

    std::string best;
    std::size_t best_score = 0;
    for (const auto& cell: nb.cells())
    {
        auto hay = lower(oracle_cell_text(cell));
        std::size_t score = 0;
        for (const auto& w: words)
            score += contains_word(hay, w);
        if (best.empty() || score >= best_score)
        {
            best = cell.id;
            best_score = score;
        }
    }
    return best;
}

Notebook analysis_notebook()
{
    Notebook nb;
    nb.append_cell(CellKind::markdown, "# Pay gap analysis", Provenance::user);
    auto load = nb.append_cell(CellKind::code, "df = pd.read_csv('salaries.csv')\ndf.head()", Provenance::assistant);
    nb.set_execution(load, {Output::result("text/plain", "salary records: 5000 rows", 1)}, 1);
    auto gap = nb.append_cell(CellKind::code, "df.groupby('industry').median()", Provenance::assistant);
    nb.set_execution(gap, {Output::stdout_text("aviation 0.31\nlaw 0.18\n")}, 2);
    return nb;
}

} // namespace

TEST_CASE("validate_graph accepts the scenario graph with one external node")
{
    auto g = pay_gap_graph();
    CHECK_FALSE(validate_graph(g));
    auto doc = to_mermaid(g);
    std::size_t green = 0;
    for (auto pos = doc.find(":::greenNode"); pos != std::string::npos; pos = doc.find(":::greenNode", pos + 1))
        ++green;
    CHECK(green == 1);
    CHECK(doc.find("q1_context -->|explain with workforce composition| q1_widest") != std::string::npos);
}

TEST_CASE("validate_graph rejects each broken invariant")
{
    auto base = pay_gap_graph();
    auto broken = [&](auto mutate) {
        auto g = base;
        mutate(g.questions[0]);
        return validate_graph(g);
    };
    CHECK(broken([](InsightQuestion& q) { q.edges.push_back({"widest", "data", "loop back"}); })->find("cycle") !=
          std::string::npos);
    CHECK(broken([](InsightQuestion& q) { q.edges.push_back({"gap", "gap", "self"}); })->find("self-loop") !=
          std::string::npos);
    CHECK(broken([](InsightQuestion& q) { q.edges.push_back({"gap", "elsewhere", "x"}); }));
    CHECK(broken([](InsightQuestion& q) { q.edges[0].operation = "  "; }));
    CHECK(broken([](InsightQuestion& q) { q.nodes[1].id = "data"; })->find("duplicate") != std::string::npos);
    CHECK(broken([](InsightQuestion& q) { q.nodes[0].id = "has space"; }));
    CHECK(broken([](InsightQuestion& q) { q.nodes[0].label = ""; }));
    CHECK(broken([](InsightQuestion& q) { q.question = "\n"; }));

    // Endpoints may not reach into another question.
    auto two = base;
    two.questions.push_back({"Second?", {{"x", "x", NodeKind::data_derived}}, {{"x", "gap", "cross"}}});
    CHECK(validate_graph(two));
}

TEST_CASE("validate_graph agrees with a reachability oracle on random edge sets")
{
    Rng rng(42);
    for (int trial = 0; trial < 300; ++trial)
    {
        auto n = 1 + pick(rng, 6);
        InsightQuestion q{"q?", {}, {}};
        for (std::size_t i = 0; i < n; ++i)
            q.nodes.push_back({"n" + std::to_string(i), "label", NodeKind::data_derived});
        std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                if (a != b && coin(rng, 0.2))
                {
                    q.edges.push_back({q.nodes[a].id, q.nodes[b].id, "op"});
                    reach[a][b] = true;
                }
        // Floyd-Warshall closure; a cycle is any node reaching itself.
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                    if (reach[a][k] && reach[k][b])
                        reach[a][b] = true;
        bool cyclic = false;
        for (std::size_t a = 0; a < n; ++a)
            cyclic = cyclic || reach[a][a];
        InsightGraph g{{q}};
        INFO("trial " << trial);
        CHECK(validate_graph(g).has_value() == cyclic);
    }
}

TEST_CASE("to_mermaid reparses to the same graph on 100 random graphs")
{
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial)
    {
        auto g = random_graph(rng);
        REQUIRE_FALSE(validate_graph(g));
        auto doc = to_mermaid(g);
        INFO("trial " << trial << "\n" << doc);
        InsightGraph back;
        REQUIRE_NOTHROW(back = parse_mermaid(doc));
        CHECK(back == g);
        CHECK(to_mermaid(back) == doc);
    }
}

TEST_CASE("to_mermaid of an empty graph is the header only")
{
    auto doc = to_mermaid({});
    CHECK(doc.starts_with("flowchart TD\n"));
    CHECK(doc.find("subgraph") == std::string::npos);
    CHECK(parse_mermaid(doc).questions.empty());
    CHECK(doc.find("#F7E7A1") != std::string::npos);
    CHECK(doc.find("#BBE5B3") != std::string::npos);
}

TEST_CASE("graph json round trip and shape errors")
{
    auto g = pay_gap_graph();
    CHECK(graph_from_json(to_json(g)) == g);
    CHECK_THROWS_AS(graph_from_json(json{{"questions", 3}}), ExtractionError);
    CHECK_THROWS_AS(graph_from_json(json::parse(R"({"questions":[{"question":"q","nodes":[{"id":"a","label":"b","kind":"guess"}]}]})")),
                    ExtractionError);
    CHECK_THROWS_AS(parse_graph_reply("{\"questions\": []}"), ExtractionError);
    CHECK(parse_graph_reply("Here it is:\n```json\n" + graph_reply(g) + "\n```") == g);
}

TEST_CASE("extract_graph repairs a cyclic reply once")
{
    llm::Gateway gw;
    auto cyclic = pay_gap_graph();
    cyclic.questions[0].edges.push_back({"widest", "data", "revisit"});
    auto p = install(gw, {entry(graph_reply(cyclic), "salary records"), entry(graph_reply(pay_gap_graph()), "cycle")});
    auto g = extract_graph(gw, analysis_notebook(), stub_model());
    CHECK(g == pay_gap_graph());
    CHECK(p->consumed() == 2);
    CHECK(gw.ledger().count_for("insights") == 2);
}

TEST_CASE("extract_graph gives up after the repair")
{
    llm::Gateway gw;
    auto cyclic = pay_gap_graph();
    cyclic.questions[0].edges.push_back({"widest", "data", "revisit"});
    auto p = install(gw, {entry(graph_reply(cyclic)), entry(graph_reply(cyclic)), entry(graph_reply(pay_gap_graph()))});
    CHECK_THROWS_AS(extract_graph(gw, analysis_notebook(), stub_model()), ExtractionError);
    CHECK(p->consumed() == 2);
}

TEST_CASE("extract_graph on a notebook without analysis")
{
    llm::Gateway gw;
    Notebook nb;
    nb.append_cell(CellKind::code, "df = pd.read_csv('salaries.csv')", Provenance::user);
    InsightGraph g;
    g.questions.push_back({"What does the dataset contain?", {{"raw", "salary table", NodeKind::data_derived}}, {}});
    install(gw, {entry(graph_reply(g))});
    auto out = extract_graph(gw, nb, stub_model());
    REQUIRE(out.questions.size() == 1);
    CHECK(std::count_if(out.questions[0].nodes.begin(), out.questions[0].nodes.end(),
                        [](const InsightNode& n) { return n.kind == NodeKind::data_derived; }) >= 1);
    CHECK_THROWS_AS(extract_graph(gw, Notebook{}, stub_model()), ValidationError);
}

TEST_CASE("element lookup")
{
    auto g = pay_gap_graph();
    CHECK(element_text(g, element_from_json(json{{"question", 0}, {"node", "gap"}})) == "median gap per industry");
    CHECK(element_text(g, element_from_json(json{{"question", 0}, {"edge", {{"from", "gap"}, {"to", "widest"}}}})) ==
          "rank industries");
    CHECK_THROWS_AS(element_text(g, element_from_json(json{{"question", 1}, {"node", "gap"}})), ValidationError);
    CHECK_THROWS_AS(element_text(g, element_from_json(json{{"node", "nope"}})), ValidationError);
    CHECK_THROWS_AS(element_from_json(json{{"question", 0}}), ValidationError);
}

TEST_CASE("resolve_cell uses a valid model answer")
{
    llm::Gateway gw;
    auto nb = analysis_notebook();
    auto target = nb.cells()[1].id;
    install(gw, {entry(json{{"cell_id", target}}.dump(), "median gap per industry")});
    auto got = resolve_cell(gw, pay_gap_graph(), {0, std::string("gap"), std::nullopt}, nb, stub_model());
    CHECK(got == target);
}

TEST_CASE("resolve_cell falls back when the model is wrong or down")
{
    auto nb = analysis_notebook();
    auto g = pay_gap_graph();
    GraphElement widest{0, std::string("widest"), std::nullopt};
    {
        llm::Gateway gw;
        install(gw, {entry(R"({"cell_id": "capy-deadbeef"})")});
        CHECK(resolve_cell(gw, g, widest, nb, stub_model()) == nb.cells()[2].id);
    }
    {
        llm::Gateway gw;
        install(gw, {entry("I am not sure.")});
        CHECK(resolve_cell(gw, g, widest, nb, stub_model()) == nb.cells()[2].id);
    }
    {
        llm::Gateway gw;
        install(gw, {});
        CHECK(resolve_cell(gw, g, widest, nb, stub_model()) == nb.cells()[2].id);
    }
}

TEST_CASE("resolve_cell on a single-cell notebook skips the model")
{
    llm::Gateway gw;
    auto p = install(gw, {entry(R"({"cell_id": "capy-deadbeef"})")});
    Notebook nb;
    auto only = nb.append_cell(CellKind::markdown, "unrelated", Provenance::user);
    CHECK(resolve_cell(gw, pay_gap_graph(), {0, std::string("data"), std::nullopt}, nb, stub_model()) == only);
    CHECK(p->consumed() == 0);
}

TEST_CASE("lexical fallback matches a brute-force overlap oracle on 50 notebooks")
{
    Rng rng(2024);
    int checked = 0;
    while (checked < 50)
    {
        auto nb = random_notebook(rng, 10);
        if (nb.empty())
            continue;
        auto g = random_graph(rng);
        if (g.questions.empty())
            g = pay_gap_graph();
        const auto& q = g.questions[pick(rng, g.questions.size())];
        auto qi = static_cast<std::size_t>(&q - g.questions.data());
        GraphElement e{qi, std::nullopt, std::nullopt};
        if (!q.edges.empty() && coin(rng))
            e.edge = std::make_pair(q.edges[0].from, q.edges[0].to);
        else
            e.node = q.nodes[pick(rng, q.nodes.size())].id;

        llm::Gateway gw;
        install(gw, {entry(R"({"cell_id": "capy-ffffffff"})")});
        auto got = resolve_cell(gw, g, e, nb, stub_model());
        INFO("notebook " << checked << " text: " << element_text(g, e));
        CHECK(got == oracle_best_cell(element_text(g, e), nb));
        ++checked;
    }
}
