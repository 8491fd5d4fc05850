// SPDX-License-Identifier: Apache-2.0
#include "capy/insights.hpp"

#include "capy/errors.hpp"
#include "capy/prompts.hpp"
#include "capy/text.hpp"

#include <cctype>
#include <map>

namespace capy
{

namespace
{

bool valid_id(const std::string& id)
{
    if (id.empty())
        return false;
    for (unsigned char c: id)
        if (!std::isalnum(c) && c != '_')
            return false;
    return true;
}

std::optional<NodeKind> parse_node_kind(std::string_view s)
{
    if (s == "data_derived")
        return NodeKind::data_derived;
    if (s == "external_knowledge")
        return NodeKind::external_knowledge;
    return std::nullopt;
}

std::string require_string(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string())
        throw ExtractionError(where + ": missing string '" + key + "'");
    return obj[key].get<std::string>();
}

// Characters with meaning in the flowchart grammar become entity codes.
std::string escape_label(std::string_view s)
{
    std::string out;
    for (char c: s)
    {
        switch (c)
        {
            case '#': out += "#35;"; break;
            case '"': out += "#quot;"; break;
            case '|': out += "#124;"; break;
            case '<': out += "#lt;"; break;
            case '>': out += "#gt;"; break;
            case '\n': out += "#10;"; break;
            case '\r': out += "#13;"; break;
            default: out += c;
        }
    }
    return out;
}

const InsightQuestion& question_at(const InsightGraph& g, std::size_t i)
{
    if (i >= g.questions.size())
        throw ValidationError("question index " + std::to_string(i) + " out of range");
    return g.questions[i];
}

} // namespace

std::string_view to_string(NodeKind k)
{
    return k == NodeKind::data_derived ? "data_derived" : "external_knowledge";
}

json to_json(const InsightGraph& g)
{
    json qs = json::array();
    for (const auto& q: g.questions)
    {
        json nodes = json::array();
        for (const auto& n: q.nodes)
            nodes.push_back({{"id", n.id}, {"label", n.label}, {"kind", std::string(to_string(n.kind))}});
        json edges = json::array();
        for (const auto& e: q.edges)
            edges.push_back({{"from", e.from}, {"to", e.to}, {"operation", e.operation}});
        qs.push_back({{"question", q.question}, {"nodes", nodes}, {"edges", edges}});
    }
    return {{"questions", qs}};
}

InsightGraph graph_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("questions") || !j["questions"].is_array())
        throw ExtractionError("graph: 'questions' must be a list");
    InsightGraph g;
    for (const auto& q: j["questions"])
    {
        InsightQuestion out;
        out.question = require_string(q, "question", "question");
        if (!q.contains("nodes") || !q["nodes"].is_array())
            throw ExtractionError("question: 'nodes' must be a list");
        for (const auto& n: q["nodes"])
        {
            auto kind_text = require_string(n, "kind", "node");
            auto kind = parse_node_kind(kind_text);
            if (!kind)
                throw ExtractionError("node: unknown kind '" + kind_text + "'");
            out.nodes.push_back({require_string(n, "id", "node"), require_string(n, "label", "node"), *kind});
        }
        if (q.contains("edges") && !q["edges"].is_null())
        {
            if (!q["edges"].is_array())
                throw ExtractionError("question: 'edges' must be a list");
            for (const auto& e: q["edges"])
                out.edges.push_back({require_string(e, "from", "edge"), require_string(e, "to", "edge"),
                                     require_string(e, "operation", "edge")});
        }
        g.questions.push_back(std::move(out));
    }
    return g;
}

std::optional<std::string> validate_graph(const InsightGraph& g)
{
    for (std::size_t qi = 0; qi < g.questions.size(); ++qi)
    {
        const auto& q = g.questions[qi];
        auto where = "question " + std::to_string(qi + 1);
        if (text::trim(q.question).empty())
            return where + ": empty question text";
        std::map<std::string, std::size_t> index;
        for (const auto& n: q.nodes)
        {
            if (!valid_id(n.id))
                return where + ": node id '" + n.id + "' must be letters, digits or underscore";
            if (!index.emplace(n.id, index.size()).second)
                return where + ": duplicate node id '" + n.id + "'";
            if (text::trim(n.label).empty())
                return where + ": node '" + n.id + "' has an empty label";
        }
        std::vector<std::vector<std::size_t>> out(index.size());
        std::vector<std::size_t> indegree(index.size(), 0);
        for (const auto& e: q.edges)
        {
            auto f = index.find(e.from);
            auto t = index.find(e.to);
            if (f == index.end() || t == index.end())
                return where + ": edge " + e.from + " -> " + e.to + " has an endpoint outside the question";
            if (e.from == e.to)
                return where + ": self-loop on '" + e.from + "'";
            if (text::trim(e.operation).empty())
                return where + ": edge " + e.from + " -> " + e.to + " has no operation";
            out[f->second].push_back(t->second);
            ++indegree[t->second];
        }
        // Kahn's algorithm: anything left unvisited sits on a cycle.
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < indegree.size(); ++i)
            if (indegree[i] == 0)
                ready.push_back(i);
        std::size_t visited = 0;
        while (!ready.empty())
        {
            auto n = ready.back();
            ready.pop_back();
            ++visited;
            for (auto m: out[n])
                if (--indegree[m] == 0)
                    ready.push_back(m);
        }
        if (visited != index.size())
            return where + ": edges form a cycle";
    }
    return std::nullopt;
}

InsightGraph parse_graph_reply(std::string_view raw)
{
    auto found = llm::extract_json_object(raw, [](const json& j) -> std::optional<std::string> {
        if (!j.contains("questions") || !j["questions"].is_array())
            return "missing 'questions' list";
        return std::nullopt;
    });
    if (!found.value)
        throw ExtractionError("insight graph: " + found.error);
    auto g = graph_from_json(*found.value);
    if (g.questions.empty())
        throw ExtractionError("insight graph: no questions");
    if (auto err = validate_graph(g))
        throw ExtractionError("insight graph: " + *err);
    return g;
}

InsightGraph extract_graph(llm::Gateway& gateway, const Notebook& nb, const llm::ModelRef& model,
                           std::size_t context_budget)
{
    if (nb.empty())
        throw ValidationError("cannot summarize an empty notebook");
    std::vector<llm::ChatMessage> messages = {
        llm::ChatMessage::system(prompts::render("insights_system", {{"graph_schema", std::string(kGraphSchema)}})),
        llm::ChatMessage::user(
            prompts::render("insights_turn", {{"notebook_context", render_context(nb, context_budget)}})),
    };
    std::function<InsightGraph(std::string_view)> parse = parse_graph_reply;
    return gateway.request_structured<InsightGraph>(model, std::move(messages), "insights", parse, kGraphSchema);
}

std::string to_mermaid(const InsightGraph& g)
{
    std::string out = "flowchart TD\n"
                      "classDef yellowNode fill:#F7E7A1,stroke:#8C7A2B,color:#1F1F1F\n"
                      "classDef greenNode fill:#BBE5B3,stroke:#3F7A37,color:#1F1F1F\n";
    for (std::size_t qi = 0; qi < g.questions.size(); ++qi)
    {
        const auto& q = g.questions[qi];
        auto prefix = "q" + std::to_string(qi + 1) + "_";
        out += "subgraph Q" + std::to_string(qi + 1) + "[\"" + escape_label(q.question) + "\"]\n";
        for (const auto& n: q.nodes)
            out += prefix + n.id + "[\"" + escape_label(n.label) + "\"]:::" +
                   (n.kind == NodeKind::data_derived ? "yellowNode" : "greenNode") + "\n";
        for (const auto& e: q.edges)
            out += prefix + e.from + " -->|" + escape_label(e.operation) + "| " + prefix + e.to + "\n";
        out += "end\n";
    }
    return out;
}

GraphElement element_from_json(const json& j)
{
    if (!j.is_object())
        throw ValidationError("element must be an object");
    GraphElement e;
    if (j.contains("question"))
    {
        if (!j["question"].is_number_integer() || j["question"].get<long long>() < 0)
            throw ValidationError("element.question must be a non-negative integer");
        e.question = j["question"].get<std::size_t>();
    }
    if (j.contains("node") && j["node"].is_string())
        e.node = j["node"].get<std::string>();
    else if (j.contains("edge") && j["edge"].is_object() && j["edge"].contains("from") && j["edge"].contains("to") &&
             j["edge"]["from"].is_string() && j["edge"]["to"].is_string())
        e.edge = std::make_pair(j["edge"]["from"].get<std::string>(), j["edge"]["to"].get<std::string>());
    else
        throw ValidationError("element needs a 'node' id or an 'edge' {from, to}");
    return e;
}

std::string element_text(const InsightGraph& g, const GraphElement& e)
{
    const auto& q = question_at(g, e.question);
    if (e.node)
    {
        for (const auto& n: q.nodes)
            if (n.id == *e.node)
                return n.label;
        throw ValidationError("no node '" + *e.node + "' in question " + std::to_string(e.question));
    }
    if (e.edge)
    {
        for (const auto& ed: q.edges)
            if (ed.from == e.edge->first && ed.to == e.edge->second)
                return ed.operation;
        throw ValidationError("no edge " + e.edge->first + " -> " + e.edge->second);
    }
    throw ValidationError("element names neither a node nor an edge");
}

std::string cell_search_text(const Cell& c)
{
    std::string s = c.source;
    for (const auto& o: c.outputs)
    {
        s += '\n';
        if (o.kind == OutputKind::error)
            s += o.ename + " " + o.evalue;
        else if (!o.is_image())
            s += o.text;
    }
    return s;
}

std::string lexical_match(const std::string& query, const Notebook& nb)
{
    if (nb.empty())
        throw ValidationError("notebook has no cells");
    auto wanted = text::word_tokens(query);
    std::size_t best = 0;
    std::size_t best_score = 0;
    for (std::size_t i = 0; i < nb.size(); ++i)
    {
        auto have = text::word_tokens(cell_search_text(nb.cells()[i]));
        std::size_t score = 0;
        for (const auto& t: wanted)
            score += have.contains(t);
        if (score >= best_score)
        {
            best = i;
            best_score = score;
        }
    }
    return nb.cells()[best].id;
}

std::string resolve_cell(llm::Gateway& gateway, const InsightGraph& g, const GraphElement& element,
                         const Notebook& nb, const llm::ModelRef& model, std::size_t context_budget)
{
    auto label = element_text(g, element);
    if (nb.empty())
        throw ValidationError("notebook has no cells");
    if (nb.size() == 1)
        return nb.cells()[0].id;

    std::string description = label;
    if (element.edge)
        description = "operation \"" + label + "\" from " + element.edge->first + " to " + element.edge->second;
    description += "\n(question: " + g.questions[element.question].question + ")";

    try
    {
        auto raw = gateway.complete(
            model,
            std::vector<llm::ChatMessage>{
                llm::ChatMessage::system(prompts::get("resolve_system")),
                llm::ChatMessage::user(prompts::render(
                    "resolve_turn", {{"element", description}, {"notebook_context", render_context(nb, context_budget)}}))},
            "resolve");
        auto found = llm::extract_json_object(raw, [](const json& j) -> std::optional<std::string> {
            if (!j.contains("cell_id") || !j["cell_id"].is_string())
                return "missing 'cell_id'";
            return std::nullopt;
        });
        if (found.value)
        {
            auto id = (*found.value)["cell_id"].get<std::string>();
            if (nb.find(id))
                return id;
        }
    }
    catch (const Error&)
    {
    }
    return lexical_match(label, nb);
}

} // namespace capy
