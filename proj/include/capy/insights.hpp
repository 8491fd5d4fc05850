// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/llm.hpp"
#include "capy/notebook.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capy
{

enum class NodeKind
{
    data_derived,
    external_knowledge
};

std::string_view to_string(NodeKind k);

struct InsightNode
{
    std::string id;
    std::string label;
    NodeKind kind = NodeKind::data_derived;

    friend bool operator==(const InsightNode&, const InsightNode&) = default;
};

struct InsightEdge
{
    std::string from;
    std::string to;
    std::string operation;

    friend bool operator==(const InsightEdge&, const InsightEdge&) = default;
};

struct InsightQuestion
{
    std::string question;
    std::vector<InsightNode> nodes;
    std::vector<InsightEdge> edges;

    friend bool operator==(const InsightQuestion&, const InsightQuestion&) = default;
};

struct InsightGraph
{
    std::vector<InsightQuestion> questions;

    friend bool operator==(const InsightGraph&, const InsightGraph&) = default;
};

inline constexpr std::string_view kGraphSchema =
    R"({"questions": [{"question": "<analytical question>", "nodes": [{"id": "<id>", "label": "<text>", "kind": "data_derived" | "external_knowledge"}], "edges": [{"from": "<id>", "to": "<id>", "operation": "<analytical operation>"}]}]})";

json to_json(const InsightGraph& g);
/// Throws ExtractionError on shape errors (not on invariant violations).
InsightGraph graph_from_json(const json& j);

/// Checks ids (nonempty, [A-Za-z0-9_], unique per question), labels,
/// endpoints, self-loops, operation text and acyclicity.
std::optional<std::string> validate_graph(const InsightGraph& g);

/// Parses and validates a model reply. Throws ExtractionError.
InsightGraph parse_graph_reply(std::string_view raw);

/// One repair re-ask on invalid output, then ExtractionError.
InsightGraph extract_graph(llm::Gateway& gateway, const Notebook& nb, const llm::ModelRef& model,
                           std::size_t context_budget = 24'000);

/// Flowchart text: header and class definitions, then one subgraph per
/// question with node ids prefixed "q<i>_".
std::string to_mermaid(const InsightGraph& g);

/// A node, or an edge (from, to), of question `question` (0-based).
struct GraphElement
{
    std::size_t question = 0;
    std::optional<std::string> node;
    std::optional<std::pair<std::string, std::string>> edge;
};

/// {"question": i, "node": id} or {"question": i, "edge": {"from", "to"}}.
GraphElement element_from_json(const json& j);

/// Text used for prompts and lexical matching: a node's label or an edge's
/// operation. Throws ValidationError when the element is not in the graph.
std::string element_text(const InsightGraph& g, const GraphElement& e);

/// Text of a cell considered for lexical matching: source, stream and
/// non-image rich output text, error name and value.
std::string cell_search_text(const Cell& c);

/// Cell whose search text shares the most word tokens with `text`; ties go
/// to the latest cell. Throws ValidationError on an empty notebook.
std::string lexical_match(const std::string& text, const Notebook& nb);

/// Asks the model for the most relevant cell; any failure or unknown id
/// falls back to lexical_match, so the result is always a cell of `nb`.
std::string resolve_cell(llm::Gateway& gateway, const InsightGraph& g, const GraphElement& element,
                         const Notebook& nb, const llm::ModelRef& model, std::size_t context_budget = 24'000);

} // namespace capy
