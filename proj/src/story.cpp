// SPDX-License-Identifier: Apache-2.0
#include "capy/story.hpp"

#include "capy/errors.hpp"
#include "capy/prompts.hpp"
#include "capy/text.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

namespace capy
{

namespace
{

constexpr std::pair<BlockKind, std::string_view> kBlockNames[] = {
    {BlockKind::heading, "heading"},
    {BlockKind::paragraph, "paragraph"},
    {BlockKind::figure_ref, "figure_ref"},
    {BlockKind::list, "list"},
};

const Output* figure_output(const Notebook& nb, const std::string& cell_id)
{
    const auto* cell = nb.find(cell_id);
    if (!cell)
        return nullptr;
    for (const auto& o: cell->outputs)
        if (o.is_image())
            return &o;
    return nullptr;
}

std::string describe(const Annotation& a)
{
    return std::string(to_string(a.dimension)) + " annotation on " + a.block_id + " [" + std::to_string(a.start) +
           ", " + std::to_string(a.end) + ")";
}

void note(std::vector<std::string>* dropped, std::string reason)
{
    if (dropped)
        dropped->push_back(std::move(reason));
}

StoryDocument read_story(const json& j, const Notebook* nb, std::size_t max_per_block,
                         std::vector<std::string>* dropped)
{
    if (!j.is_object() || !j.contains("blocks") || !j["blocks"].is_array())
        throw StoryParseError("story: 'blocks' must be a list");
    if (j["blocks"].empty())
        throw StoryParseError("story: no blocks");
    StoryDocument s;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < j["blocks"].size(); ++i)
    {
        const auto& b = j["blocks"][i];
        auto where = "block " + std::to_string(i + 1);
        if (!b.is_object())
            throw StoryParseError(where + ": not an object");
        StoryBlock block;
        if (b.contains("id") && !b["id"].is_null())
        {
            if (!b["id"].is_string() || b["id"].get<std::string>().empty())
                throw StoryParseError(where + ": 'id' must be a nonempty string");
            block.id = b["id"].get<std::string>();
        }
        else
        {
            block.id = "b" + std::to_string(i + 1);
        }
        if (!ids.insert(block.id).second)
            throw StoryParseError(where + ": duplicate id '" + block.id + "'");
        if (!b.contains("kind") || !b["kind"].is_string())
            throw StoryParseError(where + ": missing 'kind'");
        auto kind = parse_block_kind(b["kind"].get<std::string>());
        if (!kind)
            throw StoryParseError(where + ": unknown kind '" + b["kind"].get<std::string>() + "'");
        block.kind = *kind;
        if (!b.contains("text") || !b["text"].is_string())
            throw StoryParseError(where + ": missing string 'text'");
        block.text = b["text"].get<std::string>();
        if (block.kind == BlockKind::figure_ref)
        {
            if (!b.contains("cell_id") || !b["cell_id"].is_string())
                throw StoryParseError(where + ": figure_ref needs a 'cell_id'");
            block.cell_id = b["cell_id"].get<std::string>();
            if (nb && !figure_output(*nb, block.cell_id))
                throw StoryParseError(where + ": cell '" + block.cell_id + "' has no image output");
        }
        s.blocks.push_back(std::move(block));
    }

    if (j.contains("annotations") && !j["annotations"].is_null())
    {
        if (!j["annotations"].is_array())
            throw StoryParseError("story: 'annotations' must be a list");
        for (const auto& a: j["annotations"])
        {
            if (!a.is_object() || !a.contains("block_id") || !a["block_id"].is_string() || !a.contains("start") ||
                !a["start"].is_number_integer() || !a.contains("end") || !a["end"].is_number_integer())
                throw StoryParseError("annotation: needs 'block_id' and integer 'start' and 'end'");
            Annotation ann;
            ann.block_id = a["block_id"].get<std::string>();
            auto start = a["start"].get<long long>();
            auto end = a["end"].get<long long>();
            ann.explanation = a.contains("explanation") && a["explanation"].is_string()
                                  ? a["explanation"].get<std::string>()
                                  : std::string();
            auto dim_text = a.contains("dimension") && a["dimension"].is_string() ? a["dimension"].get<std::string>()
                                                                                   : std::string();
            auto dim = parse_dimension(dim_text);
            if (start < 0 || end < 0)
            {
                note(dropped, "annotation on " + ann.block_id + ": negative offset");
                continue;
            }
            ann.start = static_cast<std::size_t>(start);
            ann.end = static_cast<std::size_t>(end);
            if (!dim)
            {
                note(dropped, "annotation on " + ann.block_id + ": unknown dimension '" + dim_text + "'");
                continue;
            }
            ann.dimension = *dim;
            s.annotations.push_back(std::move(ann));
        }
    }
    for (auto& reason: sanitize_annotations(s, max_per_block))
        note(dropped, std::move(reason));
    return s;
}

std::optional<std::size_t> json_offset(const json& j, const char* key)
{
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0)
        return std::nullopt;
    return j[key].get<std::size_t>();
}

void check_anchor(const StoryDocument& s, const Feedback& f)
{
    if (f.scope == FeedbackScope::global)
    {
        if (f.anchor)
            throw InvalidAnchor("global feedback cannot carry an anchor");
        return;
    }
    if (!f.anchor)
        throw InvalidAnchor("local feedback needs an anchor");
    const auto* b = s.find(f.anchor->block_id);
    if (!b)
        throw InvalidAnchor("no block '" + f.anchor->block_id + "'");
    if (f.anchor->start >= f.anchor->end || f.anchor->end > text::scalar_length(b->text))
        throw InvalidAnchor("anchor [" + std::to_string(f.anchor->start) + ", " + std::to_string(f.anchor->end) +
                            ") is outside block '" + b->id + "'");
}

} // namespace

std::string_view to_string(BlockKind k)
{
    for (const auto& [kind, name]: kBlockNames)
        if (kind == k)
            return name;
    return "paragraph";
}

std::optional<BlockKind> parse_block_kind(std::string_view s)
{
    for (const auto& [kind, name]: kBlockNames)
        if (name == s)
            return kind;
    return std::nullopt;
}

const StoryBlock* StoryDocument::find(std::string_view block_id) const
{
    for (const auto& b: blocks)
        if (b.id == block_id)
            return &b;
    return nullptr;
}

json to_json(const StoryDocument& s)
{
    json blocks = json::array();
    for (const auto& b: s.blocks)
    {
        json jb{{"id", b.id}, {"kind", std::string(to_string(b.kind))}, {"text", b.text}};
        if (b.kind == BlockKind::figure_ref)
            jb["cell_id"] = b.cell_id;
        blocks.push_back(std::move(jb));
    }
    json anns = json::array();
    for (const auto& a: s.annotations)
        anns.push_back({{"block_id", a.block_id},
                        {"start", a.start},
                        {"end", a.end},
                        {"dimension", std::string(to_string(a.dimension))},
                        {"explanation", a.explanation}});
    return {{"blocks", blocks}, {"annotations", anns}};
}

StoryDocument story_from_state(const json& j)
{
    auto s = read_story(j, nullptr, std::numeric_limits<std::size_t>::max(), nullptr);
    if (j.contains("instructions") && j["instructions"].is_string())
        s.instructions = j["instructions"].get<std::string>();
    return s;
}

json to_json(const Feedback& f)
{
    json j{{"scope", f.scope == FeedbackScope::global ? "global" : "local"}, {"text", f.text}};
    if (f.anchor)
        j["anchor"] = {{"block_id", f.anchor->block_id}, {"start", f.anchor->start}, {"end", f.anchor->end}};
    return j;
}

Feedback feedback_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
        throw ValidationError("feedback needs a 'text'");
    Feedback f;
    f.text = j["text"].get<std::string>();
    auto scope = j.value("scope", std::string("global"));
    if (scope == "local")
        f.scope = FeedbackScope::local;
    else if (scope != "global")
        throw ValidationError("feedback scope must be 'global' or 'local'");
    if (j.contains("anchor") && !j["anchor"].is_null())
    {
        const auto& a = j["anchor"];
        auto start = json_offset(a, "start");
        auto end = json_offset(a, "end");
        if (!a.contains("block_id") || !a["block_id"].is_string() || !start || !end)
            throw ValidationError("feedback anchor needs 'block_id' and non-negative 'start' and 'end'");
        f.anchor = SpanAnchor{a["block_id"].get<std::string>(), *start, *end};
    }
    return f;
}

std::vector<std::string> sanitize_annotations(StoryDocument& s, std::size_t max_per_block)
{
    std::vector<std::string> dropped;
    std::map<std::string, std::vector<Annotation>> by_block;
    for (auto& a: s.annotations)
    {
        const auto* b = s.find(a.block_id);
        if (!b)
        {
            dropped.push_back(describe(a) + ": unknown block");
            continue;
        }
        if (a.start >= a.end || a.end > text::scalar_length(b->text))
        {
            dropped.push_back(describe(a) + ": out of bounds");
            continue;
        }
        if (text::trim(a.explanation).empty())
        {
            dropped.push_back(describe(a) + ": empty explanation");
            continue;
        }
        if (b->kind == BlockKind::list && text::scalar_substr(b->text, a.start, a.end)->find('\n') != std::string::npos)
        {
            dropped.push_back(describe(a) + ": crosses list items");
            continue;
        }
        by_block[a.block_id].push_back(std::move(a));
    }

    // Earlier start wins; among equal starts the first proposed wins.
    std::vector<Annotation> kept;
    for (const auto& b: s.blocks)
    {
        auto it = by_block.find(b.id);
        if (it == by_block.end())
            continue;
        auto& list = it->second;
        std::stable_sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.start < y.start; });
        std::size_t frontier = 0;
        std::size_t count = 0;
        for (auto& a: list)
        {
            if (count > 0 && a.start < frontier)
            {
                dropped.push_back(describe(a) + ": overlaps an earlier annotation");
                continue;
            }
            if (count >= max_per_block)
            {
                dropped.push_back(describe(a) + ": more than " + std::to_string(max_per_block) + " in the block");
                continue;
            }
            frontier = a.end;
            ++count;
            kept.push_back(std::move(a));
        }
    }
    s.annotations = std::move(kept);
    return dropped;
}

StoryDocument parse_story_json(const json& j, const Notebook& nb, std::size_t max_per_block,
                               std::vector<std::string>* dropped)
{
    return read_story(j, &nb, max_per_block, dropped);
}

StoryDocument parse_story_reply(std::string_view raw, const Notebook& nb, std::size_t max_per_block,
                                std::vector<std::string>* dropped)
{
    auto found = llm::extract_json_object(raw, [](const json& j) -> std::optional<std::string> {
        if (!j.contains("blocks") || !j["blocks"].is_array())
            return "missing 'blocks' list";
        return std::nullopt;
    });
    if (!found.value)
        throw StoryParseError("story: " + found.error);
    return read_story(*found.value, &nb, max_per_block, dropped);
}

std::optional<std::string> span_text(const StoryDocument& s, const std::string& block_id, std::size_t start,
                                     std::size_t end)
{
    const auto* b = s.find(block_id);
    if (!b)
        return std::nullopt;
    return text::scalar_substr(b->text, start, end);
}

StoryConfig::StoryConfig()
{
    protocol.task = TaskKind::story_draft;
    protocol.roles = default_roles(TaskKind::story_draft);
}

ProtocolTask story_protocol_task(const std::string& instructions, const Notebook& nb, const StoryConfig& config,
                                 std::vector<std::string>* dropped)
{
    auto context = render_context(nb, config.context_budget);
    ProtocolTask t;
    t.kind = TaskKind::story_draft;
    t.description = instructions.empty() ? "Write a data story from this notebook." : instructions;
    t.context = context;
    t.initial_messages = {
        llm::ChatMessage::system(
            prompts::render("story_system", {{"max_annotations", std::to_string(config.max_annotations_per_block)},
                                             {"story_schema", std::string(kStorySchema)}})),
        llm::ChatMessage::user(prompts::render(
            "story_turn", {{"instructions", instructions.empty() ? "(none)" : instructions}, {"notebook_context", context}})),
    };
    t.response_schema = std::string(kStorySchema);
    auto max = config.max_annotations_per_block;
    // The drop log describes the most recent accepted draft.
    t.parse_response = [&nb, max, dropped](std::string_view raw) {
        std::vector<std::string> notes;
        auto j = to_json(parse_story_reply(raw, nb, max, &notes));
        if (dropped)
            *dropped = std::move(notes);
        return j;
    };
    t.render_response = [](const json& j) { return j.dump(2); };
    return t;
}

StoryOutcome generate_story(llm::Gateway& gateway, const Notebook& nb, const std::string& instructions,
                            const StoryConfig& config, const ProtocolHooks& hooks)
{
    if (nb.empty())
        throw ValidationError("cannot write a story from an empty notebook");
    StoryOutcome out;
    auto task = story_protocol_task(instructions, nb, config, &out.dropped);
    json result;
    if (config.mode == AgentMode::single)
    {
        result = gateway.request_structured<json>(config.protocol.model_for(AgentRole::initial_respondent),
                                                  task.initial_messages, "initial_respondent", task.parse_response,
                                                  task.response_schema);
    }
    else
    {
        auto pr = run_protocol(gateway, task, config.protocol, hooks);
        result = std::move(pr.response);
        out.transcript = std::move(pr.transcript);
    }
    // Already validated by the task parser; a second pass only re-reads it.
    out.story = parse_story_json(result, nb, config.max_annotations_per_block);
    out.story.instructions = instructions;
    return out;
}

std::string render_feedback(const StoryDocument& s, const std::vector<Feedback>& feedback)
{
    std::string out;
    for (std::size_t i = 0; i < feedback.size(); ++i)
    {
        const auto& f = feedback[i];
        out += std::to_string(i + 1) + ". ";
        if (f.scope == FeedbackScope::global || !f.anchor)
        {
            out += "[global] " + f.text + "\n";
            continue;
        }
        auto quoted = span_text(s, f.anchor->block_id, f.anchor->start, f.anchor->end).value_or("");
        out += "[local, block " + f.anchor->block_id + ", characters " + std::to_string(f.anchor->start) + "-" +
               std::to_string(f.anchor->end) + "] on \"" + quoted + "\": " + f.text + "\n";
    }
    return out;
}

StoryOutcome apply_feedback(llm::Gateway& gateway, const StoryDocument& story, const std::vector<Feedback>& feedback,
                            const Notebook& nb, const StoryConfig& config)
{
    StoryOutcome out;
    if (feedback.empty())
    {
        out.story = story;
        return out;
    }
    for (const auto& f: feedback)
    {
        check_anchor(story, f);
        if (text::trim(f.text).empty())
            throw ValidationError("feedback text must be nonempty");
    }

    std::vector<llm::ChatMessage> messages = {
        llm::ChatMessage::system(
            prompts::render("story_system", {{"max_annotations", std::to_string(config.max_annotations_per_block)},
                                             {"story_schema", std::string(kStorySchema)}})),
        llm::ChatMessage::user(prompts::render("story_feedback",
                                               {{"story", to_json(story).dump(2)},
                                                {"feedback", render_feedback(story, feedback)},
                                                {"notebook_context", render_context(nb, config.context_budget)}})),
    };
    auto max = config.max_annotations_per_block;
    std::function<StoryDocument(std::string_view)> parse = [&](std::string_view raw) {
        std::vector<std::string> notes;
        auto s = parse_story_reply(raw, nb, max, &notes);
        out.dropped = std::move(notes);
        return s;
    };
    out.story = gateway.request_structured<StoryDocument>(config.protocol.model_for(AgentRole::initial_respondent),
                                                          std::move(messages), "story_feedback", parse, kStorySchema);
    out.story.instructions = story.instructions;
    return out;
}

StoryDocument update_blocks(const StoryDocument& story, const std::vector<BlockEdit>& edits,
                            std::vector<std::string>* dropped)
{
    for (const auto& e: edits)
        if (!story.find(e.block_id))
            throw UnknownBlock("no block '" + e.block_id + "'");

    StoryDocument out = story;
    std::set<std::string> edited;
    for (const auto& e: edits)
    {
        for (auto& b: out.blocks)
            if (b.id == e.block_id)
                b.text = e.text;
        edited.insert(e.block_id);
    }
    std::vector<Annotation> kept;
    for (const auto& a: out.annotations)
    {
        if (edited.contains(a.block_id))
        {
            auto before = span_text(story, a.block_id, a.start, a.end);
            auto after = span_text(out, a.block_id, a.start, a.end);
            if (!before || !after || *before != *after)
            {
                note(dropped, describe(a) + ": span text changed");
                continue;
            }
        }
        kept.push_back(a);
    }
    out.annotations = std::move(kept);
    // A list edit can move a newline into a surviving span.
    for (auto& reason: sanitize_annotations(out, std::numeric_limits<std::size_t>::max()))
        note(dropped, std::move(reason));
    return out;
}

namespace
{

std::string marked_text(const StoryBlock& b, const std::vector<const Annotation*>& anns, std::size_t from, std::size_t to)
{
    std::string out;
    auto pos = from;
    for (const auto* a: anns)
    {
        if (a->start < from || a->end > to)
            continue;
        out += text::html_escape(*text::scalar_substr(b.text, pos, a->start));
        auto dim = std::string(to_string(a->dimension));
        out += "<mark class=\"dim-" + dim + "\" data-dimension=\"" + dim + "\" title=\"" +
               text::html_escape(a->explanation) + "\">" + text::html_escape(*text::scalar_substr(b.text, a->start, a->end)) +
               "</mark>";
        pos = a->end;
    }
    out += text::html_escape(*text::scalar_substr(b.text, pos, to));
    return out;
}

constexpr std::string_view kStyle = R"(body{font-family:Georgia,serif;max-width:46rem;margin:2rem auto;padding:0 1rem;line-height:1.6;color:#1F1F1F}
p,li,figcaption,h2{white-space:pre-wrap}
figure{margin:1.5rem 0}figure img{max-width:100%}
mark{background:transparent;border-bottom:3px solid;padding:0 1px;cursor:help}
mark.dim-semantic{border-color:#0F6B6B;color:#0F6B6B}
mark.dim-rhetorical{border-color:#2B5FB0;color:#2B5FB0}
mark.dim-pragmatic{border-color:#C1683C;color:#C1683C}
)";

} // namespace

std::string export_html(const StoryDocument& story, const Notebook& nb)
{
    std::map<std::string, std::vector<const Annotation*>> by_block;
    for (const auto& a: story.annotations)
        by_block[a.block_id].push_back(&a);
    for (auto& [_, list]: by_block)
        std::sort(list.begin(), list.end(), [](const auto* x, const auto* y) { return x->start < y->start; });

    std::string title = "Data story";
    for (const auto& b: story.blocks)
        if (b.kind == BlockKind::heading)
        {
            title = b.text;
            break;
        }

    std::string body;
    for (const auto& b: story.blocks)
    {
        const auto& anns = by_block[b.id];
        auto id = text::html_escape(b.id);
        auto length = text::scalar_length(b.text);
        switch (b.kind)
        {
            case BlockKind::heading:
                body += "<h2 data-block=\"" + id + "\">" + marked_text(b, anns, 0, length) + "</h2>\n";
                break;
            case BlockKind::paragraph:
                body += "<p data-block=\"" + id + "\">" + marked_text(b, anns, 0, length) + "</p>\n";
                break;
            case BlockKind::list:
            {
                body += "<ul data-block=\"" + id + "\">";
                std::size_t start = 0;
                while (true)
                {
                    auto tail = *text::scalar_substr(b.text, start, length);
                    auto nl = tail.find('\n');
                    auto stop = nl == std::string::npos ? length : start + text::scalar_length(tail.substr(0, nl));
                    body += "<li>" + marked_text(b, anns, start, stop) + "</li>";
                    if (nl == std::string::npos)
                        break;
                    body += "\n";
                    start = stop + 1;
                }
                body += "</ul>\n";
                break;
            }
            case BlockKind::figure_ref:
            {
                const auto* img = figure_output(nb, b.cell_id);
                if (!img)
                    throw MissingFigure("cell '" + b.cell_id + "' has no image output");
                // Raster payloads are already base64 in the notebook; SVG is text.
                auto payload = img->mime_type == "image/svg+xml" ? text::base64_encode(img->text) : img->text;
                std::erase_if(payload, [](char c) { return c == '\n' || c == '\r' || c == ' '; });
                body += "<figure data-block=\"" + id + "\" data-cell=\"" + text::html_escape(b.cell_id) +
                        "\"><img alt=\"" + text::html_escape(b.text) + "\" src=\"data:" + img->mime_type + ";base64," +
                        payload + "\"><figcaption>" + marked_text(b, anns, 0, length) + "</figcaption></figure>\n";
                break;
            }
        }
    }

    return "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" + text::html_escape(title) +
           "</title>\n<style>\n" + std::string(kStyle) + "</style>\n</head>\n<body>\n<article class=\"capy-story\">\n" +
           body + "</article>\n</body>\n</html>\n";
}

} // namespace capy
