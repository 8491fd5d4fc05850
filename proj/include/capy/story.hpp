// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/critique.hpp"
#include "capy/eda.hpp"
#include "capy/llm.hpp"
#include "capy/notebook.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capy
{

enum class BlockKind
{
    heading,
    paragraph,
    figure_ref,
    list
};

std::string_view to_string(BlockKind k);
std::optional<BlockKind> parse_block_kind(std::string_view s);

struct StoryBlock
{
    std::string id;
    BlockKind kind = BlockKind::paragraph;
    /// Caption for figure_ref blocks; one item per line for list blocks.
    std::string text;
    /// figure_ref only.
    std::string cell_id;

    friend bool operator==(const StoryBlock&, const StoryBlock&) = default;
};

/// Span [start, end) in Unicode scalar values of its block's text.
struct Annotation
{
    std::string block_id;
    std::size_t start = 0;
    std::size_t end = 0;
    Dimension dimension = Dimension::semantic;
    std::string explanation;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct StoryDocument
{
    std::vector<StoryBlock> blocks;
    std::vector<Annotation> annotations;
    std::string instructions;

    [[nodiscard]] const StoryBlock* find(std::string_view block_id) const;

    friend bool operator==(const StoryDocument&, const StoryDocument&) = default;
};

enum class FeedbackScope
{
    global,
    local
};

struct SpanAnchor
{
    std::string block_id;
    std::size_t start = 0;
    std::size_t end = 0;
};

struct Feedback
{
    FeedbackScope scope = FeedbackScope::global;
    std::optional<SpanAnchor> anchor;
    std::string text;
};

inline constexpr std::string_view kStorySchema =
    R"({"blocks": [{"id": "<unique id>", "kind": "heading" | "paragraph" | "figure_ref" | "list", "text": "<text>", "cell_id": "<figure_ref only>"}], "annotations": [{"block_id": "<id>", "start": <int>, "end": <int>, "dimension": "semantic" | "rhetorical" | "pragmatic", "explanation": "<one sentence>"}]})";

json to_json(const StoryDocument& s);
/// Persisted form, including instructions. Annotations are re-checked on load
/// with no per-block cap.
StoryDocument story_from_state(const json& j);

json to_json(const Feedback& f);
/// Throws ValidationError on shape errors.
Feedback feedback_from_json(const json& j);

/// Reads a story from model JSON. Shape errors (missing blocks, unknown
/// block kinds, duplicate ids, figure_ref to a cell without image output,
/// non-integer offsets) throw StoryParseError. Annotations that break bounds,
/// overlap, cross a list item boundary, carry an unknown dimension or an
/// empty explanation, or exceed the per-block cap are dropped; a reason for
/// each drop is appended to `dropped`.
StoryDocument parse_story_json(const json& j, const Notebook& nb, std::size_t max_per_block,
                               std::vector<std::string>* dropped = nullptr);
StoryDocument parse_story_reply(std::string_view raw, const Notebook& nb, std::size_t max_per_block,
                                std::vector<std::string>* dropped = nullptr);

/// Applies the annotation rules to an in-memory story and returns the reasons
/// for anything removed.
std::vector<std::string> sanitize_annotations(StoryDocument& s, std::size_t max_per_block);

/// Scalar-offset substring of a block; nullopt when out of range.
std::optional<std::string> span_text(const StoryDocument& s, const std::string& block_id, std::size_t start,
                                     std::size_t end);

struct StoryConfig
{
    AgentMode mode = AgentMode::single;
    /// Models, roster and round cap for multi mode; in single mode only the
    /// initial respondent's model is used.
    ProtocolConfig protocol;
    std::size_t max_annotations_per_block = 2;
    std::size_t context_budget = 24'000;

    StoryConfig();
};

struct StoryOutcome
{
    StoryDocument story;
    std::vector<std::string> dropped;
    std::optional<CritiqueTranscript> transcript;
};

ProtocolTask story_protocol_task(const std::string& instructions, const Notebook& nb, const StoryConfig& config,
                                 std::vector<std::string>* dropped);

/// Throws ValidationError on an empty notebook, StoryParseError, and any
/// protocol or gateway error.
StoryOutcome generate_story(llm::Gateway& gateway, const Notebook& nb, const std::string& instructions,
                            const StoryConfig& config, const ProtocolHooks& hooks = {});

/// Lists feedback for the revision prompt; local items quote their anchor.
std::string render_feedback(const StoryDocument& s, const std::vector<Feedback>& feedback);

/// Throws InvalidAnchor before any model call when an anchor is missing,
/// misplaced or out of range. Empty feedback returns the story unchanged.
StoryOutcome apply_feedback(llm::Gateway& gateway, const StoryDocument& story, const std::vector<Feedback>& feedback,
                            const Notebook& nb, const StoryConfig& config);

struct BlockEdit
{
    std::string block_id;
    std::string text;
};

/// Replaces block texts. Annotations on edited blocks survive only when the
/// new text has the same span text at the same offsets. Throws UnknownBlock.
StoryDocument update_blocks(const StoryDocument& story, const std::vector<BlockEdit>& edits,
                            std::vector<std::string>* dropped = nullptr);

/// Self-contained HTML page. Throws MissingFigure when a figure_ref cell has
/// no image output in `nb`.
std::string export_html(const StoryDocument& story, const Notebook& nb);

} // namespace capy
