// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace capy
{

using json = nlohmann::json;

/// Cell metadata key holding "user" or "assistant".
inline constexpr std::string_view kProvenanceKey = "capy_provenance";

/// Rich payloads above this size are summarized when rendered into prompts.
inline constexpr std::size_t kRichPlaceholderBytes = 64 * 1024;

enum class CellKind
{
    code,
    markdown
};

enum class Provenance
{
    user,
    assistant
};

enum class OutputKind
{
    stream_stdout,
    stream_stderr,
    rich,
    error
};

std::string_view to_string(CellKind kind);
std::string_view to_string(Provenance p);
std::optional<CellKind> parse_cell_kind(std::string_view s);

struct Output
{
    OutputKind kind = OutputKind::stream_stdout;

    /// Stream text, or the primary payload of a rich output.
    std::string text;

    /// Rich outputs only: mime type of `text`. Never empty for rich outputs.
    std::string mime_type;

    /// Rich outputs only: true for execute_result, false for display_data.
    bool execute_result = false;
    /// Rich outputs only: the primary payload was a JSON value, stored dumped.
    bool json_payload = false;
    std::optional<int> execution_count;

    std::string ename;
    std::string evalue;
    std::vector<std::string> traceback;

    /// Additional mime representations of a rich output (mime -> value as
    /// stored in the file), its output metadata, and any unknown keys. Kept
    /// verbatim for round-tripping.
    json alternates = json::object();
    json metadata = json::object();
    json unknown = json::object();

    static Output stdout_text(std::string s);
    static Output stderr_text(std::string s);
    static Output display(std::string mime, std::string data);
    static Output result(std::string mime, std::string data, std::optional<int> count);
    static Output error_output(std::string ename, std::string evalue, std::vector<std::string> traceback = {});

    [[nodiscard]] bool is_image() const;

    friend bool operator==(const Output&, const Output&) = default;
};

struct Cell
{
    std::string id;
    CellKind kind = CellKind::code;
    std::string source;
    std::vector<Output> outputs;
    Provenance provenance = Provenance::user;
    std::optional<int> execution_count;

    /// Cell metadata minus the provenance key, plus unknown cell-level keys.
    json metadata = json::object();
    json unknown = json::object();

    [[nodiscard]] bool has_image_output() const;

    friend bool operator==(const Cell&, const Cell&) = default;
};

class Notebook
{
public:
    Notebook();

    [[nodiscard]] const std::vector<Cell>& cells() const noexcept { return _cells; }
    [[nodiscard]] std::size_t size() const noexcept { return _cells.size(); }
    [[nodiscard]] bool empty() const noexcept { return _cells.empty(); }

    [[nodiscard]] const Cell* find(std::string_view id) const;
    [[nodiscard]] std::optional<std::size_t> index_of(std::string_view id) const;

    /// Appends a new cell with a fresh id and returns that id. Ids are drawn
    /// from a per-notebook sequence, skipping any already present, so they are
    /// unique and deterministic.
    std::string append_cell(CellKind kind, std::string source, Provenance provenance);

    /// Records execution results on an existing code cell.
    void set_execution(std::string_view id, std::vector<Output> outputs, std::optional<int> execution_count);

    /// Language of the kernel, from language_info / kernelspec metadata.
    [[nodiscard]] std::string kernel_language() const;

    json metadata = json::object();
    int nbformat_minor = 5;

    /// Unknown top-level keys, kept verbatim.
    json unknown = json::object();

    friend bool operator==(const Notebook& a, const Notebook& b)
    {
        return a._cells == b._cells && a.metadata == b.metadata && a.nbformat_minor == b.nbformat_minor &&
               a.unknown == b.unknown;
    }

private:
    friend Notebook parse_notebook(std::string_view bytes);

    std::vector<Cell> _cells;
    std::unordered_map<std::string, std::size_t> _index;
    std::uint64_t _next_id = 1;
};

/// Rich output from a nonempty mime bundle. The primary representation is
/// chosen by preference (png, html, plain text, ...); the rest become alternates.
Output rich_output_from_bundle(const json& data, bool execute_result);

/// nbformat JSON for single outputs and cells, as written into files.
json output_to_json(const Output& o);
/// Throws MalformedFile.
Output output_from_json(const json& j);
json cell_to_json(const Cell& c);

/// Parses an nbformat v4 file. Throws MalformedFile or UnsupportedVersion.
Notebook parse_notebook(std::string_view bytes);

/// Writes canonical nbformat 4.5+ JSON: sorted keys, one-space indent, multi
/// line strings split into line lists, trailing newline.
std::string serialize_notebook(const Notebook& nb);

Notebook load_notebook(const std::string& path);

/// Writes via a temporary file and rename so readers never see partial files.
void save_notebook_atomic(const Notebook& nb, const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

/// Deterministic textual rendering of the notebook for prompts, no longer
/// than `budget` bytes. When the notebook does not fit, the oldest cell
/// bodies are elided first, then whole old cells are dropped; the last cell
/// is kept whole unless it alone exceeds the budget.
std::string render_context(const Notebook& nb, std::size_t budget);

/// Renders one cell (header, source, outputs) the way render_context does.
std::string render_cell(const Cell& cell, std::size_t index);

/// Text view of an output as sent to models.
std::string render_output(const Output& out);

/// Single-writer handle over a notebook shared between a run and readers.
/// Every mutation runs under the lock and then invokes the commit hook.
class SharedNotebook
{
public:
    using CommitHook = std::function<void(const Notebook&)>;

    explicit SharedNotebook(Notebook nb = {}, CommitHook on_commit = {});

    [[nodiscard]] Notebook snapshot() const;
    std::string append_cell(CellKind kind, std::string source, Provenance provenance);
    void set_execution(std::string_view id, std::vector<Output> outputs, std::optional<int> execution_count);
    void replace(Notebook nb);
    void set_commit_hook(CommitHook hook);

private:
    mutable std::mutex _mutex;
    Notebook _nb;
    CommitHook _on_commit;
};

} // namespace capy
