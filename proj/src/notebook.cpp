// SPDX-License-Identifier: Apache-2.0
#include "capy/notebook.hpp"

#include "capy/errors.hpp"
#include "capy/text.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace capy
{

std::string_view to_string(CellKind kind)
{
    return kind == CellKind::code ? "code" : "markdown";
}

std::string_view to_string(Provenance p)
{
    return p == Provenance::assistant ? "assistant" : "user";
}

std::optional<CellKind> parse_cell_kind(std::string_view s)
{
    if (s == "code")
        return CellKind::code;
    if (s == "markdown")
        return CellKind::markdown;
    return std::nullopt;
}

Output Output::stdout_text(std::string s)
{
    Output o;
    o.kind = OutputKind::stream_stdout;
    o.text = std::move(s);
    return o;
}

Output Output::stderr_text(std::string s)
{
    Output o;
    o.kind = OutputKind::stream_stderr;
    o.text = std::move(s);
    return o;
}

Output Output::display(std::string mime, std::string data)
{
    Output o;
    o.kind = OutputKind::rich;
    o.mime_type = std::move(mime);
    o.text = std::move(data);
    return o;
}

Output Output::result(std::string mime, std::string data, std::optional<int> count)
{
    auto o = display(std::move(mime), std::move(data));
    o.execute_result = true;
    o.execution_count = count;
    return o;
}

Output Output::error_output(std::string ename, std::string evalue, std::vector<std::string> traceback)
{
    Output o;
    o.kind = OutputKind::error;
    o.ename = std::move(ename);
    o.evalue = std::move(evalue);
    o.traceback = std::move(traceback);
    return o;
}

bool Output::is_image() const
{
    return kind == OutputKind::rich && mime_type.starts_with("image/");
}

bool Cell::has_image_output() const
{
    return std::any_of(outputs.begin(), outputs.end(), [](const Output& o) { return o.is_image(); });
}

Notebook::Notebook()
{
    metadata = json::object();
}

const Cell* Notebook::find(std::string_view id) const
{
    auto idx = index_of(id);
    return idx ? &_cells[*idx] : nullptr;
}

std::optional<std::size_t> Notebook::index_of(std::string_view id) const
{
    auto it = _index.find(std::string(id));
    if (it == _index.end())
        return std::nullopt;
    return it->second;
}

std::string Notebook::append_cell(CellKind kind, std::string source, Provenance provenance)
{
    std::string id;
    do
    {
        std::array<char, 24> buf{};
        std::snprintf(buf.data(), buf.size(), "capy-%08llx", static_cast<unsigned long long>(_next_id++));
        id = buf.data();
    } while (find(id) != nullptr);

    Cell cell;
    cell.id = id;
    cell.kind = kind;
    cell.source = std::move(source);
    cell.provenance = provenance;
    _index.emplace(id, _cells.size());
    _cells.push_back(std::move(cell));
    return id;
}

void Notebook::set_execution(std::string_view id, std::vector<Output> outputs, std::optional<int> execution_count)
{
    auto idx = index_of(id);
    if (!idx)
        throw UnknownCell("no cell with id " + std::string(id));
    auto& cell = _cells[*idx];
    if (cell.kind != CellKind::code)
        throw UnknownCell("cell " + std::string(id) + " is not a code cell");
    cell.outputs = std::move(outputs);
    cell.execution_count = execution_count;
}

std::string Notebook::kernel_language() const
{
    if (metadata.contains("language_info") && metadata["language_info"].is_object())
    {
        const auto& li = metadata["language_info"];
        if (li.contains("name") && li["name"].is_string())
            return li["name"].get<std::string>();
    }
    if (metadata.contains("kernelspec") && metadata["kernelspec"].is_object())
    {
        const auto& ks = metadata["kernelspec"];
        if (ks.contains("language") && ks["language"].is_string())
            return ks["language"].get<std::string>();
    }
    return "python";
}

// ---------------------------------------------------------------------------
// parsing

namespace
{

bool is_multiline(const json& v)
{
    if (v.is_string())
        return true;
    if (!v.is_array())
        return false;
    return std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
}

std::string join_multiline(const json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    std::string out;
    for (const auto& e: v)
        out += e.get<std::string>();
    return out;
}

std::string require_multiline(const json& obj, const char* key, const char* where)
{
    if (!obj.contains(key))
        throw MalformedFile(std::string(where) + ": missing '" + key + "'");
    const auto& v = obj[key];
    if (!is_multiline(v))
        throw MalformedFile(std::string(where) + ": '" + key + "' must be a string or list of strings");
    return join_multiline(v);
}

json object_or_empty(const json& obj, const char* key, const char* where)
{
    if (!obj.contains(key) || obj[key].is_null())
        return json::object();
    if (!obj[key].is_object())
        throw MalformedFile(std::string(where) + ": '" + key + "' must be an object");
    return obj[key];
}

std::optional<int> optional_count(const json& obj, const char* where)
{
    if (!obj.contains("execution_count") || obj["execution_count"].is_null())
        return std::nullopt;
    const auto& v = obj["execution_count"];
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw MalformedFile(std::string(where) + ": execution_count must be a non-negative integer or null");
    return v.get<int>();
}

json unknown_keys(const json& obj, std::initializer_list<std::string_view> known)
{
    json rest = json::object();
    for (const auto& [k, v]: obj.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            rest[k] = v;
    return rest;
}

// Order in which a bundle's representations are considered for the primary payload.
constexpr std::array kMimePriority = {
    std::string_view{"image/png"},     std::string_view{"text/html"},     std::string_view{"text/plain"},
    std::string_view{"image/jpeg"},    std::string_view{"image/svg+xml"}, std::string_view{"text/markdown"},
    std::string_view{"text/latex"},
};

bool is_binary_mime(std::string_view mime)
{
    return mime.starts_with("image/") && mime != "image/svg+xml";
}

} // namespace

Output rich_output_from_bundle(const json& data, bool execute_result)
{
    Output out;
    out.kind = OutputKind::rich;
    out.execute_result = execute_result;

    std::string primary;
    for (auto mime: kMimePriority)
        if (data.contains(mime) && is_multiline(data[std::string(mime)]))
        {
            primary = mime;
            break;
        }
    if (primary.empty())
        for (const auto& [k, v]: data.items())
            if (is_multiline(v))
            {
                primary = k;
                break;
            }

    if (primary.empty())
    {
        primary = data.begin().key();
        out.text = data.begin().value().dump();
        out.json_payload = true;
    }
    else
    {
        out.text = join_multiline(data[primary]);
    }
    out.mime_type = primary;

    for (const auto& [k, v]: data.items())
        if (k != primary)
            out.alternates[k] = is_multiline(v) ? json(join_multiline(v)) : v;
    return out;
}

namespace
{

Output parse_output(const json& o)
{
    if (!o.is_object())
        throw MalformedFile("output must be an object");
    if (!o.contains("output_type") || !o["output_type"].is_string())
        throw MalformedFile("output: missing output_type");
    auto type = o["output_type"].get<std::string>();

    Output out;
    if (type == "stream")
    {
        if (!o.contains("name") || !o["name"].is_string())
            throw MalformedFile("stream output: missing name");
        auto name = o["name"].get<std::string>();
        if (name == "stdout")
            out.kind = OutputKind::stream_stdout;
        else if (name == "stderr")
            out.kind = OutputKind::stream_stderr;
        else
            throw MalformedFile("stream output: unknown stream " + name);
        out.text = require_multiline(o, "text", "stream output");
        out.unknown = unknown_keys(o, {"output_type", "name", "text"});
    }
    else if (type == "display_data" || type == "execute_result")
    {
        auto data = object_or_empty(o, "data", "display output");
        if (data.empty())
            throw MalformedFile("display output: empty data bundle");
        out = rich_output_from_bundle(data, type == "execute_result");
        out.metadata = object_or_empty(o, "metadata", "display output");
        if (out.execute_result)
            out.execution_count = optional_count(o, "execute_result");
        out.unknown = unknown_keys(o, {"output_type", "data", "metadata", "execution_count"});
    }
    else if (type == "error")
    {
        out.kind = OutputKind::error;
        if (!o.contains("ename") || !o["ename"].is_string() || !o.contains("evalue") || !o["evalue"].is_string())
            throw MalformedFile("error output: missing ename/evalue");
        out.ename = o["ename"].get<std::string>();
        out.evalue = o["evalue"].get<std::string>();
        if (o.contains("traceback"))
        {
            if (!o["traceback"].is_array())
                throw MalformedFile("error output: traceback must be a list");
            for (const auto& line: o["traceback"])
            {
                if (!line.is_string())
                    throw MalformedFile("error output: traceback entries must be strings");
                out.traceback.push_back(line.get<std::string>());
            }
        }
        out.unknown = unknown_keys(o, {"output_type", "ename", "evalue", "traceback"});
    }
    else
    {
        throw MalformedFile("unsupported output_type " + type);
    }
    return out;
}

Cell parse_cell(const json& c, std::size_t index)
{
    auto where = "cell " + std::to_string(index);
    if (!c.is_object())
        throw MalformedFile(where + ": must be an object");
    if (!c.contains("cell_type") || !c["cell_type"].is_string())
        throw MalformedFile(where + ": missing cell_type");
    auto kind = parse_cell_kind(c["cell_type"].get<std::string>());
    if (!kind)
        throw MalformedFile(where + ": unsupported cell_type " + c["cell_type"].get<std::string>());

    Cell cell;
    cell.kind = *kind;
    if (c.contains("id"))
    {
        if (!c["id"].is_string() || c["id"].get<std::string>().empty())
            throw MalformedFile(where + ": id must be a nonempty string");
        cell.id = c["id"].get<std::string>();
    }
    cell.source = require_multiline(c, "source", where.c_str());
    cell.metadata = object_or_empty(c, "metadata", where.c_str());
    if (auto it = cell.metadata.find(kProvenanceKey); it != cell.metadata.end())
    {
        if (it->is_string() && it->get<std::string>() == "assistant")
            cell.provenance = Provenance::assistant;
        cell.metadata.erase(it);
    }

    if (cell.kind == CellKind::code)
    {
        if (c.contains("outputs"))
        {
            if (!c["outputs"].is_array())
                throw MalformedFile(where + ": outputs must be a list");
            for (const auto& o: c["outputs"])
                cell.outputs.push_back(parse_output(o));
        }
        cell.execution_count = optional_count(c, where.c_str());
    }
    cell.unknown = unknown_keys(c, {"cell_type", "id", "source", "metadata", "outputs", "execution_count"});
    return cell;
}

json dump_multiline(const std::string& s)
{
    json lines = json::array();
    for (auto& line: text::split_lines_keep_ends(s))
        lines.push_back(std::move(line));
    return lines;
}

json dump_mime_value(const std::string& mime, const json& v)
{
    if (!v.is_string())
        return v;
    if (is_binary_mime(mime))
        return v;
    return dump_multiline(v.get<std::string>());
}

json dump_output(const Output& o)
{
    json j = o.unknown.is_object() ? o.unknown : json::object();
    switch (o.kind)
    {
        case OutputKind::stream_stdout:
        case OutputKind::stream_stderr:
            j["output_type"] = "stream";
            j["name"] = o.kind == OutputKind::stream_stdout ? "stdout" : "stderr";
            j["text"] = dump_multiline(o.text);
            break;
        case OutputKind::rich: {
            j["output_type"] = o.execute_result ? "execute_result" : "display_data";
            json data = json::object();
            for (const auto& [k, v]: o.alternates.items())
                data[k] = dump_mime_value(k, v);
            if (o.json_payload)
                data[o.mime_type] = json::parse(o.text);
            else
                data[o.mime_type] = dump_mime_value(o.mime_type, json(o.text));
            j["data"] = std::move(data);
            j["metadata"] = o.metadata;
            if (o.execute_result)
                j["execution_count"] = o.execution_count ? json(*o.execution_count) : json(nullptr);
            break;
        }
        case OutputKind::error:
            j["output_type"] = "error";
            j["ename"] = o.ename;
            j["evalue"] = o.evalue;
            j["traceback"] = o.traceback;
            break;
    }
    return j;
}

json dump_cell(const Cell& c)
{
    json j = c.unknown.is_object() ? c.unknown : json::object();
    j["cell_type"] = std::string(to_string(c.kind));
    j["id"] = c.id;
    j["source"] = dump_multiline(c.source);
    json meta = c.metadata;
    meta[std::string(kProvenanceKey)] = std::string(to_string(c.provenance));
    j["metadata"] = std::move(meta);
    if (c.kind == CellKind::code)
    {
        json outs = json::array();
        for (const auto& o: c.outputs)
            outs.push_back(dump_output(o));
        j["outputs"] = std::move(outs);
        j["execution_count"] = c.execution_count ? json(*c.execution_count) : json(nullptr);
    }
    return j;
}

} // namespace

json output_to_json(const Output& o)
{
    return dump_output(o);
}

Output output_from_json(const json& j)
{
    return parse_output(j);
}

json cell_to_json(const Cell& c)
{
    return dump_cell(c);
}

Notebook parse_notebook(std::string_view bytes)
{
    json doc;
    try
    {
        doc = json::parse(bytes);
    }
    catch (const json::parse_error& e)
    {
        throw MalformedFile(std::string("not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw MalformedFile("notebook must be a JSON object");
    if (!doc.contains("nbformat") || !doc["nbformat"].is_number_integer())
        throw MalformedFile("missing integer 'nbformat'");
    if (auto major = doc["nbformat"].get<long long>(); major != 4)
        throw UnsupportedVersion("nbformat " + std::to_string(major) + " is not supported (need 4)");

    Notebook nb;
    int minor = 0;
    if (doc.contains("nbformat_minor"))
    {
        if (!doc["nbformat_minor"].is_number_integer())
            throw MalformedFile("'nbformat_minor' must be an integer");
        minor = doc["nbformat_minor"].get<int>();
    }
    // Cell ids are mandatory from 4.5 on; older files are upgraded.
    nb.nbformat_minor = std::max(minor, 5);
    nb.metadata = object_or_empty(doc, "metadata", "notebook");
    nb.unknown = unknown_keys(doc, {"nbformat", "nbformat_minor", "metadata", "cells"});

    if (!doc.contains("cells") || !doc["cells"].is_array())
        throw MalformedFile("missing 'cells' list");

    std::set<std::string> seen;
    std::size_t index = 0;
    for (const auto& c: doc["cells"])
    {
        auto cell = parse_cell(c, index);
        if (cell.id.empty())
        {
            auto n = index + 1;
            do
                cell.id = "cell-" + std::to_string(n++);
            while (seen.contains(cell.id));
        }
        if (!seen.insert(cell.id).second)
            throw MalformedFile("duplicate cell id " + cell.id);
        nb._index.emplace(cell.id, nb._cells.size());
        nb._cells.push_back(std::move(cell));
        ++index;
    }
    return nb;
}

std::string serialize_notebook(const Notebook& nb)
{
    json doc = nb.unknown.is_object() ? nb.unknown : json::object();
    doc["nbformat"] = 4;
    doc["nbformat_minor"] = nb.nbformat_minor;
    doc["metadata"] = nb.metadata;
    json cells = json::array();
    for (const auto& c: nb.cells())
        cells.push_back(dump_cell(c));
    doc["cells"] = std::move(cells);
    return doc.dump(1, ' ', false, json::error_handler_t::replace) + "\n";
}

Notebook load_notebook(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MalformedFile("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_notebook(ss.str());
}

void write_file_atomic(const std::string& path, std::string_view content)
{
    namespace fs = std::filesystem;
    auto target = fs::path(path);
    auto tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out)
            throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

void save_notebook_atomic(const Notebook& nb, const std::string& path)
{
    write_file_atomic(path, serialize_notebook(nb));
}

// ---------------------------------------------------------------------------
// context rendering

namespace
{

constexpr std::size_t kMaxOutputBytes = 2000;

std::string cap(std::string_view s, std::size_t limit)
{
    if (s.size() <= limit)
        return std::string(s);
    auto head = text::utf8_prefix(s, limit);
    return std::string(head) + "\n...[truncated " + std::to_string(s.size() - head.size()) + " bytes]";
}

std::string strip_ansi(std::string_view s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i)
    {
        if (s[i] == '\x1b' && i + 1 < s.size() && s[i + 1] == '[')
        {
            i += 2;
            while (i < s.size() && !(s[i] >= '@' && s[i] <= '~'))
                ++i;
            continue;
        }
        out += s[i];
    }
    return out;
}

std::string cell_header(const Cell& cell, std::size_t index)
{
    return "### [" + std::to_string(index + 1) + "] " + std::string(to_string(cell.kind)) + " cell (id=" + cell.id +
           ", by " + std::string(to_string(cell.provenance)) + ")";
}

std::string render_elided(const Cell& cell, std::size_t index)
{
    return cell_header(cell, index) + " [body elided]\n";
}

std::string omitted_marker(std::size_t n)
{
    return "[" + std::to_string(n) + " earlier cell" + (n == 1 ? "" : "s") + " omitted]\n";
}

} // namespace

std::string render_output(const Output& out)
{
    switch (out.kind)
    {
        case OutputKind::stream_stdout:
            return cap(out.text, kMaxOutputBytes);
        case OutputKind::stream_stderr:
            return "[stderr] " + cap(out.text, kMaxOutputBytes);
        case OutputKind::rich:
            if (out.is_image() || out.text.size() > kRichPlaceholderBytes)
                return "[" + out.mime_type + " output, " + std::to_string(out.text.size()) + " bytes]";
            return "[" + out.mime_type + "] " + cap(out.text, kMaxOutputBytes);
        case OutputKind::error: {
            std::string s = "[error] " + out.ename + ": " + out.evalue;
            if (!out.traceback.empty())
                s += "\n" + cap(strip_ansi(text::join(out.traceback, "\n")), kMaxOutputBytes);
            return s;
        }
    }
    return {};
}

std::string render_cell(const Cell& cell, std::size_t index)
{
    std::string s = cell_header(cell, index) + "\n" + cell.source;
    if (!cell.source.empty() && cell.source.back() != '\n')
        s += '\n';
    if (!cell.outputs.empty())
    {
        s += "--- output ---\n";
        for (const auto& o: cell.outputs)
        {
            s += render_output(o);
            if (s.back() != '\n')
                s += '\n';
        }
    }
    return s;
}

std::string render_context(const Notebook& nb, std::size_t budget)
{
    const auto& cells = nb.cells();
    if (cells.empty() || budget == 0)
        return {};

    auto n = cells.size();
    std::vector<std::string> parts(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        parts[i] = render_cell(cells[i], i);
        total += parts[i].size();
    }
    if (total <= budget)
        return text::join(parts);

    for (std::size_t i = 0; i + 1 < n && total > budget; ++i)
    {
        auto elided = render_elided(cells[i], i);
        if (elided.size() < parts[i].size())
        {
            total -= parts[i].size() - elided.size();
            parts[i] = std::move(elided);
        }
    }

    std::size_t dropped = 0;
    auto with_marker = [&] { return total + (dropped ? omitted_marker(dropped).size() : 0); };
    while (dropped + 1 < n && with_marker() > budget)
    {
        total -= parts[dropped].size();
        ++dropped;
    }

    if (with_marker() <= budget)
    {
        std::string out = dropped ? omitted_marker(dropped) : std::string();
        for (std::size_t i = dropped; i < n; ++i)
            out += parts[i];
        return out;
    }

    // The last cell alone does not fit: keep its head.
    const std::string marker = "\n...[cell truncated]\n";
    const auto& last = parts[n - 1];
    if (budget <= marker.size())
        return std::string(text::utf8_prefix(last, budget));
    return std::string(text::utf8_prefix(last, budget - marker.size())) + marker;
}

// ---------------------------------------------------------------------------

SharedNotebook::SharedNotebook(Notebook nb, CommitHook on_commit): _nb(std::move(nb)), _on_commit(std::move(on_commit))
{
}

Notebook SharedNotebook::snapshot() const
{
    std::lock_guard lock(_mutex);
    return _nb;
}

std::string SharedNotebook::append_cell(CellKind kind, std::string source, Provenance provenance)
{
    std::lock_guard lock(_mutex);
    auto id = _nb.append_cell(kind, std::move(source), provenance);
    if (_on_commit)
        _on_commit(_nb);
    return id;
}

void SharedNotebook::set_execution(std::string_view id, std::vector<Output> outputs, std::optional<int> execution_count)
{
    std::lock_guard lock(_mutex);
    _nb.set_execution(id, std::move(outputs), execution_count);
    if (_on_commit)
        _on_commit(_nb);
}

void SharedNotebook::replace(Notebook nb)
{
    std::lock_guard lock(_mutex);
    _nb = std::move(nb);
    if (_on_commit)
        _on_commit(_nb);
}

void SharedNotebook::set_commit_hook(CommitHook hook)
{
    std::lock_guard lock(_mutex);
    _on_commit = std::move(hook);
}

} // namespace capy
