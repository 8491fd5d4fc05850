// SPDX-License-Identifier: Apache-2.0
#include "capy/errors.hpp"
#include "capy/notebook.hpp"
#include "support/generators.hpp"
#include "support/notebook_oracle.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace capy;
namespace fs = std::filesystem;

namespace
{

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<fs::path> fixture_files()
{
    std::vector<fs::path> files;
    for (const auto& e: fs::directory_iterator(fs::path(CAPY_FIXTURES) / "notebooks"))
        if (e.path().extension() == ".ipynb")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace

TEST_CASE("parse: empty notebook")
{
    auto nb = parse_notebook(R"({"cells": [], "metadata": {}, "nbformat": 4, "nbformat_minor": 5})");
    CHECK(nb.size() == 0);
}

TEST_CASE("parse: single code cell defaults to user provenance")
{
    auto nb = parse_notebook(
        R"({"cells": [{"cell_type": "code", "source": "1+1", "metadata": {}, "outputs": [], "execution_count": null}],
            "metadata": {}, "nbformat": 4, "nbformat_minor": 4})");
    REQUIRE(nb.size() == 1);
    CHECK(nb.cells()[0].kind == CellKind::code);
    CHECK(nb.cells()[0].source == "1+1");
    CHECK(nb.cells()[0].provenance == Provenance::user);
    CHECK_FALSE(nb.cells()[0].id.empty());
}

TEST_CASE("parse: errors")
{
    CHECK_THROWS_AS(parse_notebook("{not json"), MalformedFile);
    CHECK_THROWS_AS(parse_notebook("[]"), MalformedFile);
    CHECK_THROWS_AS(parse_notebook(R"({"cells": [], "metadata": {}})"), MalformedFile);
    CHECK_THROWS_AS(parse_notebook(R"({"cells": [], "metadata": {}, "nbformat": 3, "nbformat_minor": 0})"),
                    UnsupportedVersion);
    CHECK_THROWS_AS(parse_notebook(R"({"cells": [{"cell_type": "raw", "source": ""}], "nbformat": 4})"), MalformedFile);
    CHECK_THROWS_AS(
        parse_notebook(R"({"cells": [{"cell_type": "code", "id": "a", "source": ""},
                                     {"cell_type": "code", "id": "a", "source": ""}], "nbformat": 4})"),
        MalformedFile);
    CHECK_THROWS_AS(parse_notebook(R"({"cells": [{"cell_type": "code", "source": "",
        "outputs": [{"output_type": "stream", "name": "stdlog", "text": ""}]}], "nbformat": 4})"),
                    MalformedFile);
}

TEST_CASE("round trip over the fixture corpus matches the independent normalizer")
{
    auto files = fixture_files();
    REQUIRE(files.size() >= 10);
    for (const auto& f: files)
    {
        CAPTURE(f.filename().string());
        auto raw = read_file(f);
        auto nb = parse_notebook(raw);
        auto out = serialize_notebook(nb);
        CHECK(out == testing::normalize_notebook_file(raw));
        CHECK(parse_notebook(out) == nb);
        CHECK(serialize_notebook(parse_notebook(out)) == out);
    }
}

TEST_CASE("fixture details survive parsing")
{
    auto dir = fs::path(CAPY_FIXTURES) / "notebooks";

    auto prov = load_notebook((dir / "07_provenance.ipynb").string());
    CHECK(prov.cells()[0].provenance == Provenance::user);
    CHECK(prov.cells()[1].provenance == Provenance::assistant);
    CHECK(prov.cells()[2].outputs.size() == 2);
    CHECK(prov.cells()[2].outputs[0].kind == OutputKind::stream_stderr);
    CHECK_FALSE(prov.cells()[1].metadata.contains(std::string(kProvenanceKey)));

    auto img = load_notebook((dir / "05_image.ipynb").string());
    REQUIRE(img.cells()[0].outputs.size() == 1);
    CHECK(img.cells()[0].outputs[0].mime_type == "image/png");
    CHECK(img.cells()[0].has_image_output());
    CHECK(img.cells()[0].outputs[0].alternates.contains("text/plain"));

    auto err = load_notebook((dir / "06_error.ipynb").string());
    CHECK(err.cells()[0].outputs[0].kind == OutputKind::error);
    CHECK(err.cells()[0].outputs[0].ename == "ZeroDivisionError");

    auto old = load_notebook((dir / "12_old_minor.ipynb").string());
    CHECK(old.nbformat_minor == 5);
    CHECK(old.cells()[0].id == "cell-1");
    CHECK(old.kernel_language() == "python");

    auto unknown = load_notebook((dir / "08_unknown_metadata.ipynb").string());
    CHECK(unknown.unknown.contains("x_custom_top"));
    CHECK(unknown.metadata.contains("widgets"));
}

TEST_CASE("serialize: empty notebook is a minimal v4 file")
{
    Notebook nb;
    auto out = serialize_notebook(nb);
    auto j = json::parse(out);
    CHECK(j["nbformat"] == 4);
    CHECK(j["cells"].empty());
    CHECK(parse_notebook(out) == nb);
}

TEST_CASE("serialize: assistant provenance is written under the reserved key")
{
    Notebook nb;
    nb.append_cell(CellKind::code, "x = 1", Provenance::assistant);
    auto j = json::parse(serialize_notebook(nb));
    CHECK(j["cells"][0]["metadata"]["capy_provenance"] == "assistant");
    CHECK(parse_notebook(serialize_notebook(nb)).cells()[0].provenance == Provenance::assistant);
}

TEST_CASE("property: parse(serialize(nb)) == nb for random notebooks")
{
    testing::Rng rng(20241019);
    for (int i = 0; i < 300; ++i)
    {
        auto nb = testing::random_notebook(rng);
        auto round = parse_notebook(serialize_notebook(nb));
        REQUIRE(round == nb);
    }
}

TEST_CASE("append_cell")
{
    Notebook nb;
    auto a = nb.append_cell(CellKind::markdown, "plan", Provenance::assistant);
    CHECK(nb.size() == 1);
    auto b = nb.append_cell(CellKind::code, "x", Provenance::user);
    CHECK(a != b);
    CHECK(nb.cells()[0].id == a);
    CHECK(nb.cells()[1].id == b);
    CHECK(nb.cells()[1].outputs.empty());
}

TEST_CASE("append_cell skips ids already present in a parsed file")
{
    auto nb = parse_notebook(R"({"cells": [{"cell_type": "markdown", "id": "capy-00000001", "source": "x"}],
                                "metadata": {}, "nbformat": 4, "nbformat_minor": 5})");
    auto id = nb.append_cell(CellKind::markdown, "y", Provenance::user);
    CHECK(id != "capy-00000001");
}

TEST_CASE("ids never collide across 10^6 appends")
{
    Notebook nb;
    std::set<std::string> ids;
    for (int i = 0; i < 1'000'000; ++i)
        ids.insert(nb.append_cell(CellKind::markdown, {}, Provenance::user));
    CHECK(ids.size() == 1'000'000);
    CHECK(nb.size() == 1'000'000);
}

TEST_CASE("render_context: trivial cases")
{
    Notebook nb;
    CHECK(render_context(nb, 1000).empty());
    nb.append_cell(CellKind::markdown, "# Title", Provenance::user);
    auto id = nb.append_cell(CellKind::code, "print(1)", Provenance::assistant);
    nb.set_execution(id, {Output::stdout_text("1\n")}, 1);
    auto r = render_context(nb, 10'000);
    CHECK(r.find("# Title") != std::string::npos);
    CHECK(r.find("print(1)") != std::string::npos);
    CHECK(r.find("1\n") != std::string::npos);
    CHECK(r.find("by assistant") != std::string::npos);
    CHECK(r.find("elided") == std::string::npos);
}

TEST_CASE("render_context: large rich outputs become placeholders")
{
    Notebook nb;
    auto id = nb.append_cell(CellKind::code, "show()", Provenance::user);
    nb.set_execution(id, {Output::display("text/html", std::string(kRichPlaceholderBytes + 1, 'x')),
                          Output::display("image/png", "iVBOR")},
                     1);
    auto r = render_context(nb, 100'000);
    CHECK(r.find("[text/html output, 65537 bytes]") != std::string::npos);
    CHECK(r.find("[image/png output, 5 bytes]") != std::string::npos);
}

TEST_CASE("render_context: oldest bodies are elided first")
{
    Notebook nb;
    nb.append_cell(CellKind::markdown, std::string(400, 'a'), Provenance::user);
    nb.append_cell(CellKind::markdown, std::string(400, 'b'), Provenance::user);
    nb.append_cell(CellKind::markdown, "last cell", Provenance::user);
    auto full = render_context(nb, 100'000);
    auto r = render_context(nb, full.size() - 100);
    CHECK(r.size() <= full.size() - 100);
    CHECK(r.find(std::string(400, 'a')) == std::string::npos);
    CHECK(r.find(std::string(400, 'b')) != std::string::npos);
    CHECK(r.find("[body elided]") != std::string::npos);
    CHECK(r.find(render_cell(nb.cells()[2], 2)) != std::string::npos);
}

TEST_CASE("render_context: an oversized last cell is clipped to the budget")
{
    Notebook nb;
    nb.append_cell(CellKind::markdown, std::string(1000, 'z'), Provenance::user);
    auto r = render_context(nb, 200);
    CHECK(r.size() <= 200);
    CHECK(r.find("[cell truncated]") != std::string::npos);
}

TEST_CASE("property: render_context respects the budget and keeps the last cell whole")
{
    testing::Rng rng(7);
    int checked = 0;
    for (int i = 0; i < 500; ++i)
    {
        auto nb = testing::random_notebook(rng, 20);
        if (nb.empty())
            continue;
        auto last = render_cell(nb.cells().back(), nb.size() - 1);
        auto full = render_context(nb, 1 << 30);
        auto budget = last.size() + 40 + testing::pick(rng, full.size() + 1);
        auto r = render_context(nb, budget);
        CAPTURE(i);
        REQUIRE(r.size() <= budget);
        REQUIRE(r.size() >= last.size());
        REQUIRE(r.compare(r.size() - last.size(), last.size(), last) == 0);
        CHECK(render_context(nb, budget) == r);
        ++checked;
    }
    CHECK(checked > 400);
}

TEST_CASE("save_notebook_atomic writes a parseable file")
{
    auto dir = fs::temp_directory_path() / "capy_nb_test";
    fs::create_directories(dir);
    auto path = (dir / "out.ipynb").string();
    Notebook nb;
    nb.append_cell(CellKind::markdown, "hello", Provenance::assistant);
    save_notebook_atomic(nb, path);
    CHECK(load_notebook(path) == nb);
    CHECK_FALSE(fs::exists(path + ".tmp"));
    fs::remove_all(dir);
}
