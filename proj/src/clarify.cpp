// SPDX-License-Identifier: Apache-2.0
#include "capy/clarify.hpp"

#include "capy/errors.hpp"
#include "capy/prompts.hpp"
#include "capy/text.hpp"

namespace capy
{

json to_json(const ClarifyThread& t)
{
    json turns = json::array();
    for (const auto& turn: t.turns)
        turns.push_back({{"question", turn.question}, {"answer", turn.answer}});
    return {{"cell_id", t.cell_id}, {"turns", turns}, {"closed", t.closed}};
}

ClarifyThread clarify_thread_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("cell_id") || !j["cell_id"].is_string())
        throw ValidationError("clarify thread needs a cell_id");
    ClarifyThread t;
    t.cell_id = j["cell_id"].get<std::string>();
    t.closed = j.value("closed", false);
    for (const auto& turn: j.value("turns", json::array()))
        t.turns.push_back({turn.value("question", ""), turn.value("answer", "")});
    return t;
}

std::vector<llm::ChatMessage> clarify_messages(const Notebook& nb, const Cell& cell, const ClarifyThread& thread,
                                               const std::string& question, std::size_t context_budget)
{
    std::string history;
    for (const auto& turn: thread.turns)
        history += "Q: " + turn.question + "\nA: " + turn.answer + "\n\n";
    if (history.empty())
        history = "(none)";
    auto index = nb.index_of(cell.id).value_or(0);
    return {
        llm::ChatMessage::system(prompts::get("clarify_system")),
        llm::ChatMessage::user(prompts::render("clarify_turn", {{"notebook_context", render_context(nb, context_budget)},
                                                                {"cell", render_cell(cell, index)},
                                                                {"thread", history},
                                                                {"question", question}})),
    };
}

ClarifyStore::ClarifyStore(std::vector<ClarifyThread> threads)
{
    for (auto& t: threads)
    {
        auto s = std::make_shared<Slot>();
        auto id = t.cell_id;
        s->thread = std::move(t);
        _slots[id] = std::move(s);
    }
}

std::shared_ptr<ClarifyStore::Slot> ClarifyStore::slot(const std::string& cell_id)
{
    std::lock_guard lock(_mutex);
    auto& s = _slots[cell_id];
    if (!s)
    {
        s = std::make_shared<Slot>();
        s->thread.cell_id = cell_id;
    }
    return s;
}

std::string ClarifyStore::ask(llm::Gateway& gateway, const Notebook& nb, const std::string& cell_id,
                              const std::string& question, const llm::ModelRef& model, std::size_t context_budget)
{
    if (text::trim(question).empty())
        throw ValidationError("question must be nonempty");
    const auto* cell = nb.find(cell_id);
    if (!cell)
    {
        std::lock_guard lock(_mutex);
        if (auto it = _slots.find(cell_id); it != _slots.end())
            it->second->thread.closed = true;
        throw UnknownCell("no cell '" + cell_id + "'");
    }

    auto s = slot(cell_id);
    std::lock_guard busy(s->busy);
    ClarifyThread current;
    {
        std::lock_guard lock(_mutex);
        current = s->thread;
    }
    auto answer = gateway.complete(model, clarify_messages(nb, *cell, current, question, context_budget), "clarify");
    std::lock_guard lock(_mutex);
    s->thread.closed = false;
    s->thread.turns.push_back({question, answer});
    return answer;
}

std::optional<ClarifyThread> ClarifyStore::thread(const std::string& cell_id) const
{
    std::lock_guard lock(_mutex);
    auto it = _slots.find(cell_id);
    if (it == _slots.end())
        return std::nullopt;
    return it->second->thread;
}

std::vector<ClarifyThread> ClarifyStore::threads() const
{
    std::lock_guard lock(_mutex);
    std::vector<ClarifyThread> out;
    for (const auto& [_, s]: _slots)
        if (!s->thread.turns.empty() || s->thread.closed)
            out.push_back(s->thread);
    return out;
}

void ClarifyStore::sync(const Notebook& nb)
{
    std::lock_guard lock(_mutex);
    for (auto& [id, s]: _slots)
        if (!nb.find(id))
            s->thread.closed = true;
}

} // namespace capy
