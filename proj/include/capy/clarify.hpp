// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/llm.hpp"
#include "capy/notebook.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace capy
{

struct ClarifyTurn
{
    std::string question;
    std::string answer;

    friend bool operator==(const ClarifyTurn&, const ClarifyTurn&) = default;
};

struct ClarifyThread
{
    std::string cell_id;
    std::vector<ClarifyTurn> turns;
    /// Set once the anchoring cell has disappeared; the thread stays readable.
    bool closed = false;

    friend bool operator==(const ClarifyThread&, const ClarifyThread&) = default;
};

json to_json(const ClarifyThread& t);
ClarifyThread clarify_thread_from_json(const json& j);

/// Prompt for one clarification: notebook context, the selected cell, the
/// earlier turns of its thread, then the question.
std::vector<llm::ChatMessage> clarify_messages(const Notebook& nb, const Cell& cell, const ClarifyThread& thread,
                                               const std::string& question, std::size_t context_budget);

/// Threads keyed by cell id. Asks on the same thread are serialized; asks on
/// different threads run concurrently. Never touches the notebook.
class ClarifyStore
{
public:
    ClarifyStore() = default;
    explicit ClarifyStore(std::vector<ClarifyThread> threads);

    /// Throws UnknownCell, ValidationError (empty question), or gateway errors.
    /// A failed call leaves the thread unchanged.
    std::string ask(llm::Gateway& gateway, const Notebook& nb, const std::string& cell_id, const std::string& question,
                    const llm::ModelRef& model, std::size_t context_budget = 24'000);

    [[nodiscard]] std::optional<ClarifyThread> thread(const std::string& cell_id) const;
    [[nodiscard]] std::vector<ClarifyThread> threads() const;

    /// Closes threads whose cells are no longer in `nb`.
    void sync(const Notebook& nb);

private:
    struct Slot
    {
        std::mutex busy;
        ClarifyThread thread;
    };
    std::shared_ptr<Slot> slot(const std::string& cell_id);

    mutable std::mutex _mutex;
    std::map<std::string, std::shared_ptr<Slot>> _slots;
};

} // namespace capy
