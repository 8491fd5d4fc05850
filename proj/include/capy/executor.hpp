// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/notebook.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace capy
{

enum class ExecStatus
{
    ok,
    error,
    interrupted,
    timeout
};

std::string_view to_string(ExecStatus s);

struct ExecutionResult
{
    ExecStatus status = ExecStatus::ok;
    std::vector<Output> outputs;
    std::int64_t duration_ms = 0;

    /// The error output when status is error.
    [[nodiscard]] const Output* error() const;
};

json to_json(const ExecutionResult& r);

inline constexpr int kDefaultCellTimeoutMs = 120'000;

/// What the agent loop needs from an execution backend.
class CodeExecutor
{
public:
    virtual ~CodeExecutor() = default;
    virtual ExecutionResult execute(const std::string& source, int timeout_ms = kDefaultCellTimeoutMs) = 0;
    virtual void interrupt() = 0;
    virtual void reset() = 0;
};

struct ExecutorOptions
{
    /// Worker argv. Empty means CAPY_WORKER_CMD (split on spaces) or
    /// "python3 -u -m capy_worker".
    std::vector<std::string> command;
    /// Delay before an interrupt escalates from the protocol message to SIGINT.
    std::chrono::milliseconds sigint_after{1000};
    /// Delay before an unanswered interrupt kills and respawns the worker.
    std::chrono::milliseconds kill_after{1800};
};

std::vector<std::string> default_worker_command();

/// Out-of-process worker speaking line-delimited JSON. Executions are
/// serialized; interrupt() may be called from any thread and is the only
/// call that overtakes a running execute().
class Executor: public CodeExecutor
{
public:
    explicit Executor(ExecutorOptions options = {});
    ~Executor() override;

    Executor(const Executor&) = delete;
    Executor& operator=(const Executor&) = delete;

    /// Throws WorkerDead when the worker exited; reset() recovers.
    ExecutionResult execute(const std::string& source, int timeout_ms = kDefaultCellTimeoutMs) override;
    void interrupt() override;
    /// Kills the worker (if any) and starts a fresh one. Throws SpawnError.
    void reset() override;

    [[nodiscard]] bool alive() const;
    [[nodiscard]] int pid() const;

private:
    struct Process
    {
        int pid = -1;
        int in_fd = -1;
        int out_fd = -1;
        std::string buffer;
    };

    void spawn_locked();
    void kill_locked();
    bool read_line(std::string& line, int wait_ms);
    void send(const std::string& line);

    ExecutorOptions _options;
    std::mutex _exec_mutex;
    mutable std::mutex _proc_mutex;
    Process _proc;
    bool _dead = false;
    std::int64_t _next_request = 1;

    std::atomic<bool> _running{false};
    std::atomic<std::int64_t> _interrupt_at{0};
};

} // namespace capy
