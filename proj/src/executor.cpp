// SPDX-License-Identifier: Apache-2.0
#include "capy/executor.hpp"

#include "capy/errors.hpp"

#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace capy
{

namespace
{

using Clock = std::chrono::steady_clock;

std::int64_t now_ms()
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now().time_since_epoch()).count();
}

std::optional<ExecStatus> parse_status(std::string_view s)
{
    if (s == "ok")
        return ExecStatus::ok;
    if (s == "error")
        return ExecStatus::error;
    if (s == "interrupted")
        return ExecStatus::interrupted;
    if (s == "timeout")
        return ExecStatus::timeout;
    return std::nullopt;
}

void append_stream(std::vector<Output>& outs, OutputKind kind, const std::string& text)
{
    if (!outs.empty() && outs.back().kind == kind)
        outs.back().text += text;
    else
        outs.push_back(kind == OutputKind::stream_stdout ? Output::stdout_text(text) : Output::stderr_text(text));
}

// Enforces: error status carries exactly one error output, ok carries none.
void normalize(ExecutionResult& r)
{
    std::vector<Output> kept;
    bool has_error = false;
    for (auto& o: r.outputs)
    {
        if (o.kind == OutputKind::error)
        {
            if (has_error)
                continue;
            has_error = true;
        }
        kept.push_back(std::move(o));
    }
    r.outputs = std::move(kept);
    if (has_error && r.status == ExecStatus::ok)
        r.status = ExecStatus::error;
    if (!has_error && r.status == ExecStatus::error)
        r.outputs.push_back(Output::error_output("WorkerError", "execution failed without an error report"));
}

} // namespace

std::string_view to_string(ExecStatus s)
{
    switch (s)
    {
        case ExecStatus::ok: return "ok";
        case ExecStatus::error: return "error";
        case ExecStatus::interrupted: return "interrupted";
        case ExecStatus::timeout: return "timeout";
    }
    return "error";
}

const Output* ExecutionResult::error() const
{
    for (const auto& o: outputs)
        if (o.kind == OutputKind::error)
            return &o;
    return nullptr;
}

json to_json(const ExecutionResult& r)
{
    json outs = json::array();
    for (const auto& o: r.outputs)
        outs.push_back(output_to_json(o));
    return {{"status", std::string(to_string(r.status))}, {"duration_ms", r.duration_ms}, {"outputs", outs}};
}

std::vector<std::string> default_worker_command()
{
    std::string cmd = "python3 -u -m capy_worker";
    if (const char* env = std::getenv("CAPY_WORKER_CMD"); env && *env)
        cmd = env;
    std::vector<std::string> argv;
    std::istringstream ss(cmd);
    for (std::string part; ss >> part;)
        argv.push_back(part);
    return argv;
}

Executor::Executor(ExecutorOptions options): _options(std::move(options))
{
    if (_options.command.empty())
        _options.command = default_worker_command();
    std::signal(SIGPIPE, SIG_IGN);
}

Executor::~Executor()
{
    std::lock_guard lock(_proc_mutex);
    kill_locked();
}

bool Executor::alive() const
{
    std::lock_guard lock(_proc_mutex);
    return _proc.pid > 0 && !_dead;
}

int Executor::pid() const
{
    std::lock_guard lock(_proc_mutex);
    return _proc.pid;
}

void Executor::spawn_locked()
{
    int in_pipe[2];
    int out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0)
        throw SpawnError(std::string("pipe: ") + std::strerror(errno));
    if (pipe2(out_pipe, O_CLOEXEC) != 0)
    {
        close(in_pipe[0]);
        close(in_pipe[1]);
        throw SpawnError(std::string("pipe: ") + std::strerror(errno));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], 0);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);

    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    sigset_t defaults;
    sigemptyset(&defaults);
    sigaddset(&defaults, SIGPIPE);
    sigaddset(&defaults, SIGINT);
    sigset_t empty;
    sigemptyset(&empty);
    posix_spawnattr_setsigdefault(&attr, &defaults);
    posix_spawnattr_setsigmask(&attr, &empty);
    posix_spawnattr_setpgroup(&attr, 0);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETSIGDEF | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETPGROUP);

    std::vector<std::string> env_store;
    bool has_mpl = false;
    for (char** e = environ; e && *e; ++e)
    {
        env_store.emplace_back(*e);
        has_mpl |= env_store.back().starts_with("MPLBACKEND=");
    }
    if (!has_mpl)
        env_store.emplace_back("MPLBACKEND=Agg");
    env_store.emplace_back("PYTHONUNBUFFERED=1");
    std::vector<char*> envp;
    for (auto& s: env_store)
        envp.push_back(s.data());
    envp.push_back(nullptr);

    std::vector<std::string> argv_store = _options.command;
    std::vector<char*> argv;
    for (auto& s: argv_store)
        argv.push_back(s.data());
    argv.push_back(nullptr);

    pid_t pid = -1;
    int rc = posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    close(in_pipe[0]);
    close(out_pipe[1]);
    if (rc != 0)
    {
        close(in_pipe[1]);
        close(out_pipe[0]);
        throw SpawnError("cannot start worker '" + _options.command[0] + "': " + std::strerror(rc));
    }
    _proc = Process{pid, in_pipe[1], out_pipe[0], {}};
    _dead = false;
}

void Executor::kill_locked()
{
    if (_proc.pid > 0)
    {
        ::kill(-_proc.pid, SIGKILL);
        ::kill(_proc.pid, SIGKILL);
        int status = 0;
        waitpid(_proc.pid, &status, 0);
    }
    if (_proc.in_fd >= 0)
        close(_proc.in_fd);
    if (_proc.out_fd >= 0)
        close(_proc.out_fd);
    _proc = Process{};
}

void Executor::send(const std::string& line)
{
    std::lock_guard lock(_proc_mutex);
    if (_proc.in_fd < 0)
        return;
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size())
    {
        auto n = ::write(_proc.in_fd, data.data() + off, data.size() - off);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            return; // the read side reports the dead worker
        }
        off += static_cast<std::size_t>(n);
    }
}

// Returns true with a complete line, false on timeout. Throws WorkerDead on EOF.
bool Executor::read_line(std::string& line, int wait_ms)
{
    while (true)
    {
        if (auto nl = _proc.buffer.find('\n'); nl != std::string::npos)
        {
            line = _proc.buffer.substr(0, nl);
            _proc.buffer.erase(0, nl + 1);
            return true;
        }
        pollfd pfd{_proc.out_fd, POLLIN, 0};
        int rc = ::poll(&pfd, 1, wait_ms);
        if (rc < 0 && errno == EINTR)
            continue;
        if (rc <= 0)
            return false;
        char buf[65536];
        auto n = ::read(_proc.out_fd, buf, sizeof buf);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            throw WorkerDead("worker exited");
        _proc.buffer.append(buf, static_cast<std::size_t>(n));
        wait_ms = 0;
    }
}

ExecutionResult Executor::execute(const std::string& source, int timeout_ms)
{
    std::lock_guard exec_lock(_exec_mutex);
    {
        std::lock_guard lock(_proc_mutex);
        if (_dead)
            throw WorkerDead("worker is dead; reset the session");
        if (_proc.pid <= 0)
            spawn_locked();
    }

    auto id = _next_request++;
    _interrupt_at = 0;
    _running = true;
    struct Clear
    {
        std::atomic<bool>& flag;
        ~Clear() { flag = false; }
    } clear{_running};

    auto start = now_ms();
    send(json{{"op", "exec"}, {"id", id}, {"code", source}, {"timeout_ms", timeout_ms}}.dump());

    ExecutionResult result;
    bool timed_out = false;
    bool sigint_sent = false;
    // The worker enforces the timeout itself; this is the backstop.
    const std::int64_t backstop = timeout_ms > 0 ? start + timeout_ms + 250 : 0;

    while (true)
    {
        auto now = now_ms();
        if (backstop && !timed_out && now >= backstop)
        {
            timed_out = true;
            if (_interrupt_at == 0)
            {
                _interrupt_at = now;
                send(R"({"op":"interrupt"})");
            }
        }
        if (auto at = _interrupt_at.load(); at != 0)
        {
            auto elapsed = now - at;
            if (!sigint_sent && elapsed >= _options.sigint_after.count())
            {
                sigint_sent = true;
                std::lock_guard lock(_proc_mutex);
                if (_proc.pid > 0)
                    ::kill(_proc.pid, SIGINT);
            }
            if (elapsed >= _options.kill_after.count())
            {
                {
                    std::lock_guard lock(_proc_mutex);
                    kill_locked();
                    spawn_locked();
                }
                result.status = timed_out ? ExecStatus::timeout : ExecStatus::interrupted;
                result.outputs.push_back(
                    Output::stderr_text("worker did not respond to the interrupt and was restarted; state was lost\n"));
                result.duration_ms = now_ms() - start;
                return result;
            }
        }

        std::string line;
        bool got = false;
        try
        {
            got = read_line(line, 20);
        }
        catch (const WorkerDead&)
        {
            std::lock_guard lock(_proc_mutex);
            kill_locked();
            _dead = true;
            throw;
        }
        if (!got)
            continue;

        auto ev = json::parse(line, nullptr, false);
        if (ev.is_discarded() || !ev.is_object() || ev.value("id", json()) != json(id))
            continue;
        auto kind = ev.value("event", std::string());
        if (kind == "stream")
        {
            auto name = ev.value("name", std::string("stdout"));
            append_stream(result.outputs, name == "stderr" ? OutputKind::stream_stderr : OutputKind::stream_stdout,
                          ev.value("text", std::string()));
        }
        else if (kind == "display")
        {
            if (!ev.contains("data") || !ev["data"].is_object() || ev["data"].empty())
                continue;
            bool is_result = ev.value("kind", std::string()) == "execute_result";
            auto out = rich_output_from_bundle(ev["data"], is_result);
            if (is_result && ev.contains("execution_count") && ev["execution_count"].is_number_integer())
                out.execution_count = ev["execution_count"].get<int>();
            result.outputs.push_back(std::move(out));
        }
        else if (kind == "error")
        {
            std::vector<std::string> tb;
            if (ev.contains("traceback") && ev["traceback"].is_array())
                for (const auto& l: ev["traceback"])
                    if (l.is_string())
                        tb.push_back(l.get<std::string>());
            result.outputs.push_back(
                Output::error_output(ev.value("ename", std::string("Error")), ev.value("evalue", std::string()), tb));
        }
        else if (kind == "done")
        {
            auto status = parse_status(ev.value("status", std::string("error")));
            result.status = status.value_or(ExecStatus::error);
            if (timed_out && result.status == ExecStatus::interrupted)
                result.status = ExecStatus::timeout;
            result.duration_ms = now_ms() - start;
            normalize(result);
            return result;
        }
    }
}

void Executor::interrupt()
{
    if (!_running)
        return;
    std::int64_t expected = 0;
    if (_interrupt_at.compare_exchange_strong(expected, now_ms()))
        send(R"({"op":"interrupt"})");
}

void Executor::reset()
{
    interrupt();
    std::lock_guard exec_lock(_exec_mutex);
    std::lock_guard lock(_proc_mutex);
    kill_locked();
    spawn_locked();
}

} // namespace capy
