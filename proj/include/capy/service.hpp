// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "capy/executor.hpp"
#include "capy/llm.hpp"
#include "capy/settings.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <string>

namespace capy
{

struct ServiceOptions
{
    /// Sessions are saved under <state_dir>/<id>/ and restored at startup.
    /// Empty keeps everything in memory.
    std::string state_dir;
    /// Interval of heartbeat events while a run is active.
    std::chrono::milliseconds heartbeat{2000};
    /// One executor per session. Defaults to a worker process per session.
    std::function<std::unique_ptr<CodeExecutor>()> executor_factory;
    Settings default_settings;
};

struct ListenAddress
{
    std::string host = "127.0.0.1";
    int port = 8765;
};

/// "host:port", "host" or ":port". Throws ValidationError.
ListenAddress parse_listen_addr(std::string_view s);

/// Options from CAPY_STATE_DIR; everything else keeps its default.
ServiceOptions service_options_from_environment();

/// HTTP session API. Runs stream their events over SSE; every event of a run
/// is kept so late subscribers replay the run from its start.
class SessionService
{
public:
    explicit SessionService(llm::Gateway& gateway, ServiceOptions options = {});
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Returns the bound port. Throws ValidationError when binding fails.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    /// Stops active runs and the server.
    void stop();

    [[nodiscard]] std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

} // namespace capy
