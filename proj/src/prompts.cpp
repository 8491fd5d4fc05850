// SPDX-License-Identifier: Apache-2.0
#include "capy/prompts.hpp"

#include "capy/text.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace capy::prompts
{

namespace
{

std::mutex g_mutex;
std::string g_override_dir;
bool g_override_set = false;

std::string override_dir()
{
    std::lock_guard lock(g_mutex);
    if (g_override_set)
        return g_override_dir;
    if (const char* env = std::getenv("CAPY_PROMPTS_DIR"))
        return env;
    return {};
}

} // namespace

void set_override_dir(std::string dir)
{
    std::lock_guard lock(g_mutex);
    g_override_dir = std::move(dir);
    g_override_set = true;
}

std::string get(std::string_view name)
{
    if (auto dir = override_dir(); !dir.empty())
    {
        auto path = std::filesystem::path(dir) / (std::string(name) + ".txt");
        if (std::ifstream in(path); in)
        {
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        }
    }
    const auto& assets = detail::embedded();
    auto it = assets.find(name);
    if (it == assets.end())
        throw std::out_of_range("unknown prompt asset: " + std::string(name));
    return it->second;
}

std::string render(std::string_view name, const std::map<std::string, std::string>& vars)
{
    return text::fill_template(get(name), vars);
}

} // namespace capy::prompts
