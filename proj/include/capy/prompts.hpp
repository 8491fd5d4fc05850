// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>

/// Prompt templates. The files under assets/prompts are compiled into the
/// binary; a directory named by CAPY_PROMPTS_DIR (or set_override_dir) may
/// shadow any of them at runtime with a file of the same name.
namespace capy::prompts
{

/// Template text for `name` (file stem, e.g. "eda_system").
std::string get(std::string_view name);

/// get(name) with `{{placeholder}}` substitution.
std::string render(std::string_view name, const std::map<std::string, std::string>& vars);

void set_override_dir(std::string dir);

namespace detail
{
const std::map<std::string, std::string, std::less<>>& embedded();
}

} // namespace capy::prompts
