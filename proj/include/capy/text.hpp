// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace capy::text
{

/// Number of Unicode scalar values in a UTF-8 string. Invalid lead bytes
/// count as one scalar each so the function is total.
std::size_t scalar_length(std::string_view utf8);

/// Byte offset of the scalar at `scalar_index` (== size() for one past end).
/// Returns nullopt when the index is past the end.
std::optional<std::size_t> byte_offset(std::string_view utf8, std::size_t scalar_index);

/// Substring by scalar offsets [start, end). Returns nullopt if out of range.
std::optional<std::string> scalar_substr(std::string_view utf8, std::size_t start, std::size_t end);

/// Longest prefix of at most `max_bytes` bytes that does not split a UTF-8 sequence.
std::string_view utf8_prefix(std::string_view utf8, std::size_t max_bytes);

/// Longest suffix of at most `max_bytes` bytes that does not split a UTF-8 sequence.
std::string_view utf8_suffix(std::string_view utf8, std::size_t max_bytes);

/// Python's `str.splitlines(keepends=True)` restricted to '\n' terminators,
/// which is how notebook files store multi-line strings.
std::vector<std::string> split_lines_keep_ends(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep = "");

std::string trim(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Lower-cased alphanumeric word tokens.
std::set<std::string> word_tokens(std::string_view s);

std::string html_escape(std::string_view s);

/// Replaces every `{{name}}` with vars[name]. Throws std::out_of_range when a
/// placeholder has no value.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

std::string base64_encode(std::string_view bytes);
std::optional<std::string> base64_decode(std::string_view b64);

} // namespace capy::text
