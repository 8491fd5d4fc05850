// SPDX-License-Identifier: Apache-2.0
#include "capy/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>
#include <utility>

namespace capy::text
{

namespace
{

bool is_continuation(unsigned char c)
{
    return (c & 0xC0) == 0x80;
}

std::size_t sequence_length(unsigned char lead)
{
    if (lead < 0x80)
        return 1;
    if ((lead & 0xE0) == 0xC0)
        return 2;
    if ((lead & 0xF0) == 0xE0)
        return 3;
    if ((lead & 0xF8) == 0xF0)
        return 4;
    return 1;
}

// Advances one scalar, never past the end and never into a truncated tail.
std::size_t next_scalar(std::string_view s, std::size_t pos)
{
    auto len = sequence_length(static_cast<unsigned char>(s[pos]));
    if (pos + len > s.size())
        return pos + 1;
    for (std::size_t k = 1; k < len; ++k)
        if (!is_continuation(static_cast<unsigned char>(s[pos + k])))
            return pos + 1;
    return pos + len;
}

} // namespace

std::size_t scalar_length(std::string_view utf8)
{
    std::size_t n = 0;
    for (std::size_t pos = 0; pos < utf8.size(); pos = next_scalar(utf8, pos))
        ++n;
    return n;
}

std::optional<std::size_t> byte_offset(std::string_view utf8, std::size_t scalar_index)
{
    std::size_t pos = 0;
    for (std::size_t i = 0; i < scalar_index; ++i)
    {
        if (pos >= utf8.size())
            return std::nullopt;
        pos = next_scalar(utf8, pos);
    }
    return pos;
}

std::optional<std::string> scalar_substr(std::string_view utf8, std::size_t start, std::size_t end)
{
    if (start > end)
        return std::nullopt;
    auto b = byte_offset(utf8, start);
    auto e = byte_offset(utf8, end);
    if (!b || !e)
        return std::nullopt;
    return std::string(utf8.substr(*b, *e - *b));
}

std::string_view utf8_prefix(std::string_view utf8, std::size_t max_bytes)
{
    if (utf8.size() <= max_bytes)
        return utf8;
    auto cut = max_bytes;
    while (cut > 0 && is_continuation(static_cast<unsigned char>(utf8[cut])))
        --cut;
    return utf8.substr(0, cut);
}

std::string_view utf8_suffix(std::string_view utf8, std::size_t max_bytes)
{
    if (utf8.size() <= max_bytes)
        return utf8;
    auto start = utf8.size() - max_bytes;
    while (start < utf8.size() && is_continuation(static_cast<unsigned char>(utf8[start])))
        ++start;
    return utf8.substr(start);
}

std::vector<std::string> split_lines_keep_ends(std::string_view s)
{
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < s.size())
    {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos)
        {
            lines.emplace_back(s.substr(start));
            break;
        }
        lines.emplace_back(s.substr(start, nl - start + 1));
        start = nl + 1;
    }
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i)
    {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::string trim(std::string_view s)
{
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    auto b = std::find_if_not(s.begin(), s.end(), issp);
    auto e = std::find_if_not(s.rbegin(), s.rend(), issp).base();
    return b < e ? std::string(b, e) : std::string();
}

bool starts_with_ci(std::string_view s, std::string_view prefix)
{
    if (s.size() < prefix.size())
        return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

std::set<std::string> word_tokens(std::string_view s)
{
    std::set<std::string> out;
    std::string cur;
    for (char ch: s)
    {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80)
            cur += static_cast<char>(std::tolower(c));
        else if (!cur.empty())
            out.insert(std::exchange(cur, {}));
    }
    if (!cur.empty())
        out.insert(cur);
    return out;
}

std::string html_escape(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (char c: s)
    {
        switch (c)
        {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& vars)
{
    std::string out;
    std::size_t pos = 0;
    while (true)
    {
        auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos)
        {
            out.append(tmpl.substr(pos));
            break;
        }
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos)
        {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        auto name = trim(tmpl.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end())
            throw std::out_of_range("template placeholder without value: " + name);
        out += it->second;
        pos = close + 2;
    }
    return out;
}

namespace
{
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes)
{
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size())
    {
        auto n = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                 static_cast<unsigned char>(bytes[i + 2]);
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += kB64[(n >> 6) & 63];
        out += kB64[n & 63];
        i += 3;
    }
    if (auto rest = bytes.size() - i; rest > 0)
    {
        unsigned n = static_cast<unsigned char>(bytes[i]) << 16;
        if (rest == 2)
            n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += rest == 2 ? kB64[(n >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::optional<std::string> base64_decode(std::string_view b64)
{
    std::array<int, 256> table{};
    table.fill(-1);
    for (std::size_t i = 0; i < kB64.size(); ++i)
        table[static_cast<unsigned char>(kB64[i])] = static_cast<int>(i);

    std::string out;
    unsigned buf = 0;
    int bits = 0;
    for (char c: b64)
    {
        if (c == '=' || c == '\n' || c == '\r')
            continue;
        auto v = table[static_cast<unsigned char>(c)];
        if (v < 0)
            return std::nullopt;
        buf = (buf << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8)
        {
            bits -= 8;
            out += static_cast<char>((buf >> bits) & 0xFF);
        }
    }
    return out;
}

} // namespace capy::text
