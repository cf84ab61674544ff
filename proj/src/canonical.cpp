#include "fifa/canonical.hpp"

#include <cctype>
#include <charconv>
#include <array>
#include <string_view>
#include <vector>

#include "fifa/errors.hpp"
#include "fifa/hash.hpp"

namespace fifa {

std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::uint64_t prompt_id_of(std::string_view prompt_text) {
    return fnv1a64(trim(prompt_text));
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) throw Error("format_double: to_chars failed");
    return std::string(buf.data(), ptr);
}

std::string canonical_bytes(const FilterConfig& c) {
    std::string out;
    out += format_double(c.alpha);
    out += '\n';
    out += format_double(c.gamma);
    out += '\n';
    out += std::to_string(c.k_select);
    out += '\n';
    out += std::to_string(c.knn_k);
    out += '\n';
    out += std::to_string(c.prompt_cap);
    out += '\n';
    out += std::to_string(c.seed);
    out += '\n';
    out += format_double(c.distance_floor);
    return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto nl = s.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.push_back(s.substr(pos));
            break;
        }
        out.push_back(s.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return out;
}

double parse_real(std::string_view f) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size())
        throw ConfigError("bad real field: " + std::string(f));
    return v;
}

std::uint64_t parse_uint(std::string_view f) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size())
        throw ConfigError("bad integer field: " + std::string(f));
    return v;
}

}  // namespace

FilterConfig parse_canonical(const std::string& bytes) {
    auto fields = split_lines(bytes);
    if (fields.size() != 7)
        throw ConfigError("canonical config must have 7 fields, got " +
                          std::to_string(fields.size()));
    FilterConfig c;
    c.alpha = parse_real(fields[0]);
    c.gamma = parse_real(fields[1]);
    c.k_select = parse_uint(fields[2]);
    c.knn_k = parse_uint(fields[3]);
    c.prompt_cap = parse_uint(fields[4]);
    c.seed = parse_uint(fields[5]);
    c.distance_floor = parse_real(fields[6]);
    return c;
}

std::uint64_t config_hash(const FilterConfig& config) {
    return fnv1a64(canonical_bytes(config));
}

}  // namespace fifa
