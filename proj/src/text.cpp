#include "setcomp/text.hpp"

#include "setcomp/error.hpp"

namespace setcomp {

std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, std::string_view delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (auto pos = s.find(delim); pos != std::string_view::npos; pos = s.find(delim, start)) {
        out.push_back(s.substr(start, pos - start));
        start = pos + delim.size();
    }
    out.push_back(s.substr(start));
    return out;
}

std::ofstream open_output(const std::filesystem::path& path, std::string_view what) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + std::string(what) + ": " + path.string());
    return out;
}

}  // namespace setcomp
