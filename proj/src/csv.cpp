#include "dst/csv.hpp"

#include "dst/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dst {

namespace {

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
        out.emplace_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

std::string provenance_line(const Provenance& p) {
    return "# " + std::string(kToolName) + " " + std::string(kToolVersion) + " config_hash=" + p.config_hash +
           " seed=" + std::to_string(p.seed);
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw ParseError("csv: missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text, std::string_view source) {
    CsvTable table;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') {
            if (nl == text.size()) break;
            continue;
        }
        auto fields = split_fields(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != table.header.size()) {
                throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(table.header.size()) + " fields, got " + std::to_string(fields.size()));
            }
            table.rows.push_back(std::move(fields));
        }
        if (nl == text.size()) break;
    }
    if (!have_header) throw ParseError(std::string(source) + ": missing header");
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    return parse_csv(read_text_file(path), path.string());
}

void require_header(const CsvTable& table, const std::vector<std::string>& expected, std::string_view source) {
    if (table.header != expected) {
        std::string want;
        for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
        throw ParseError(std::string(source) + ": expected header '" + want + "'");
    }
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::string_view what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ParseError("cannot parse " + std::string(what) + " '" + std::string(text) + "' as a number");
    }
    return v;
}

long long parse_int(std::string_view text, std::string_view what) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ParseError("cannot parse " + std::string(what) + " '" + std::string(text) + "' as an integer");
    }
    return v;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ParseError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace dst
