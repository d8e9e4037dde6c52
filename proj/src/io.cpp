#include "morphprint/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "morphprint/mesh.hpp"

namespace morphprint::io {

std::string format_double(double value)
{
    if (value == 0.0) {
        return "0";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) {
        throw Error("format_double: conversion failed");
    }
    return std::string(buf, ptr);
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    const std::string text = read_text(path);
    return {text.begin(), text.end()};
}

void write_text(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> contents)
{
    write_text(path, std::string_view(reinterpret_cast<const char*>(contents.data()), contents.size()));
}

std::size_t CsvTable::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw ParseError("csv: missing column '" + std::string(name) + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const
{
    const std::string& cell = rows.at(row).at(col);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError("csv: row " + std::to_string(row + 1) + " column " + std::to_string(col + 1) +
                         ": not a number: '" + cell + "'");
    }
    return value;
}

namespace {

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

} // namespace

CsvTable parse_csv(std::string_view text)
{
    CsvTable table;
    std::size_t pos = 0;
    bool have_header = false;
    std::size_t line_no = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (trim(line).empty() || trim(line).front() == '#') {
            continue;
        }
        auto cells = split_row(line);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw ParseError("csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (!have_header) {
        throw ParseError("csv: empty input");
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size())
{
    row(header);
}

CsvWriter& CsvWriter::row(std::span<const double> values)
{
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) {
        cells.push_back(format_double(v));
    }
    return row(cells);
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells)
{
    if (cells.size() != columns_) {
        throw Error("csv: row width " + std::to_string(cells.size()) + " != " + std::to_string(columns_));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) {
            out_ += ',';
        }
        out_ += cells[i];
    }
    out_ += '\n';
    return *this;
}

std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels)
{
    if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw Error("pgm: pixel count does not match dimensions");
    }
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return out;
}

} // namespace morphprint::io
