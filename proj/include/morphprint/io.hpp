#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace morphprint::io {

/// Shortest round-trip decimal representation; stable across runs.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, std::string_view contents);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> contents);

/// Minimal CSV table: a header row plus rows of cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::size_t col) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    CsvWriter& row(std::span<const double> values);
    CsvWriter& row(const std::vector<std::string>& cells);
    std::string str() const { return out_; }

private:
    std::size_t columns_;
    std::string out_;
};

/// Binary greyscale PGM (P5), row-major, 8 bits per pixel.
std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels);

} // namespace morphprint::io
