#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace quadmed {

using json = nlohmann::ordered_json;

// Rows of a TSV file after header validation. Every row has exactly
// header.size() fields; `line` is the 1-based line number in the file.
struct TsvRow {
    std::size_t line;
    std::vector<std::string> fields;
};

// Reads a TSV file whose first line must equal the expected header.
// Throws NotFoundError on a missing file, ParseError on a wrong header or
// field count.
std::vector<TsvRow> read_tsv(const std::filesystem::path& path,
                             const std::vector<std::string>& header);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// Calls fn(line_number, parsed_json) for each line. Blank lines are errors.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

// Hex SHA-256 of a byte string / file content.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace quadmed
