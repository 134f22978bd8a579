#pragma once

#include <string>
#include <vector>

namespace reglgc {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by exact name; throws ValidationError if absent.
    std::size_t column(const std::string& name) const;
};

// RFC-4180-ish reader: handles quoted fields, embedded commas/quotes, CRLF.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

// Shortest-representation float formatting shared by every artifact writer,
// so identical values always print identically.
std::string format_double(double v);

std::string csv_escape(const std::string& field);

// Atomic-ish text write (fails loudly, no partial lines on success path).
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace reglgc
