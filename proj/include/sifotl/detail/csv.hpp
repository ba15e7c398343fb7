#ifndef SIFOTL_DETAIL_CSV_HPP
#define SIFOTL_DETAIL_CSV_HPP

#include <sifotl/errors.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sifotl::detail {

using CsvRecord = std::vector<std::string>;

// RFC-4180 reader: quoted fields, doubled quotes, embedded separators and
// line breaks, CRLF or LF record endings. A trailing empty line is ignored.
inline std::vector<CsvRecord> parse_csv(std::string_view text, char sep = ',') {
    std::vector<CsvRecord> records;
    CsvRecord record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };

    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == sep) {
            end_field();
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            continue;
        } else if (c == '\n') {
            end_record();
            ++line;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw ValidationError("csv: unterminated quoted field near line " + std::to_string(line));
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string csv_escape(std::string_view field, char sep = ',') {
    if (field.find_first_of(std::string{sep, '"', '\n', '\r'}) == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void append_csv_record(std::string& out, const CsvRecord& record, char sep = ',') {
    for (std::size_t i = 0; i < record.size(); ++i) {
        if (i) out.push_back(sep);
        out += csv_escape(record[i], sep);
    }
    out.push_back('\n');
}

} // namespace sifotl::detail

#endif
