#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "fedids/dataio.hpp"

namespace fedids::dataio {
namespace {

struct Record {
    std::vector<std::string> fields;
    std::vector<bool> quoted;
    std::size_t line = 0;  // 1-based line where the record starts
};

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t");
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(" \t");
    return std::string(s.substr(begin, end - begin + 1));
}

bool is_missing_token(const std::string& s) {
    if (s.empty() || s == "?") return true;
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower == "na" || lower == "nan" || lower == "null";
}

// RFC-4180 reader: quoted fields may contain commas, doubled quotes and newlines.
std::vector<Record> read_records(const std::string& text, const std::string& source) {
    std::vector<Record> records;
    Record current;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    std::size_t line = 1;
    current.line = 1;

    auto end_field = [&] {
        current.fields.push_back(field_quoted ? field : trim(field));
        current.quoted.push_back(field_quoted);
        field.clear();
        field_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        bool blank = current.fields.size() == 1 && current.fields[0].empty() && !current.quoted[0];
        if (!blank) records.push_back(std::move(current));
        current = Record{};
        current.line = line;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
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
        switch (c) {
            case '"':
                if (trim(field).empty()) {
                    field.clear();
                    in_quotes = true;
                    field_quoted = true;
                } else {
                    field.push_back(c);
                }
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                ++line;
                end_record();
                break;
            default:
                field.push_back(c);
        }
    }
    if (in_quotes) throw DataError("unterminated quoted field", source);
    if (!field.empty() || !current.fields.empty() || field_quoted) end_record();
    return records;
}

}  // namespace

RawTable parse_csv(const std::string& text, const SchemaConfig& schema, const std::string& source) {
    schema.validate();
    auto records = read_records(text, source);

    RawTable table;
    table.source = source;
    std::size_t first_data = 0;
    if (schema.header_row) {
        if (records.empty()) throw DataError("file is empty; expected a header row", source);
        table.headers = records[0].fields;
        first_data = 1;

        std::set<std::string> seen;
        for (const auto& h : table.headers) {
            if (!seen.insert(h).second) throw DataError("duplicate header column '" + h + "'", source);
        }
        std::vector<std::string> missing;
        for (const auto& col : schema.columns) {
            if (!seen.count(col.name)) missing.push_back(col.name);
        }
        std::vector<std::string> extra;
        for (const auto& h : table.headers) {
            bool known = std::any_of(schema.columns.begin(), schema.columns.end(),
                                     [&](const ColumnSpec& c) { return c.name == h; });
            if (!known) extra.push_back(h);
        }
        if (!missing.empty() || !extra.empty()) {
            std::ostringstream msg;
            msg << "header does not match schema '" << schema.dataset_name << "'";
            if (!missing.empty()) {
                msg << "; missing from file:";
                for (const auto& m : missing) msg << " " << m;
            }
            if (!extra.empty()) {
                msg << "; not in schema:";
                for (const auto& e : extra) msg << " " << e;
            }
            throw DataError(msg.str(), source);
        }
    } else {
        for (const auto& col : schema.columns) table.headers.push_back(col.name);
    }

    const std::size_t width = table.headers.size();
    table.rows.reserve(records.size() - first_data);
    for (std::size_t r = first_data; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::size_t data_row = r - first_data + 1;
        if (rec.fields.size() != width) {
            std::ostringstream msg;
            msg << "ragged row at line " << rec.line << ": expected " << width << " cells, found "
                << rec.fields.size();
            throw DataError(msg.str(), source, data_row);
        }
        std::vector<Cell> cells;
        cells.reserve(width);
        for (std::size_t c = 0; c < width; ++c) {
            const auto& f = rec.fields[c];
            if (!rec.quoted[c] && is_missing_token(f)) {
                cells.emplace_back(std::nullopt);
            } else if (rec.quoted[c] && f.empty()) {
                cells.emplace_back(std::nullopt);
            } else {
                cells.emplace_back(f);
            }
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

RawTable load_dataset(const std::filesystem::path& path, const SchemaConfig& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("dataset file not found or unreadable", path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), schema, path.string());
}

}  // namespace fedids::dataio
