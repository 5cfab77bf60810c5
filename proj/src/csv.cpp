#include "distil/csv.hpp"

#include "distil/errors.hpp"

namespace distil {

char sniff_delimiter(std::string_view text) {
    auto eol = text.find('\n');
    std::string_view header = text.substr(0, eol);
    return header.find('\t') != std::string_view::npos ? '\t' : ',';
}

std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };

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
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == delimiter) {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw IoError("unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

}  // namespace distil
