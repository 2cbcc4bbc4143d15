#include "csv.hpp"

namespace atxf::csv {

std::optional<std::vector<std::string>> Reader::next_row() {
    int c = in_.get();
    if (c == EOF) return std::nullopt;
    row_line_ = line_;
    malformed_ = false;

    std::vector<std::string> fields(1);
    bool quoted = false;
    bool field_start = true;
    for (; c != EOF; c = in_.get()) {
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    fields.back().push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line_;
                fields.back().push_back(ch);
            }
            continue;
        }
        if (ch == '"' && field_start) {
            quoted = true;
            field_start = false;
        } else if (ch == ',') {
            fields.emplace_back();
            field_start = true;
        } else if (ch == '\r' && in_.peek() == '\n') {
            continue;
        } else if (ch == '\n') {
            ++line_;
            return fields;
        } else {
            fields.back().push_back(ch);
            field_start = false;
        }
    }
    malformed_ = quoted;
    return fields;
}

}  // namespace atxf::csv
