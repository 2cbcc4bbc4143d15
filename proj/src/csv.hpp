#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace atxf::csv {

// RFC 4180 reader: comma separated, double-quoted fields may contain commas,
// newlines and doubled quotes. Returns nullopt at end of input.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::optional<std::vector<std::string>> next_row();
    // 1-based line number where the last returned row started.
    std::size_t line() const noexcept { return row_line_; }
    // True when the last row ended inside an unterminated quoted field.
    bool last_row_malformed() const noexcept { return malformed_; }

private:
    std::istream& in_;
    std::size_t line_ = 1;
    std::size_t row_line_ = 0;
    bool malformed_ = false;
};

}  // namespace atxf::csv
