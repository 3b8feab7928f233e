#pragma once

#include <stdexcept>
#include <string>

namespace momprop::cli {

// Exit status 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Exit status 3: unreadable/unwritable files, malformed input documents.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Row and column are 1-based; row 1 is the header.
class CsvError : public InputError {
public:
    CsvError(const std::string& source, int row, int col, const std::string& what)
        : InputError(source + ":" + std::to_string(row) + ":" + std::to_string(col) + ": " + what),
          row_(row), col_(col) {}
    int row() const noexcept { return row_; }
    int col() const noexcept { return col_; }

private:
    int row_;
    int col_;
};

}  // namespace momprop::cli
