#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <momprop/moments.hpp>

#include "cli/errors.hpp"

namespace momprop::cli {

struct Table {
    std::vector<std::string> header;
    Mat values;                    // rows x header.size()
    std::vector<int> source_rows;  // input line of each data row

    // Index of a named column, or -1.
    int column(const std::string& name) const;
};

Table parse_csv(std::istream& in, const std::string& source);
Table read_csv(const std::filesystem::path& path);

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Mat& values);

struct Regression {
    Vec y;
    Mat X;
    std::vector<std::string> predictors;
};

// Response column "y", every other column a predictor.  With no predictor
// columns, or with intercept set, a leading column of ones named "(intercept)".
// binary_response rejects y values other than 0 and 1.
Regression regression_from(const Table& t, const std::string& source, bool intercept, bool binary_response);

}  // namespace momprop::cli
