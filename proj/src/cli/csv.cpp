#include "cli/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "cli/report.hpp"

namespace momprop::cli {

namespace {

struct Record {
    std::vector<std::string> fields;
    int line = 0;  // physical line the record starts on
};

// RFC 4180 records: quoted fields may hold commas, newlines and doubled quotes.
class RecordReader {
public:
    RecordReader(std::istream& in, const std::string& source) : in_(in), source_(source) {}

    bool next(Record& rec) {
        rec.fields.clear();
        rec.line = line_ + 1;
        std::string field;
        bool quoted = false, any = false;
        int c;
        while ((c = in_.get()) != EOF) {
            any = true;
            if (quoted) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        field += '"';
                        in_.get();
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') ++line_;
                    field += static_cast<char>(c);
                }
                continue;
            }
            if (c == '"') {
                if (!field.empty())
                    throw CsvError(source_, rec.line, static_cast<int>(rec.fields.size()) + 1, "quote inside an unquoted field");
                quoted = true;
            } else if (c == ',') {
                rec.fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\r' && in_.peek() == '\n') {
                // CR of a CRLF pair
            } else if (c == '\n') {
                ++line_;
                rec.fields.push_back(std::move(field));
                return true;
            } else {
                field += static_cast<char>(c);
            }
        }
        if (quoted) throw CsvError(source_, rec.line, static_cast<int>(rec.fields.size()) + 1, "unterminated quoted field");
        if (!any) return false;
        ++line_;
        rec.fields.push_back(std::move(field));
        return true;
    }

private:
    std::istream& in_;
    const std::string& source_;
    int line_ = 0;
};

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

bool blank(const Record& r) { return r.fields.size() == 1 && trim(r.fields[0]).empty(); }

}  // namespace

int Table::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

Table parse_csv(std::istream& in, const std::string& source) {
    RecordReader reader(in, source);
    Record rec;
    Table t;
    if (!reader.next(rec) || blank(rec)) throw CsvError(source, 1, 1, "missing header row");
    for (std::size_t j = 0; j < rec.fields.size(); ++j) {
        const std::string name(trim(rec.fields[j]));
        if (name.empty()) throw CsvError(source, 1, static_cast<int>(j) + 1, "empty column name");
        if (std::find(t.header.begin(), t.header.end(), name) != t.header.end())
            throw CsvError(source, 1, static_cast<int>(j) + 1, "duplicate column name '" + name + "'");
        t.header.push_back(name);
    }

    const auto cols = t.header.size();
    std::vector<double> cells;
    while (reader.next(rec)) {
        if (blank(rec)) continue;
        const int row = rec.line;
        t.source_rows.push_back(row);
        if (rec.fields.size() != cols)
            throw CsvError(source, row, static_cast<int>(std::min(rec.fields.size(), cols) + 1),
                           "expected " + std::to_string(cols) + " fields, found " + std::to_string(rec.fields.size()));
        for (std::size_t j = 0; j < cols; ++j) {
            const auto text = trim(rec.fields[j]);
            double v = 0.0;
            const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (text.empty() || ec != std::errc() || end != text.data() + text.size())
                throw CsvError(source, row, static_cast<int>(j) + 1, "not a number: '" + std::string(text) + "'");
            if (!std::isfinite(v)) throw CsvError(source, row, static_cast<int>(j) + 1, "non-finite value");
            cells.push_back(v);
        }
    }
    const auto rows = static_cast<Eigen::Index>(cells.size() / cols);
    t.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cells.data(), rows, static_cast<Eigen::Index>(cols));
    return t;
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return parse_csv(in, path.string());
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Mat& values) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_number(values(i, j), 17);
        out << '\n';
    }
}

Regression regression_from(const Table& t, const std::string& source, bool intercept, bool binary_response) {
    const int yc = t.column("y");
    if (yc < 0) throw CsvError(source, 1, 1, "no response column named 'y'");
    if (t.values.rows() == 0) throw CsvError(source, 2, 1, "no data rows");

    Regression r;
    r.y = t.values.col(yc);
    if (binary_response)
        for (Eigen::Index i = 0; i < r.y.size(); ++i)
            if (r.y[i] != 0.0 && r.y[i] != 1.0)
                throw CsvError(source, t.source_rows[static_cast<std::size_t>(i)], yc + 1, "response must be 0 or 1");

    std::vector<int> keep;
    for (int j = 0; j < static_cast<int>(t.header.size()); ++j)
        if (j != yc) keep.push_back(j);
    const bool add_ones = intercept || keep.empty();
    r.X.resize(t.values.rows(), static_cast<Eigen::Index>(keep.size()) + (add_ones ? 1 : 0));
    Eigen::Index col = 0;
    if (add_ones) {
        r.X.col(col++).setOnes();
        r.predictors.emplace_back("(intercept)");
    }
    for (int j : keep) {
        r.X.col(col++) = t.values.col(j);
        r.predictors.push_back(t.header[static_cast<std::size_t>(j)]);
    }
    return r;
}

}  // namespace momprop::cli
