#include "cli/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cli/errors.hpp"

namespace momprop::cli {

std::string format_number(double v, int significant) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, significant);
    return {buf.data(), r.ptr};
}

namespace {

void write(std::ostringstream& os, const json& j, bool pretty, int depth) {
    const auto newline = [&](int d) {
        if (pretty) os << '\n' << std::string(static_cast<std::size_t>(2 * d), ' ');
    };
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << '{';
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) os << ',';
                first = false;
                newline(depth + 1);
                os << json(key).dump() << (pretty ? ": " : ":");
                write(os, value, pretty, depth + 1);
            }
            newline(depth);
            os << '}';
            return;
        }
        case json::value_t::array: {
            // Numeric rows stay on one line even when pretty.
            const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
            os << '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << (pretty && flat ? ", " : ",");
                if (!flat) newline(depth + 1);
                write(os, j[i], pretty, depth + 1);
            }
            if (!flat && !j.empty()) newline(depth);
            os << ']';
            return;
        }
        case json::value_t::number_float: {
            const double v = j.get<double>();
            os << (std::isfinite(v) ? format_number(v, pretty ? 4 : 17) : "null");
            return;
        }
        default:
            os << j.dump();
    }
}

std::string pointer_token(const std::string& key) {
    std::string t;
    for (char c : key) {
        if (c == '~') t += "~0";
        else if (c == '/') t += "~1";
        else t += c;
    }
    return t;
}

void collect_nulls(json& j, const std::string& at, const NullReasons& reasons, json& out) {
    if (j.is_object()) {
        for (auto& [key, value] : j.items()) collect_nulls(value, at + "/" + pointer_token(key), reasons, out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) collect_nulls(j[i], at + "/" + std::to_string(i), reasons, out);
    } else if (j.is_null() || (j.is_number_float() && !std::isfinite(j.get<double>()))) {
        const auto it = reasons.find(at);
        std::string why = it != reasons.end() ? it->second : "value is not available";
        if (j.is_number_float()) {
            const double v = j.get<double>();
            if (it == reasons.end()) why = std::isnan(v) ? "not a number" : "infinite";
        }
        j = nullptr;
        out[at] = why;
    }
}

const json& field(const json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) throw InputError(what + ": missing '" + key + "'");
    return j.at(key);
}

double number_from(const json& j, const std::string& what) {
    if (j.is_null()) return std::nan("");
    if (!j.is_number()) throw InputError(what + ": expected a number");
    return j.get<double>();
}

void expect_family(const json& j, const char* family, const std::string& what) {
    if (field(j, "family", what) != family) throw InputError(what + ": expected family '" + family + "'");
}

}  // namespace

std::string dump(const json& doc, bool pretty) {
    std::ostringstream os;
    write(os, doc, pretty, 0);
    return os.str();
}

void finalize(json& doc, const NullReasons& reasons) {
    json found = json::object();
    for (auto& [key, value] : doc.items())
        if (key != "null_reasons") collect_nulls(value, "/" + pointer_token(key), reasons, found);
    doc["null_reasons"] = std::move(found);
}

json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json to_json(const Mat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vec(m.row(i).transpose())));
    return a;
}

Vec vec_from(const json& j, const std::string& what) {
    if (!j.is_array()) throw InputError(what + ": expected an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from(j[i], what);
    return v;
}

Mat mat_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw InputError(what + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Mat m(rows, static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Vec r = vec_from(j[static_cast<std::size_t>(i)], what);
        if (r.size() != m.cols()) throw InputError(what + ": ragged matrix");
        m.row(i) = r.transpose();
    }
    return m;
}

json to_json(const GaussianApprox& a) { return {{"family", "normal"}, {"mean", to_json(a.mean)}, {"cov", to_json(a.cov)}}; }

json to_json(const StudentTApprox& a) {
    return {{"family", "student_t"}, {"loc", to_json(a.loc)}, {"scale", to_json(a.scale)}, {"dof", a.dof}};
}

json to_json(const InverseGammaApprox& a) { return {{"family", "inverse_gamma"}, {"shape", a.shape}, {"scale", a.scale}}; }

json to_json(const InverseWishartApprox& a) {
    return {{"family", "inverse_wishart"}, {"scale_matrix", to_json(a.scale_matrix)}, {"dof", a.dof}};
}

GaussianApprox gaussian_from(const json& j, const std::string& what) {
    expect_family(j, "normal", what);
    return {vec_from(field(j, "mean", what), what + ".mean"), mat_from(field(j, "cov", what), what + ".cov")};
}

StudentTApprox student_t_from(const json& j, const std::string& what) {
    expect_family(j, "student_t", what);
    return {vec_from(field(j, "loc", what), what + ".loc"), mat_from(field(j, "scale", what), what + ".scale"),
            number_from(field(j, "dof", what), what + ".dof")};
}

InverseGammaApprox inverse_gamma_from(const json& j, const std::string& what) {
    expect_family(j, "inverse_gamma", what);
    return {number_from(field(j, "shape", what), what + ".shape"), number_from(field(j, "scale", what), what + ".scale")};
}

InverseWishartApprox inverse_wishart_from(const json& j, const std::string& what) {
    expect_family(j, "inverse_wishart", what);
    return {mat_from(field(j, "scale_matrix", what), what + ".scale_matrix"),
            number_from(field(j, "dof", what), what + ".dof")};
}

json to_json(const MomentSummary& s, bool has_scalar, bool has_matrix, NullReasons& reasons, const std::string& at) {
    json j{{"mean", to_json(s.mean)}, {"cov", to_json(s.cov)}};
    const std::string undefined = "moment does not exist for the fitted parameters";
    if (!s.cov.allFinite()) {
        j["cov"] = nullptr;
        reasons[at + "/cov"] = undefined;
    }
    if (has_scalar) {
        j["scalar_mean"] = s.scalar_mean ? json(*s.scalar_mean) : json(nullptr);
        j["scalar_var"] = s.scalar_var ? json(*s.scalar_var) : json(nullptr);
        if (!s.scalar_mean) reasons[at + "/scalar_mean"] = undefined;
        if (!s.scalar_var) reasons[at + "/scalar_var"] = undefined;
    }
    if (has_matrix) {
        j["matrix_mean"] = s.matrix_mean ? to_json(*s.matrix_mean) : json(nullptr);
        j["matrix_var_diag"] = s.matrix_var_diag ? to_json(*s.matrix_var_diag) : json(nullptr);
        if (!s.matrix_mean) reasons[at + "/matrix_mean"] = undefined;
        if (!s.matrix_var_diag) reasons[at + "/matrix_var_diag"] = undefined;
    }
    if (s.mean_se) j["mean_se"] = to_json(*s.mean_se);
    return j;
}

}  // namespace momprop::cli
