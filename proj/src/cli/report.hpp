#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include <momprop/fit.hpp>

namespace momprop::cli {

using json = nlohmann::ordered_json;

// JSON pointer -> reason, for values that are null in the emitted document.
using NullReasons = std::map<std::string, std::string>;

inline constexpr int report_schema = 1;

std::string format_number(double v, int significant);

// Machine form: compact, 17 significant digits.  Pretty: indented, 4.
std::string dump(const json& doc, bool pretty);

// Non-finite numbers become null; every null gets a reason under "null_reasons".
void finalize(json& doc, const NullReasons& reasons);

json to_json(const Vec& v);
json to_json(const Mat& m);
Vec vec_from(const json& j, const std::string& what);
Mat mat_from(const json& j, const std::string& what);

json to_json(const GaussianApprox& a);
json to_json(const StudentTApprox& a);
json to_json(const InverseGammaApprox& a);
json to_json(const InverseWishartApprox& a);
GaussianApprox gaussian_from(const json& j, const std::string& what);
StudentTApprox student_t_from(const json& j, const std::string& what);
InverseGammaApprox inverse_gamma_from(const json& j, const std::string& what);
InverseWishartApprox inverse_wishart_from(const json& j, const std::string& what);

// Absent optional moments that the model defines are written as null with a
// reason recorded under `at`.
json to_json(const MomentSummary& s, bool has_scalar, bool has_matrix, NullReasons& reasons, const std::string& at);

}  // namespace momprop::cli
