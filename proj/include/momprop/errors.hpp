#pragma once

#include <stdexcept>
#include <string>

namespace momprop {

// Bad arguments: non-finite input, wrong dimensions, out-of-range parameters.
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A requested moment does not exist for the given parameters.
class undefined_moment : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Cholesky failure, singular system, rank-deficient design.
class linalg_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class numeric_error : public std::runtime_error {
public:
    numeric_error(const std::string& what, double last_iterate)
        : std::runtime_error(what), last_(last_iterate) {}
    double last_iterate() const noexcept { return last_; }

private:
    double last_;
};

}  // namespace momprop
