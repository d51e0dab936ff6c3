#pragma once

#include <stdexcept>
#include <string>

namespace bfn {

// Every library error carries a short machine-readable category; the CLI
// prints it as the first token of its one-line failure message.
class error : public std::runtime_error {
public:
    error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct shape_error : error {
    explicit shape_error(const std::string& what) : error("shape", what) {}
};

struct validation_error : error {
    explicit validation_error(const std::string& what) : error("validation", what) {}
};

struct convergence_error : error {
    convergence_error(const std::string& what, double off_diagonal)
        : error("convergence", what), off_diagonal_norm(off_diagonal) {}
    double off_diagonal_norm;
};

struct singular_error : error {
    explicit singular_error(const std::string& what) : error("singular", what) {}
};

struct infeasible_error : error {
    explicit infeasible_error(const std::string& what) : error("infeasible", what) {}
};

struct padding_required_error : error {
    explicit padding_required_error(const std::string& what) : error("padding", what) {}
};

struct training_error : error {
    explicit training_error(const std::string& what) : error("training", what) {}
};

struct nondeterminism_error : error {
    explicit nondeterminism_error(const std::string& what) : error("nondeterministic", what) {}
};

struct config_error : error {
    explicit config_error(const std::string& what) : error("config", what) {}
};

struct io_error : error {
    explicit io_error(const std::string& what) : error("io", what) {}
};

// File-format failures; the category distinguishes the variant.
struct format_error : error {
    using error::error;
};

struct bad_magic_error : format_error {
    explicit bad_magic_error(const std::string& what) : format_error("bad_magic", what) {}
};

struct bad_version_error : format_error {
    explicit bad_version_error(const std::string& what) : format_error("bad_version", what) {}
};

struct truncated_error : format_error {
    explicit truncated_error(const std::string& what) : format_error("truncated", what) {}
};

struct checksum_error : format_error {
    explicit checksum_error(const std::string& what) : format_error("checksum", what) {}
};

}  // namespace bfn
