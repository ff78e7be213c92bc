#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sigk {

using domain_error = std::domain_error;

/// Linear solve failed (singular or ill-conditioned system).
struct solver_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An augmented spectrum left the admissible cone.
struct cone_exit_error : std::runtime_error {
    std::size_t node;
    cone_exit_error(const std::string& what, std::size_t node_index)
        : std::runtime_error(what), node(node_index) {}
};

/// Fixed-point iteration stopped contracting.
struct non_contraction_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Continuation could not advance; carries the last accepted parameter.
struct path_error : std::runtime_error {
    double last_good;
    path_error(const std::string& what, double last)
        : std::runtime_error(what), last_good(last) {}
};

/// Reference construction failed.
struct oracle_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace sigk
