#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace barrier_lab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using VectorField = std::function<Vector(const Vector&)>;
using MatrixField = std::function<Matrix(const Vector&)>;
using ScalarField = std::function<double(const Vector&)>;
using RealFunction = std::function<double(double)>;

// Error hierarchy. Every failure mode named by an operation contract maps to
// exactly one of these, so callers can dispatch on type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class StructuralError : public Error {
public:
    using Error::Error;
};

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, int most_violated_row)
        : Error(what), most_violated_row_(most_violated_row) {}
    int most_violated_row() const { return most_violated_row_; }

private:
    int most_violated_row_;
};

class DefinitenessError : public Error {
public:
    using Error::Error;
};

class StrictFeasibilityError : public Error {
public:
    using Error::Error;
};

class NotOnBoundaryError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class AssumptionViolation : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// Central-difference gradient of a scalar field, step `rel_step * (1 + |x_i|)`.
Vector fd_gradient(const ScalarField& f, const Vector& x, double rel_step = 1e-5);

/// Central-difference Jacobian of a vector field, step `rel_step * (1 + |x_i|)`.
Matrix fd_matrix(const VectorField& f, const Vector& x, double rel_step = 1e-5);

/// Worker count: hardware concurrency capped by BARRIER_LAB_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index is
/// visited exactly once; results must be written to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace barrier_lab
