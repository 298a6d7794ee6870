#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mae {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr cplx I{0.0, 1.0};

/// Base class for all engine errors; subcommands map these to exit code 1,
/// input validation errors to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};

/// to_polar / transition requested on the deleted hyperplane z^axis = 0.
struct ChartSingular : Error {
  using Error::Error;
};

/// Frame/coordinate-field evaluation at the exceptional-divisor core zeta = 0.
struct CoreSingular : Error {
  using Error::Error;
};

/// det(I - conj(phi) phi) fell below the nondegeneracy floor.
struct Degenerate : Error {
  using Error::Error;
};

/// CFL violation or non-monotone continuation outcome.
struct Unstable : Error {
  using Error::Error;
};

struct NotPseudoconvex : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct PoleCollision : Error {
  using Error::Error;
};

struct NoConvergence : Error {
  using Error::Error;
};

inline double sq(double x) { return x * x; }

}  // namespace mae
